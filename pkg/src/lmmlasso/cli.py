"""Command-line front end.

Subcommands: fit, select, simulate, cv, reduce.  Option precedence is
command-line flags over a JSON config file (--config) over built-in
defaults; the defaults mirror the benchmark setup (stopping tolerance
1e-6, linear grid 0.001..0.5 with 100 points interpreted in
per-observation units, BIC criterion).  All artifacts are written
atomically with 17-significant-digit numbers so reruns can be compared
byte for byte.

Exit codes: 0 success, 2 usage or configuration, 3 data, 4 numerical.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from .dataset import (
    ColumnRoles,
    ingest_long_csv,
    remove_linear_combos,
    standardize,
)
from .em_engine import EmControl, fit_em
from .penalized_ls import PenaltySpec
from .exceptions import ConfigurationError, LmmLassoError
from .fileio import write_csv, write_json
from .selector import auto_log_grid, select
from .simkit import (
    D_HIGH,
    D_LOW,
    ScenarioConfig,
    kfold_cv,
    run_monte_carlo,
    write_cv_csv,
    write_mc_detail_csv,
    write_mc_summary_csv,
)

_DEFAULTS = {
    "lambda_scale": "per_obs",
    "criterion": "bic",
    "penalty": "lasso",
    "alpha": 1.0,
    "eps": 1e-6,
    "max_iter": 500,
    "pls_tol": 1e-9,
    "pls_max_sweeps": 10000,
    "grid": "0.001:0.5:100",
    "threads": 1,
    "rank_tol": 1e-7,
    "standardize": False,
    "scale_y": True,
    "categorical": "",
}


@dataclass
class RunConfig:
    """Merged options for one CLI invocation."""

    command: str
    options: dict

    def __getitem__(self, key):
        return self.options[key]

    def get(self, key, default=None):
        return self.options.get(key, default)


def _merge_options(args: argparse.Namespace) -> RunConfig:
    file_cfg = {}
    if getattr(args, "config", None):
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except OSError as e:
            raise ConfigurationError(f"cannot read config file: {e}") from None
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config file is not valid JSON: {e}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigurationError("config file must hold a JSON object")

    merged = {}
    for key, value in vars(args).items():
        if key in ("command", "config", "func"):
            continue
        if value is not None:
            merged[key] = value
        elif key in file_cfg:
            merged[key] = file_cfg[key]
        elif key in _DEFAULTS:
            merged[key] = _DEFAULTS[key]
        else:
            merged[key] = None
    return RunConfig(args.command, merged)


def _parse_grid(spec) -> np.ndarray:
    if isinstance(spec, (list, tuple)):
        values = np.asarray([float(v) for v in spec], dtype=float)
    else:
        spec = str(spec).strip()
        if not spec:
            raise ConfigurationError("empty grid specification")
        if ":" in spec:
            parts = spec.split(":")
            if len(parts) != 3:
                raise ConfigurationError(
                    f"grid {spec!r} must be start:stop:num or a comma list")
            try:
                lo, hi, num = float(parts[0]), float(parts[1]), int(parts[2])
            except ValueError:
                raise ConfigurationError(f"malformed grid {spec!r}") from None
            if num < 1:
                raise ConfigurationError("grid length must be >= 1")
            values = np.linspace(lo, hi, num)
        else:
            try:
                values = np.asarray([float(v) for v in spec.split(",") if v != ""])
            except ValueError:
                raise ConfigurationError(f"malformed grid {spec!r}") from None
    if values.size == 0:
        raise ConfigurationError("empty grid specification")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise ConfigurationError("grid values must be finite and >= 0")
    return values


def _roles_from(cfg: RunConfig) -> ColumnRoles:
    for key in ("subject", "response", "fixed", "random"):
        if not cfg.get(key):
            raise ConfigurationError(f"missing required column mapping --{key}")
    fixed = [c.strip() for c in str(cfg["fixed"]).split(",") if c.strip()]
    random = str(cfg["random"])
    if random.startswith("intercept+"):
        roles_random = random
    else:
        roles_random = [c.strip() for c in random.split(",") if c.strip()]
    return ColumnRoles.from_mapping({
        "subject": cfg["subject"], "response": cfg["response"],
        "fixed": fixed, "random": roles_random,
    })


def _load_dataset(cfg: RunConfig):
    roles = _roles_from(cfg)
    ds = ingest_long_csv(cfg["input"], roles)
    if cfg.get("standardize"):
        cat_names = [c.strip() for c in str(cfg.get("categorical") or "").split(",")
                     if c.strip()]
        unknown = [c for c in cat_names if c not in ds.x_names]
        if unknown:
            raise ConfigurationError(f"categorical column(s) not in fixed set: {unknown}")
        ds = standardize(ds, categorical=[ds.x_names.index(c) for c in cat_names],
                         scale_y=bool(cfg.get("scale_y", True)))
    return ds


def _ctrl_from(cfg: RunConfig) -> EmControl:
    return EmControl(eps=float(cfg["eps"]), max_iter=int(cfg["max_iter"]),
                     pls_tol=float(cfg["pls_tol"]),
                     pls_max_sweeps=int(cfg["pls_max_sweeps"]))


def _penalty_from(cfg: RunConfig):
    family = cfg["penalty"]
    if family == "lasso":
        return PenaltySpec.lasso(0.0)
    if family == "elastic_net":
        return PenaltySpec.elastic_net(float(cfg["alpha"]), 0.0)
    raise ConfigurationError(f"unknown penalty family {family!r}")


def _resolve_grid(cfg: RunConfig, ds):
    if cfg.get("grid_log"):
        parts = str(cfg["grid_log"]).split(":")
        if len(parts) != 2:
            raise ConfigurationError("--grid-log must be num:ratio")
        num, ratio = int(parts[0]), float(parts[1])
        return auto_log_grid(ds, num=num, ratio=ratio,
                             lambda_scale=cfg["lambda_scale"])
    return _parse_grid(cfg["grid"])


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_fit(cfg: RunConfig) -> int:
    if cfg.get("lam") is None:
        raise ConfigurationError("fit requires --lambda")
    ds = _load_dataset(cfg)
    rep = fit_em(ds, float(cfg["lam"]), penalty=_penalty_from(cfg),
                 ctrl=_ctrl_from(cfg), lambda_scale=cfg["lambda_scale"])
    out = rep.to_dict()
    out["x_names"] = ds.x_names
    out["n_subjects"] = ds.n
    out["n_obs"] = ds.N
    write_json(cfg["output"], out)
    print(f"fit: lambda={cfg['lam']} converged={rep.converged} "
          f"iterations={rep.iterations} loglik={rep.final_loglik:.6f}")
    return 0


def cmd_select(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg)
    grid = _resolve_grid(cfg, ds)
    res = select(ds, grid, penalty=_penalty_from(cfg), ctrl=_ctrl_from(cfg),
                 lambda_scale=cfg["lambda_scale"], criterion=cfg["criterion"])

    prefix = cfg["output_prefix"]
    write_csv(f"{prefix}_path.csv",
              ("lambda", "bic", "aic", "df", "nnz", "converged"),
              [(lam, b, a, d, nz, str(c))
               for (lam, b, a, d, nz, c) in res.path.csv_rows()])

    selection = {
        "selected_lambda": res.selected_lambda,
        "lambda_scale": cfg["lambda_scale"],
        "criterion": cfg["criterion"],
        "support": list(res.support),
        "support_names": [ds.x_names[j] for j in res.support],
        "penalized_estimates": res.penalized.params.to_dict(),
        "refit_estimates": res.refit.params.to_dict(),
        "refit_converged": res.refit.converged,
    }
    if res.refit.original_scale is not None:
        selection["refit_original_scale"] = res.refit.original_scale
    write_json(f"{prefix}_selection.json", selection)

    print(f"selected lambda: {res.selected_lambda}")
    print(f"support ({len(res.support)} of {ds.p}): "
          + (", ".join(selection["support_names"]) or "(empty)"))
    beta = res.refit.params.beta
    for j in res.support:
        print(f"  {ds.x_names[j]}: {beta[j]:+.6f}")
    print(f"artifacts: {prefix}_path.csv {prefix}_selection.json")
    return 0


def cmd_simulate(cfg: RunConfig) -> int:
    if cfg.get("seed") is None:
        raise ConfigurationError("simulate requires --seed")
    d_choice = str(cfg.get("d_matrix") or "low")
    if d_choice not in ("low", "high"):
        raise ConfigurationError("--d-matrix must be 'low' or 'high'")
    kw = dict(n=int(cfg["n"]), n_i=int(cfg["n_i"]), seed=int(cfg["seed"]))
    scenario = int(cfg["scenario"])
    if scenario == 1:
        sc = ScenarioConfig.scenario1(**kw)
    elif scenario == 2:
        sc = ScenarioConfig.scenario2(**kw)
    elif scenario == 3:
        sc = ScenarioConfig.scenario3(p=int(cfg["p"]), p_star=int(cfg["p_star"]),
                                      D_true=D_LOW if d_choice == "low" else D_HIGH,
                                      **kw)
    else:
        raise ConfigurationError("--scenario must be 1, 2, or 3")

    summary = run_monte_carlo(sc, int(cfg["replicates"]),
                              grid=_parse_grid(cfg["grid"]),
                              ctrl=_ctrl_from(cfg),
                              lambda_scale=cfg["lambda_scale"],
                              criterion=cfg["criterion"],
                              n_jobs=int(cfg["threads"]))
    prefix = cfg["output_prefix"]
    write_mc_summary_csv(summary, sc, f"{prefix}_summary.csv")
    write_mc_detail_csv(summary, f"{prefix}_detail.csv")
    sens = "NA" if summary.sensitivity is None else f"{summary.sensitivity:.3f}"
    spec = "NA" if summary.specificity is None else f"{summary.specificity:.3f}"
    print(f"scenario {scenario}: replicates={summary.replicates} "
          f"failures={summary.failures} rmse={summary.rmse:.4f} "
          f"sensitivity={sens} specificity={spec}")
    print(f"artifacts: {prefix}_summary.csv {prefix}_detail.csv")
    return 0


def cmd_cv(cfg: RunConfig) -> int:
    if cfg.get("seed") is None:
        raise ConfigurationError("cv requires --seed")
    ds = _load_dataset(cfg)
    results = kfold_cv(ds, int(cfg["k"]), grid=_resolve_grid(cfg, ds),
                       penalty=_penalty_from(cfg), ctrl=_ctrl_from(cfg),
                       lambda_scale=cfg["lambda_scale"],
                       criterion=cfg["criterion"], seed=int(cfg["seed"]))
    write_cv_csv(results, cfg["output"])
    mean_sse = float(np.mean([r.sse for r in results]))
    print(f"cv: k={len(results)} mean held-out SSE={mean_sse:.6f}")
    print(f"artifact: {cfg['output']}")
    return 0


def cmd_reduce(cfg: RunConfig) -> int:
    roles = _roles_from(cfg)
    ds = ingest_long_csv(cfg["input"], roles)
    _, report = remove_linear_combos(ds, rank_tol=float(cfg["rank_tol"]))
    dropped_names = {ds.x_names[j] for j in report.dropped}

    # pass the original file through, minus the dropped fixed-effect columns
    import csv as _csv
    with open(cfg["input"], newline="") as fh:
        rows = list(_csv.reader(fh))
    header = rows[0]
    keep_idx = [i for i, name in enumerate(header) if name not in dropped_names]
    out_lines = [",".join(header[i] for i in keep_idx)]
    for row in rows[1:]:
        if row:
            out_lines.append(",".join(row[i] for i in keep_idx))
    from .fileio import atomic_write_text
    atomic_write_text(cfg["output"], "\n".join(out_lines) + "\n")

    report_dict = report.to_dict()
    report_dict["kept_names"] = [ds.x_names[j] for j in report.kept]
    report_dict["dropped_names"] = sorted(dropped_names)
    write_json(cfg["report"], report_dict)
    print(f"reduce: kept {len(report.kept)} of {ds.p} fixed-effect columns")
    print(f"artifacts: {cfg['output']} {cfg['report']}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _add_data_options(p: argparse.ArgumentParser):
    p.add_argument("--input", required=True, help="long-format CSV with header")
    p.add_argument("--subject", help="subject-id column")
    p.add_argument("--response", help="response column")
    p.add_argument("--fixed", help="comma-separated fixed-effect columns")
    p.add_argument("--random",
                   help="comma-separated random-effect columns ('1' = intercept), "
                        "or 'intercept+<col>'")
    p.add_argument("--standardize", action="store_const", const=True, default=None,
                   help="center/scale X columns and the response")
    p.add_argument("--categorical",
                   help="comma-separated columns exempt from standardization")
    p.add_argument("--no-scale-y", dest="scale_y", action="store_const",
                   const=False, default=None, help="center the response only")


def _add_common_options(p: argparse.ArgumentParser):
    p.add_argument("--config", help="JSON config file (flags take precedence)")
    p.add_argument("--lambda-scale", dest="lambda_scale",
                   choices=("raw", "per_obs"), default=None)
    p.add_argument("--penalty", choices=("lasso", "elastic_net"), default=None)
    p.add_argument("--alpha", type=float, default=None,
                   help="elastic-net mixing weight in (0, 1)")
    p.add_argument("--criterion", choices=("bic", "aic"), default=None)
    p.add_argument("--eps", type=float, default=None,
                   help="EM relative stopping tolerance")
    p.add_argument("--max-iter", dest="max_iter", type=int, default=None)
    p.add_argument("--pls-tol", dest="pls_tol", type=float, default=None)
    p.add_argument("--pls-max-sweeps", dest="pls_max_sweeps", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lmmlasso",
        description="Lasso selection of fixed effects in linear mixed models.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="penalized EM fit at one penalty level")
    _add_data_options(p)
    _add_common_options(p)
    p.add_argument("--lambda", dest="lam", type=float, required=True)
    p.add_argument("--output", required=True, help="fit report JSON")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="sweep a grid, pick lambda by BIC, refit")
    _add_data_options(p)
    _add_common_options(p)
    p.add_argument("--grid", default=None,
                   help="start:stop:num (linear) or comma-separated values")
    p.add_argument("--grid-log", dest="grid_log", default=None,
                   help="num:ratio log grid anchored at the data lambda_max")
    p.add_argument("--output-prefix", dest="output_prefix", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("simulate", help="Monte Carlo benchmark scenarios")
    _add_common_options(p)
    p.add_argument("--scenario", type=int, choices=(1, 2, 3), required=True)
    p.add_argument("--n", type=int, default=30)
    p.add_argument("--n-i", dest="n_i", type=int, default=5)
    p.add_argument("--p", type=int, default=50, help="scenario 3 only")
    p.add_argument("--p-star", dest="p_star", type=int, default=5,
                   help="scenario 3 only")
    p.add_argument("--d-matrix", dest="d_matrix", choices=("low", "high"),
                   default=None, help="scenario 3 covariance preset")
    p.add_argument("--replicates", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--grid", default=None)
    p.add_argument("--output-prefix", dest="output_prefix", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cv", help="subject-grouped k-fold cross-validation")
    _add_data_options(p)
    _add_common_options(p)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--grid", default=None)
    p.add_argument("--grid-log", dest="grid_log", default=None)
    p.add_argument("--output", required=True, help="per-fold CSV")
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("reduce", help="drop linearly dependent fixed-effect columns")
    _add_data_options(p)
    p.add_argument("--config", help="JSON config file (flags take precedence)")
    p.add_argument("--rank-tol", dest="rank_tol", type=float, default=None)
    p.add_argument("--output", required=True, help="reduced CSV")
    p.add_argument("--report", required=True, help="reduction report JSON")
    p.set_defaults(func=cmd_reduce)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _merge_options(args)
        return args.func(cfg)
    except LmmLassoError as e:
        print(json.dumps({"error": {
            "type": type(e).__name__,
            "message": str(e),
            "exit_code": e.exit_code,
        }}))
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
