import numpy as np
import pytest

from lmmlasso.exceptions import ConfigurationError
from lmmlasso.penalized_ls import (
    PenaltySpec,
    kkt_check,
    lambda_max,
    soft_threshold,
    solve_pls,
)

from oracles import lasso_best_by_enumeration

# Frozen from the sign-support enumeration oracle on the seeded instance
# built by _oracle_instance() below.
ORACLE_BETA = np.array([1.4679431654801676, -1.7932605289171886, 0.0, 0.0,
                        0.7015721233301645])
ORACLE_OBJ = 15.62143072532841


def _oracle_instance():
    rng = np.random.default_rng(20240517)
    X = rng.normal(size=(20, 5))
    beta_true = np.array([1.5, -2.0, 0.0, 0.0, 0.75])
    y = X @ beta_true + rng.normal(scale=0.5, size=20)
    return X, y


def test_soft_threshold_values():
    assert soft_threshold(5.0, 2.0) == 3.0
    assert soft_threshold(-1.0, 2.0) == 0.0
    for z in (-3.7, 0.0, 0.2, 11.0):
        assert soft_threshold(z, 0.0) == z


def test_penalty_spec_validation():
    with pytest.raises(ConfigurationError):
        PenaltySpec("lasso", alpha=0.5, lam=1.0)
    with pytest.raises(ConfigurationError):
        PenaltySpec("ridge", alpha=1.0, lam=1.0)
    with pytest.raises(ConfigurationError):
        PenaltySpec("elastic_net", alpha=1.0, lam=1.0)
    with pytest.raises(ConfigurationError):
        PenaltySpec("lasso", alpha=1.0, lam=-0.1)
    with pytest.raises(ConfigurationError):
        PenaltySpec("huber", alpha=1.0, lam=1.0)
    assert PenaltySpec.elastic_net(0.3, 2.0).alpha == 0.3


def test_lambda_zero_recovers_ols():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(40, 6))
    y = rng.normal(size=40)
    sol = solve_pls(X, y, PenaltySpec.lasso(0.0), tol=1e-12)
    ols = np.linalg.solve(X.T @ X, X.T @ y)
    np.testing.assert_allclose(sol.beta, ols, atol=1e-8)
    assert sol.converged
    assert kkt_check(X, y, PenaltySpec.lasso(0.0), sol.beta) <= 1e-8


def test_lambda_at_or_above_lambda_max_gives_exact_zero():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(30, 5))
    X -= X.mean(axis=0)
    y = rng.normal(size=30)
    y -= y.mean()
    lmax = lambda_max(X, y)
    for lam in (lmax, 1.3 * lmax, 10.0 * lmax):
        sol = solve_pls(X, y, PenaltySpec.lasso(lam))
        assert np.all(sol.beta == 0.0)
        assert kkt_check(X, y, PenaltySpec.lasso(lam), sol.beta) == 0.0


def test_matches_signsupport_oracle_frozen_instance():
    X, y = _oracle_instance()
    sol = solve_pls(X, y, PenaltySpec.lasso(3.0), tol=1e-13)
    np.testing.assert_allclose(sol.beta, ORACLE_BETA, atol=1e-6)
    assert abs(sol.objective - ORACLE_OBJ) <= 1e-8
    assert sol.kkt_residual <= 1e-8
    assert kkt_check(X, y, PenaltySpec.lasso(3.0), sol.beta) <= 1e-8
    # the frozen numbers still reproduce from the live oracle
    beta_ref, obj_ref = lasso_best_by_enumeration(X, y, 3.0)
    np.testing.assert_allclose(beta_ref, ORACLE_BETA, atol=1e-12)
    assert abs(obj_ref - ORACLE_OBJ) <= 1e-10


def test_kkt_residual_of_ols_is_tiny():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(25, 4))
    y = rng.normal(size=25)
    ols = np.linalg.solve(X.T @ X, X.T @ y)
    assert kkt_check(X, y, PenaltySpec.lasso(0.0), ols) <= 1e-10


def test_objective_trace_is_monotone_decreasing():
    rng = np.random.default_rng(19)
    X = rng.normal(size=(50, 12))
    y = X @ rng.normal(size=12) + rng.normal(size=50)
    for lam in (0.0, 1.0, 25.0):
        sol = solve_pls(X, y, PenaltySpec.lasso(lam))
        tr = sol.objective_trace
        slack = 1e-12 * np.abs(tr[:-1])
        assert np.all(np.diff(tr) <= slack)


def test_warm_start_matches_cold_start_when_strictly_convex():
    rng = np.random.default_rng(23)
    X = rng.normal(size=(60, 8))
    y = X @ rng.normal(size=8) + rng.normal(size=60)
    pen = PenaltySpec.elastic_net(0.6, 4.0)
    cold = solve_pls(X, y, pen, tol=1e-12)
    warm = solve_pls(X, y, pen, warm_start=rng.normal(size=8), tol=1e-12)
    np.testing.assert_allclose(cold.beta, warm.beta, atol=1e-9)


def test_optimal_objective_nondecreasing_in_lambda():
    rng = np.random.default_rng(29)
    X = rng.normal(size=(30, 6))
    y = X @ rng.normal(size=6) + rng.normal(size=30)
    lams = [0.0, 0.5, 2.0, 8.0, 32.0, 128.0]
    objs = [solve_pls(X, y, PenaltySpec.lasso(lam), tol=1e-12).objective
            for lam in lams]
    assert np.all(np.diff(objs) >= -1e-10)


def test_scaling_homogeneity_lasso():
    X, y = _oracle_instance()
    base = solve_pls(X, y, PenaltySpec.lasso(3.0), tol=1e-13)
    for c in (0.5, 2.0, 7.3):
        scaled = solve_pls(X, c * y, PenaltySpec.lasso(3.0 * c), tol=1e-13)
        np.testing.assert_allclose(scaled.beta, c * base.beta, atol=1e-8)


def test_zero_column_pinned_with_warning():
    rng = np.random.default_rng(31)
    X = rng.normal(size=(20, 4))
    X[:, 2] = 0.0
    y = rng.normal(size=20)
    with pytest.warns(RuntimeWarning, match="zero column"):
        sol = solve_pls(X, y, PenaltySpec.lasso(1.0))
    assert sol.beta[2] == 0.0
    assert sol.converged


def test_per_obs_scale_matches_raw_times_2n():
    rng = np.random.default_rng(37)
    X = rng.normal(size=(35, 5))
    y = rng.normal(size=35)
    a = solve_pls(X, y, PenaltySpec.lasso(0.05), lambda_scale="per_obs", tol=1e-12)
    b = solve_pls(X, y, PenaltySpec.lasso(0.05 * 2 * 35), lambda_scale="raw", tol=1e-12)
    np.testing.assert_allclose(a.beta, b.beta, atol=1e-12)


def test_ridge_closed_form():
    rng = np.random.default_rng(41)
    X = rng.normal(size=(30, 5))
    y = rng.normal(size=30)
    lam = 3.5
    sol = solve_pls(X, y, PenaltySpec.ridge(lam), tol=1e-13)
    ref = np.linalg.solve(X.T @ X + lam * np.eye(5), X.T @ y)
    np.testing.assert_allclose(sol.beta, ref, atol=1e-9)


def test_gram_precomputation_matches_plain_call():
    rng = np.random.default_rng(43)
    X = rng.normal(size=(25, 6))
    y = rng.normal(size=25)
    pen = PenaltySpec.lasso(2.0)
    ref = solve_pls(X, y, pen, tol=1e-12)
    via_gram = solve_pls(X, y, pen, tol=1e-12,
                         gram=X.T @ X, xty=X.T @ y, yty=float(y @ y))
    np.testing.assert_allclose(ref.beta, via_gram.beta, atol=0.0)
    assert ref.objective == via_gram.objective


def test_max_sweeps_exhaustion_reports_nonconvergence():
    rng = np.random.default_rng(47)
    X = rng.normal(size=(40, 10))
    y = X @ rng.normal(size=10) + rng.normal(size=40)
    sol = solve_pls(X, y, PenaltySpec.lasso(0.0), tol=1e-14, max_sweeps=2)
    assert not sol.converged
    assert sol.iterations == 2


def test_empty_design_returns_empty_beta():
    y = np.array([1.0, -2.0, 0.5])
    sol = solve_pls(np.zeros((3, 0)), y, PenaltySpec.lasso(1.0))
    assert sol.beta.shape == (0,)
    assert sol.converged
    assert sol.objective == pytest.approx(float(y @ y))
