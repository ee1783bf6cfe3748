import numpy as np
import pytest

from lmmlasso.dataset import (
    ColumnRoles,
    LongitudinalDataset,
    SubjectBlock,
    beta_original_scale,
    destandardize,
    ingest_long_csv,
    remove_linear_combos,
    standardize,
)
from lmmlasso.exceptions import ConfigurationError, DataError

ROLES = ColumnRoles(subject="id", response="chol", fixed=("sex", "age", "time"),
                    random=("1", "time"))


def _write_cholesterol_style_csv(path, n_subjects=200, rows_per_subject=3, seed=0):
    rng = np.random.default_rng(seed)
    lines = ["id,chol,sex,age,time"]
    for i in range(n_subjects):
        sex = rng.integers(0, 2)
        age = rng.uniform(31, 62)
        for t in range(rows_per_subject):
            chol = rng.normal(2.3, 0.4)
            lines.append(f"s{i},{chol:.6f},{sex},{age:.3f},{t * 0.2 - 0.3:.1f}")
    path.write_text("\n".join(lines) + "\n")


def test_ingest_groups_by_subject(tmp_path):
    f = tmp_path / "chol.csv"
    _write_cholesterol_style_csv(f)
    ds = ingest_long_csv(f, ROLES)
    assert ds.n == 200
    assert ds.N == 600
    assert ds.p == 3
    assert ds.q == 2
    assert np.all(ds.blocks[0].Z[:, 0] == 1.0)
    assert ds.standardization is None


def test_ingest_single_row_dataset(tmp_path):
    f = tmp_path / "tiny.csv"
    f.write_text("id,y,x1,t\nA,1.5,2.0,1\n")
    ds = ingest_long_csv(f, ColumnRoles("id", "y", ("x1",), ("1", "t")))
    assert (ds.n, ds.N, ds.p) == (1, 1, 1)


def test_ingest_reports_bad_cell_with_row_number(tmp_path):
    f = tmp_path / "bad.csv"
    f.write_text("id,y,x1,t\nA,1.5,2.0,1\nA,oops,1.0,2\n")
    with pytest.raises(DataError, match="row 3.*'oops'.*'y'"):
        ingest_long_csv(f, ColumnRoles("id", "y", ("x1",), ("1", "t")))


def test_ingest_missing_column_is_config_error(tmp_path):
    f = tmp_path / "m.csv"
    f.write_text("id,y,x1\nA,1.0,2.0\n")
    with pytest.raises(ConfigurationError, match="'t'"):
        ingest_long_csv(f, ColumnRoles("id", "y", ("x1",), ("1", "t")))


def test_ingest_preserves_row_multiset(tmp_path):
    f = tmp_path / "order.csv"
    # subjects interleaved in the file
    f.write_text("id,y,x1,t\nA,1,10,1\nB,2,20,1\nA,3,30,2\nB,4,40,2\n")
    ds = ingest_long_csv(f, ColumnRoles("id", "y", ("x1",), ("1", "t")))
    assert ds.n == 2
    assert [b.subject_id for b in ds.blocks] == ["A", "B"]
    np.testing.assert_array_equal(ds.blocks[0].y, [1, 3])
    np.testing.assert_array_equal(ds.blocks[1].y, [2, 4])
    rows = sorted((float(ds.y[i]), float(ds.X[i, 0])) for i in range(ds.N))
    assert rows == [(1.0, 10.0), (2.0, 20.0), (3.0, 30.0), (4.0, 40.0)]


def test_roles_shorthand():
    roles = ColumnRoles.from_mapping(
        {"subject": "id", "response": "y", "fixed": ["a"], "random": "intercept+time"})
    assert roles.random == ("1", "time")


def _toy_dataset(seed=5, n=40, n_i=4, p=3):
    rng = np.random.default_rng(seed)
    blocks = []
    for i in range(n):
        X = rng.normal(6.0, 1.0, size=(n_i, p))
        Z = np.column_stack([np.ones(n_i), np.arange(1, n_i + 1)])
        y = X @ np.ones(p) + rng.normal(size=n_i)
        blocks.append(SubjectBlock(i, y, X, Z))
    return LongitudinalDataset(blocks)


def test_standardize_pooled_moments():
    ds = standardize(_toy_dataset())
    assert ds.standardization is not None
    np.testing.assert_allclose(ds.X.mean(axis=0), 0.0, atol=1e-10)
    np.testing.assert_allclose(ds.X.std(axis=0, ddof=1), 1.0, atol=1e-10)
    np.testing.assert_allclose(ds.y.mean(), 0.0, atol=1e-10)
    np.testing.assert_allclose(ds.y.std(ddof=1), 1.0, atol=1e-10)


def test_standardize_exempts_flagged_binary_column():
    base = _toy_dataset()
    sex = np.repeat(np.arange(base.n) % 2, base.counts).astype(float)
    blocks = [
        SubjectBlock(b.subject_id, b.y,
                     np.column_stack([sex[sl], b.X]), b.Z)
        for b, sl in zip(base.blocks, base.slices())
    ]
    ds = LongitudinalDataset(blocks)
    out = standardize(ds, categorical=[0])
    np.testing.assert_array_equal(out.X[:, 0], sex)
    np.testing.assert_allclose(out.X[:, 1:].std(axis=0, ddof=1), 1.0, atol=1e-10)


def test_standardize_rejects_constant_column():
    base = _toy_dataset()
    blocks = [
        SubjectBlock(b.subject_id, b.y,
                     np.column_stack([np.full(b.n_obs, 3.0), b.X]), b.Z)
        for b in base.blocks
    ]
    with pytest.raises(DataError, match="zero variance"):
        standardize(LongitudinalDataset(blocks))


def test_destandardize_round_trip():
    ds = _toy_dataset(seed=9)
    back = destandardize(standardize(ds))
    np.testing.assert_allclose(back.X, ds.X, rtol=1e-12)
    np.testing.assert_allclose(back.y, ds.y, rtol=1e-12)


def test_beta_original_scale_reproduces_predictions():
    ds = _toy_dataset(seed=13)
    std = standardize(ds)
    rng = np.random.default_rng(1)
    beta_s = rng.normal(size=ds.p)
    beta_o, intercept = beta_original_scale(std.standardization, beta_s)
    pred_std = std.standardization.y_center + std.standardization.y_scale * (std.X @ beta_s)
    pred_orig = intercept + ds.X @ beta_o
    np.testing.assert_allclose(pred_std, pred_orig, rtol=1e-12)


def _with_dependent_column(seed=3, n=20, n_i=3):
    rng = np.random.default_rng(seed)
    blocks = []
    for i in range(n):
        A = rng.normal(size=(n_i, 2))
        X = np.column_stack([A[:, 0], A[:, 1], A[:, 0] + A[:, 1], rng.normal(size=n_i)])
        Z = np.ones((n_i, 1))
        blocks.append(SubjectBlock(i, rng.normal(size=n_i), X, Z))
    return LongitudinalDataset(blocks)


def test_remove_linear_combos_drops_constructed_dependency():
    ds = _with_dependent_column()
    reduced, report = remove_linear_combos(ds)
    assert report.dropped == (2,)
    assert report.kept == (0, 1, 3)
    assert sorted(report.dependency_sets[2]) == [0, 1]
    assert reduced.p == 3
    assert reduced.x_names == ["x1", "x2", "x4"]


def test_remove_linear_combos_keeps_full_rank_design():
    rng = np.random.default_rng(8)
    blocks = [SubjectBlock(i, rng.normal(size=4), rng.normal(size=(4, 3)),
                           np.ones((4, 1))) for i in range(10)]
    _, report = remove_linear_combos(LongitudinalDataset(blocks))
    assert report.dropped == ()


def test_remove_linear_combos_gene_expression_shape():
    # 71 rows, 101 columns, true rank 70: 31 trailing columns are random
    # combinations of the first 70.
    rng = np.random.default_rng(17)
    base = rng.normal(size=(71, 70))
    extra = base @ rng.normal(size=(70, 31))
    X = np.column_stack([base, extra])
    counts = rng.integers(2, 5, size=28)
    while counts.sum() != 71:
        counts = rng.integers(2, 5, size=28)
    blocks = []
    r = 0
    for i, c in enumerate(counts):
        blocks.append(SubjectBlock(i, rng.normal(size=c), X[r:r + c],
                                   np.ones((c, 1))))
        r += c
    reduced, report = remove_linear_combos(LongitudinalDataset(blocks))
    assert len(report.kept) == 70
    assert reduced.p == 70


def test_remove_linear_combos_idempotent():
    ds = _with_dependent_column(seed=21)
    reduced, first = remove_linear_combos(ds)
    again, second = remove_linear_combos(reduced)
    assert second.dropped == ()
    assert again.p == reduced.p
    assert [reduced.x_names[j] for j in second.kept] == reduced.x_names


def test_select_columns_and_subset_subjects():
    ds = _toy_dataset(seed=31, n=6)
    sub = ds.select_columns([2, 0])
    assert sub.x_names == ["x3", "x1"]
    np.testing.assert_array_equal(sub.X[:, 1], ds.X[:, 0])
    part = ds.subset_subjects([4, 1])
    assert part.n == 2
    assert part.blocks[0].subject_id == 4


def test_dataset_arrays_are_readonly():
    ds = _toy_dataset(seed=2, n=3)
    with pytest.raises(ValueError):
        ds.X[0, 0] = 99.0
    with pytest.raises(ValueError):
        ds.blocks[0].y[0] = 99.0
