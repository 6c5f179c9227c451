"""Supporting-plane recovery: reduction geometry, completion, rank, fit."""
import json
import math

import numpy as np
import pytest

from lls import (
    DataError,
    ModelNotApplicableError,
    Schema,
)
from lls.oracle import (
    exact_moment_matrix,
    generate_model,
    principal_angles,
    sample_dataset,
)
from lls.frequency import build_moment_matrix
from lls.plane import (
    AffineFit,
    Basis,
    complete_matrix,
    estimate_plane,
    estimate_rank,
    find_observed_minor,
    fit_affine_plane,
    lift_basis,
    lift_point,
    normalize_columns,
    reduce_dimension,
    reduction_matrix,
)

SQ2 = math.sqrt(2.0)


# -- isometric reduction -------------------------------------------------------


def test_reduction_matrix_blocks():
    a = reduction_matrix(Schema((2, 3)))
    assert a.shape == (3, 5)
    np.testing.assert_allclose(a[0], [1.0 - SQ2, 1.0, 0, 0, 0], atol=1e-15)
    c3 = -(math.sqrt(3.0) - 1.0) / 2.0
    np.testing.assert_allclose(a[1], [0, 0, c3, 1.0, 0], atol=1e-15)
    np.testing.assert_allclose(a[2], [0, 0, c3, 0, 1.0], atol=1e-15)


def test_reduction_binary_block_value():
    # One binary block maps (0.3, 0.7) to (1 - sqrt(2)) * 0.3 + 0.7.
    schema = Schema((2, 2))
    col = np.array([[0.3], [0.7], [0.3], [0.7]])
    reduced = reduce_dimension(schema, col)
    np.testing.assert_allclose(
        reduced.points[0], [0.5757359312880714] * 2, atol=1e-12
    )


def test_reduction_is_isometric_on_block_sum_zero():
    rng = np.random.default_rng(7)
    schema = Schema((2, 3, 4, 2))
    a = reduction_matrix(schema)
    for _ in range(20):
        u = rng.normal(size=schema.total_cells)
        for j in range(1, 5):
            block = schema.block_slice(j)
            u[block] -= u[block].mean()  # block sums now zero
        assert np.linalg.norm(a @ u) == pytest.approx(np.linalg.norm(u), abs=1e-12)


def test_distances_preserved_between_block_stochastic_columns():
    rng = np.random.default_rng(8)
    schema = Schema((3, 3, 2))
    cols = np.empty((schema.total_cells, 6))
    for c in range(6):
        for j in range(1, 4):
            block = schema.block_slice(j)
            w = rng.dirichlet(np.ones(block.stop - block.start))
            cols[block, c] = w
    reduced = reduce_dimension(schema, cols)
    for i in range(6):
        for k in range(i):
            d_orig = np.linalg.norm(cols[:, i] - cols[:, k])
            d_red = np.linalg.norm(reduced.points[i] - reduced.points[k])
            assert d_red == pytest.approx(d_orig, abs=1e-12)


def test_lift_point_roundtrip():
    rng = np.random.default_rng(9)
    schema = Schema((2, 4, 3))
    for _ in range(10):
        x = np.concatenate(
            [rng.normal(size=lv) for lv in schema.levels]
        )
        for j in range(1, 4):
            block = schema.block_slice(j)
            x[block] += (1.0 - x[block].sum()) / (block.stop - block.start)
        y = reduction_matrix(schema) @ x
        back = lift_point(schema, y)
        np.testing.assert_allclose(back, x, atol=1e-12)
        for j in range(1, 4):
            assert back[schema.block_slice(j)].sum() == pytest.approx(1.0, abs=1e-14)


def test_lift_point_binary_unit():
    # A reduced coordinate of exactly 1 puts all block mass on level 2.
    schema = Schema((2, 2))
    np.testing.assert_allclose(
        lift_point(schema, np.array([1.0, 1.0])), [0, 1, 0, 1], atol=1e-15
    )


# -- affine plane fit ----------------------------------------------------------


def test_fit_plane_square_example():
    pts = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
    fit = fit_affine_plane(pts)
    np.testing.assert_allclose(fit.center, [1.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(fit.eigenvalues, [4.0, 4.0], atol=1e-12)
    assert fit.k == 3
    assert fit.residual == pytest.approx(0.0, abs=1e-12)
    # Directions span the whole space.
    q = fit.directions
    np.testing.assert_allclose(q.T @ q, np.eye(2), atol=1e-12)


def test_fit_plane_noise_threshold_controls_k():
    # Points on a line with +-1e-3 off-line wiggle: the wiggle eigenvalue
    # is ~1e-5 and must fall on either side of n * noise_scale**2.
    t = np.arange(10.0)
    wiggle = 1e-3 * (-1.0) ** np.arange(10)
    pts = np.column_stack([t, wiggle])
    assert fit_affine_plane(pts, noise_scale=2e-3).k == 2
    assert fit_affine_plane(pts, noise_scale=1e-4).k == 3


def test_fit_plane_degenerate_single_point():
    pts = np.tile([0.25, 0.5, 0.125], (8, 1))
    fit = fit_affine_plane(pts)
    assert fit.k == 1 and fit.degenerate
    assert fit.directions.shape == (3, 0)


def test_fit_plane_k_override_and_signs():
    rng = np.random.default_rng(11)
    pts = rng.normal(size=(12, 4))
    fit = fit_affine_plane(pts, k_override=3)
    assert fit.k == 3 and not fit.degenerate
    for i in range(fit.directions.shape[1]):
        z = fit.directions[:, i]
        assert z[np.flatnonzero(np.abs(z) > 1e-9)[0]] > 0
    with pytest.raises(ModelNotApplicableError):
        fit_affine_plane(pts, k_override=6)


def test_fit_plane_residual_matches_trailing_eigenvalues():
    rng = np.random.default_rng(12)
    pts = rng.normal(size=(30, 5))
    fit = fit_affine_plane(pts, k_override=3)
    centered = pts - pts.mean(axis=0)
    # Squared distances to the fitted plane, summed.
    proj = centered @ fit.directions @ fit.directions.T
    direct = ((centered - proj) ** 2).sum()
    assert fit.residual == pytest.approx(direct, rel=1e-10)


def test_fit_plane_beats_random_planes():
    # PCA optimality, checked against random competitor planes through
    # competitor centers.
    rng = np.random.default_rng(13)
    pts = rng.normal(size=(25, 4)) * np.array([3.0, 2.0, 1.0, 0.5])
    fit = fit_affine_plane(pts, k_override=3)
    for _ in range(200):
        q, _ = np.linalg.qr(rng.normal(size=(4, 2)))
        center = pts.mean(axis=0) + 0.1 * rng.normal(size=4)
        centered = pts - center
        resid = ((centered - centered @ q @ q.T) ** 2).sum()
        assert resid >= fit.residual - 1e-9


# -- observed minor and rank ---------------------------------------------------


def exact_matrix(levels, k, n_support, seed, max_col_order=2):
    schema = Schema(levels)
    model = generate_model(schema, k, n_support, seed)
    return model, exact_moment_matrix(model, max_col_order=max_col_order).matrix


def test_find_observed_minor_small():
    _, matrix = exact_matrix((2, 2), 1, 2, seed=0, max_col_order=1)
    rows, cols = find_observed_minor(matrix)
    # S = {1}: rows of variable 2, columns free outside variable 1.
    assert rows.tolist() == [2, 3]
    assert [matrix.columns[c] for c in cols] == [(0, 0), (1, 0), (2, 0)]


def test_find_observed_minor_grows_until_area_drops():
    _, matrix = exact_matrix((3,) * 8, 2, 4, seed=1)
    rows, cols = find_observed_minor(matrix)
    assert rows.size == 9 and cols.size == 106
    # All minor entries are observed.
    assert np.isfinite(matrix.values[np.ix_(rows, cols)]).all()


def test_find_observed_minor_deterministic():
    _, matrix = exact_matrix((3,) * 8, 3, 5, seed=2)
    r1, c1 = find_observed_minor(matrix)
    r2, c2 = find_observed_minor(matrix)
    assert np.array_equal(r1, r2) and np.array_equal(c1, c2)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_estimate_rank_exact(k):
    _, matrix = exact_matrix((3,) * 8, k, k + 2, seed=20 + k)
    rows, cols = find_observed_minor(matrix)
    est = estimate_rank(matrix, rows, cols)
    assert est.k0 == k
    assert est.noise_scale == 0.0
    assert est.singular_values[0] >= est.singular_values[-1] >= 0


def test_estimate_rank_sampled():
    # A model whose planar spread clears the sampling-noise edge at this n.
    schema = Schema((3,) * 8)
    model = generate_model(schema, 2, 4, seed=51)
    data = sample_dataset(model, 100000, seed=52)
    matrix = build_moment_matrix(data, max_col_order=2)
    rows, cols = find_observed_minor(matrix)
    est = estimate_rank(matrix, rows, cols)
    assert est.k0 == 2
    assert est.noise_scale > 0
    # Noise singular values sit below the threshold, the signal above it.
    assert est.singular_values[2] < est.threshold < est.singular_values[1]


def test_estimate_rank_rejects_rank_beyond_minor():
    # A 2 x 3 minor supports rank 1 at most; a two-component model of
    # two binary variables must be flagged as not identifiable.
    _, matrix = exact_matrix((2, 2), 2, 3, seed=33, max_col_order=1)
    rows, cols = find_observed_minor(matrix)
    with pytest.raises(ModelNotApplicableError, match="more variables"):
        estimate_rank(matrix, rows, cols)


def test_estimate_rank_all_below_threshold():
    # An absurd threshold factor pushes every singular value under the
    # sampling-noise bar (only meaningful for sampled input).
    schema = Schema((3,) * 8)
    model = generate_model(schema, 2, 4, seed=34)
    data = sample_dataset(model, 2000, seed=35)
    matrix = build_moment_matrix(data)
    rows, cols = find_observed_minor(matrix)
    with pytest.raises(ModelNotApplicableError, match="below the noise"):
        estimate_rank(matrix, rows, cols, rank_threshold_factor=1e12)


# -- completion and normalization ------------------------------------------------


@pytest.mark.parametrize("k", [1, 2, 4])
def test_completion_matches_exact_moments(k):
    schema = Schema((3,) * 8)
    model = generate_model(schema, k, k + 2, seed=40 + k)
    exact = exact_moment_matrix(model, max_col_order=2)
    result = complete_matrix(exact.matrix, k)
    assert result.n_dropped == 0
    np.testing.assert_allclose(
        result.values, exact.completion[:, result.kept], atol=1e-8
    )
    # k = 4 with three-level blocks is the regression case where naive
    # donor picking stacks exactly dependent columns (count identities).


def test_completion_imputes_only_unobserved_cells():
    _, matrix = exact_matrix((2, 3, 2, 3), 2, 4, seed=50)
    result = complete_matrix(matrix, 2)
    obs = matrix.observed[:, result.kept]
    np.testing.assert_array_equal(
        result.values[obs], matrix.values[:, result.kept][obs]
    )
    assert result.n_cells_imputed == int((~obs).sum())


def test_normalized_columns_are_block_stochastic():
    schema = Schema((3,) * 6)
    model = generate_model(schema, 2, 4, seed=51)
    matrix = exact_moment_matrix(model).matrix
    completion = complete_matrix(matrix, 2)
    normalized, kept, n_dropped = normalize_columns(matrix, completion)
    assert n_dropped == 0 and kept.size == len(matrix.columns)
    for j in range(1, 7):
        sums = normalized[schema.block_slice(j)].sum(axis=0)
        np.testing.assert_allclose(sums, 1.0, atol=1e-12)


# -- end-to-end plane estimation ---------------------------------------------------


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_estimate_plane_exact_recovery(k):
    schema = Schema((3,) * 8)
    model = generate_model(schema, k, k + 2, seed=60 + k)
    matrix = exact_moment_matrix(model).matrix
    basis, report = estimate_plane(matrix)
    assert report.k0 == k and report.k == k
    assert basis.k == k
    assert principal_angles(basis, model.basis).max() < 1e-6
    if k == 1:
        # Single-component model: the plane is one point, the cell law.
        np.testing.assert_allclose(
            basis.vectors[:, 0], model.cell_probabilities @ model.weights, atol=1e-9
        )
        assert report.degenerate


def test_estimate_plane_k_override():
    schema = Schema((3,) * 8)
    model = generate_model(schema, 3, 5, seed=70)
    matrix = exact_moment_matrix(model).matrix
    basis, report = estimate_plane(matrix, k_override=2)
    assert report.k0 == 2 and report.k == 2 and basis.k == 2
    # The spectra are still reported in full for diagnostics.
    assert report.singular_values.size >= 3
    assert report.eigenvalues.size > 0


def test_estimate_plane_sampled_close():
    # Corner-separated components give enough signal for noisy recovery.
    schema = Schema((2,) * 10)
    model = generate_model(schema, 2, 3, seed=100, basis_concentration=0.5)
    data = sample_dataset(model, 30000, seed=200)
    matrix = build_moment_matrix(data)
    basis, report = estimate_plane(matrix, k_override=2)
    assert principal_angles(basis, model.basis).max() < 0.2
    assert report.noise_scale > 0


def test_estimate_plane_deterministic():
    schema = Schema((2,) * 6)
    model = generate_model(schema, 2, 3, seed=73)
    data = sample_dataset(model, 5000, seed=74)
    matrix = build_moment_matrix(data)
    b1, r1 = estimate_plane(matrix)
    b2, r2 = estimate_plane(matrix)
    assert np.array_equal(b1.vectors, b2.vectors)
    assert r1.to_json() == r2.to_json()


def test_estimate_plane_column_weighting_runs():
    schema = Schema((2,) * 6)
    model = generate_model(schema, 2, 3, seed=75)
    data = sample_dataset(model, 5000, seed=76)
    matrix = build_moment_matrix(data)
    basis, _ = estimate_plane(matrix, k_override=2, column_weighting=True)
    assert basis.k == 2


def test_report_json_round_trips():
    _, matrix = exact_matrix((3,) * 6, 2, 4, seed=77, max_col_order=2)
    _, report = estimate_plane(matrix)
    blob = json.dumps(report.to_json(), sort_keys=True)
    assert json.loads(blob)["k"] == 2


# -- basis container ------------------------------------------------------------


def test_basis_validates_block_sums():
    schema = Schema((2, 2))
    good = np.array([[0.3, 0.7, 0.4, 0.6]]).T
    Basis(schema, good)
    with pytest.raises(DataError, match="block"):
        Basis(schema, np.array([[0.3, 0.6, 0.4, 0.6]]).T)


def test_basis_json_roundtrip(tmp_path):
    schema = Schema((3, 2, 2))
    model = generate_model(schema, 2, 3, seed=80)
    basis = Basis(schema, model.basis)
    path = tmp_path / "basis.json"
    basis.save(path)
    loaded = Basis.load(path)
    assert loaded.schema == basis.schema
    np.testing.assert_array_equal(loaded.vectors, basis.vectors)


def test_lift_basis_block_sums_exact():
    fit = AffineFit(
        center=np.array([0.2, -0.1, 0.3]),
        directions=np.array([[0.5], [0.1], [-0.2]]),
        eigenvalues=np.array([1.0, 0.0, 0.0]),
        k=2,
        threshold=0.0,
        residual=0.0,
        degenerate=False,
    )
    basis = lift_basis(Schema((2, 3)), fit)
    assert basis.k == 2
    sums = basis.vectors[:2].sum(axis=0)
    np.testing.assert_allclose(sums, 1.0, atol=1e-14)
