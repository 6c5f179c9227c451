"""Supporting-plane recovery from an incomplete moment matrix.

The pipeline: locate a fully observed minor and estimate the latent rank
from its singular spectrum; impute the unobservable cells column by column
with small least-squares fits against donor columns; normalize columns to
block-stochastic form; map them isometrically into a smaller space (one
dimension fewer per variable); fit the best affine plane through the point
cloud by eigendecomposition of its scatter matrix; and lift an affine basis
of that plane back to cell space.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    DegenerateInputError,
    ModelNotApplicableError,
    NumericalError,
)
from .frequency import MomentMatrix
from .schema import Pattern, Schema

logger = logging.getLogger(__name__)

# Relative floors that keep the noise thresholds meaningful on exact
# (noise-free) input, where the statistical estimates are zero.
_RANK_FLOOR = 1e-8
_EIG_FLOOR = 1e-10


@dataclass(frozen=True)
class Basis:
    """Affine basis of the supporting plane, one column per basis vector.

    Every variable block of every column sums to 1, so mixtures with
    coordinates summing to 1 are again block-stochastic.
    """

    schema: Schema
    vectors: np.ndarray  # (total_cells, k)

    def __post_init__(self):
        vectors = np.asarray(self.vectors, dtype=float)
        if vectors.ndim == 1:
            vectors = vectors[:, np.newaxis]
        if vectors.shape[0] != self.schema.total_cells:
            raise DataError(
                f"basis needs {self.schema.total_cells} rows, got {vectors.shape}"
            )
        for j in range(1, self.schema.n_variables + 1):
            sums = vectors[self.schema.block_slice(j)].sum(axis=0)
            if np.max(np.abs(sums - 1.0)) > 1e-12:
                raise DataError(f"basis block {j} does not sum to 1")
        vectors.setflags(write=False)
        object.__setattr__(self, "vectors", vectors)

    @property
    def k(self) -> int:
        return self.vectors.shape[1]

    def to_json(self) -> dict:
        return {
            "levels": list(self.schema.levels),
            "k": self.k,
            "lambda": [list(map(float, col)) for col in self.vectors.T],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Basis":
        try:
            schema = Schema(tuple(obj["levels"]))
            vectors = np.array(obj["lambda"], dtype=float).T
            if vectors.shape[1] != int(obj["k"]):
                raise DataError("lambda rows do not match k")
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"malformed basis JSON: {exc}") from exc
        return cls(schema, vectors)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_json(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "Basis":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise DataError(f"invalid basis file {path}: {exc}") from exc
        return cls.from_json(obj)


@dataclass(frozen=True)
class ReducedPoints:
    """Normalized columns mapped into the reduced space, as point rows."""

    points: np.ndarray  # (n_points, m)
    center: np.ndarray  # (m,)
    centered: np.ndarray  # (n_points, m)

    @property
    def m(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class PlaneFitReport:
    """Diagnostics of one plane estimation run."""

    k0: int
    k: int
    minor_shape: tuple[int, int]
    singular_values: np.ndarray
    eigenvalues: np.ndarray
    residual: float
    rank_threshold: float
    eig_threshold: float
    noise_scale: float
    n_columns: int
    n_columns_dropped_completion: int
    n_columns_dropped_normalization: int
    n_cells_imputed: int
    degenerate: bool

    def to_json(self) -> dict:
        return {
            "k0": self.k0,
            "k": self.k,
            "minor_shape": list(self.minor_shape),
            "singular_values": [float(x) for x in self.singular_values],
            "eigenvalues": [float(x) for x in self.eigenvalues],
            "residual": float(self.residual),
            "rank_threshold": float(self.rank_threshold),
            "eig_threshold": float(self.eig_threshold),
            "noise_scale": float(self.noise_scale),
            "n_columns": self.n_columns,
            "n_columns_dropped_completion": self.n_columns_dropped_completion,
            "n_columns_dropped_normalization": self.n_columns_dropped_normalization,
            "n_cells_imputed": self.n_cells_imputed,
            "degenerate": self.degenerate,
        }


# -- step (i): fully observed minor ---------------------------------------


def find_observed_minor(matrix: MomentMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Greedy search for a large fully observed submatrix.

    Variables are split into a column-support set S and its complement;
    the minor consists of the rows of variables outside S and the columns
    whose pattern support lies inside S.  S grows greedily, each step
    adding the variable that maximizes (rows outside) x (columns inside),
    ties broken by variable index, stopping when no addition improves.

    Returns (row indices, column indices) into the matrix.
    """
    schema = matrix.schema
    j_count = schema.n_variables
    supports = [
        tuple(j for j, x in enumerate(pat, start=1) if x != 0)
        for pat in matrix.columns
    ]
    cols_of_var: dict[int, list[int]] = {j: [] for j in range(1, j_count + 1)}
    for c, supp in enumerate(supports):
        for j in supp:
            cols_of_var[j].append(c)

    missing = np.array([len(s) for s in supports])  # support vars outside S
    in_s = np.zeros(j_count + 1, dtype=bool)
    rows_outside = schema.total_cells
    n_inside = int((missing == 0).sum())
    area = rows_outside * n_inside

    while True:
        best = None
        for j in range(1, j_count + 1):
            if in_s[j]:
                continue
            gain = sum(1 for c in cols_of_var[j] if missing[c] == 1)
            cand_rows = rows_outside - schema.levels[j - 1]
            cand_area = cand_rows * (n_inside + gain)
            if best is None or cand_area > best[0]:
                best = (cand_area, j, gain)
        if best is None or best[0] <= area:
            break
        area, j, gain = best
        in_s[j] = True
        rows_outside -= schema.levels[j - 1]
        n_inside += gain
        for c in cols_of_var[j]:
            missing[c] -= 1

    row_idx = np.array(
        [
            r
            for j in range(1, j_count + 1)
            if not in_s[j]
            for r in range(schema.block_start(j), schema.block_start(j) + schema.levels[j - 1])
        ],
        dtype=int,
    )
    col_idx = np.flatnonzero(missing == 0)
    if row_idx.size == 0 or col_idx.size == 0:
        raise DegenerateInputError("no usable fully observed minor")
    if row_idx.size < 2 and col_idx.size < 2:
        raise DegenerateInputError(
            f"largest fully observed minor is {row_idx.size}x{col_idx.size}"
        )
    return row_idx, col_idx


# -- step (ii) part 1: rank from the minor ---------------------------------


@dataclass(frozen=True)
class RankEstimate:
    k0: int
    singular_values: np.ndarray
    threshold: float
    noise_scale: float  # mean per-column sampling noise of the minor


def estimate_rank(
    matrix: MomentMatrix,
    row_idx: np.ndarray,
    col_idx: np.ndarray,
    *,
    rank_threshold_factor: float = 1.0,
) -> RankEstimate:
    """Estimate the latent rank from the minor's singular spectrum.

    The threshold is the largest singular value that sampling noise
    alone would reach: each entry of the minor carries binomial noise
    with standard deviation sqrt(v(1-v)/n), and a few simulated noise
    matrices with exactly those entry scales (fixed internal seed, so
    the estimate is reproducible) give its top singular value.  A scalar
    formula would miss how unevenly the noise spreads over columns.  On
    exact input (no sample size) only a small relative floor applies.
    """
    minor = matrix.values[np.ix_(row_idx, col_idx)]
    if not np.isfinite(minor).all():
        raise DataError("minor contains unobserved cells")
    svals = np.linalg.svd(minor, compute_uv=False)
    if matrix.sample_size:
        v = np.clip(minor, 0.0, 1.0)
        entry_sd = np.sqrt(v * (1.0 - v) / matrix.sample_size)
        noise = float(np.mean(np.linalg.norm(entry_sd, axis=0)))
        rng = np.random.default_rng(1_000_003)
        noise_top = max(
            np.linalg.svd(
                rng.standard_normal(minor.shape) * entry_sd, compute_uv=False
            )[0]
            for _ in range(4)
        )
    else:
        noise = 0.0
        noise_top = 0.0
    threshold = max(rank_threshold_factor * noise_top, _RANK_FLOOR * svals[0])
    k0 = int((svals > threshold).sum())
    if k0 == 0:
        raise ModelNotApplicableError(
            "every singular value of the observed minor is below the noise "
            f"threshold {threshold:.3e}; the data carry no usable structure"
        )
    if k0 > min(minor.shape) // 2:
        raise ModelNotApplicableError(
            f"estimated rank {k0} is too large for a {minor.shape[0]}x"
            f"{minor.shape[1]} minor; more variables or levels are needed"
        )
    return RankEstimate(
        k0=k0, singular_values=svals, threshold=threshold, noise_scale=noise
    )


# -- step (ii) part 2: completion -------------------------------------------


@dataclass(frozen=True)
class CompletionResult:
    kept: np.ndarray  # indices into matrix.columns
    values: np.ndarray  # (total_cells, len(kept)), fully filled
    n_cells_imputed: int
    n_dropped: int


def _support_mask(schema: Schema, supp: tuple[int, ...]) -> np.ndarray:
    """Boolean mask of rows observed for columns with the given support."""
    mask = np.ones(schema.total_cells, dtype=bool)
    for j in supp:
        mask[schema.block_slice(j)] = False
    return mask


class _DonorIndex:
    """Per-matrix index for generating donor candidates lazily.

    For a target support and missing block ``j``, donors must leave
    variable ``j`` free.  Priority: lowest pattern order, then most
    shared observed rows with the target, then lexicographically
    smallest pattern.  Within order 1 the priority is computable without
    scanning columns: donors on a target-support variable share the most
    rows, then variables with fewer levels; pattern order within ties is
    descending variable index (the later the fixed variable, the smaller
    the pattern tuple).
    """

    def __init__(self, matrix: MomentMatrix):
        self.matrix = matrix
        schema = matrix.schema
        self.schema = schema
        self.zero_idx = matrix._col_index.get((0,) * schema.n_variables)
        self.ord1: dict[int, list[int]] = {
            j: [] for j in range(1, schema.n_variables + 1)
        }
        self.higher: list[tuple[int, Pattern, tuple[int, ...], int]] = []
        self.support: dict[int, tuple[int, ...]] = {}
        for c, pat in enumerate(matrix.columns):
            supp = tuple(jj for jj, x in enumerate(pat, start=1) if x != 0)
            self.support[c] = supp
            order = len(supp)
            if order == 1:
                self.ord1[supp[0]].append(c)
            elif order > 1:
                self.higher.append((c, pat, supp, order))

    def candidates(self, supp: tuple[int, ...], j: int):
        if self.zero_idx is not None:
            yield self.zero_idx
        levels = self.schema.levels
        for v in sorted((v for v in supp if v != j), reverse=True):
            yield from self.ord1[v]
        others = (
            v
            for v in range(1, self.schema.n_variables + 1)
            if v != j and v not in supp
        )
        for v in sorted(others, key=lambda v: (levels[v - 1], -v)):
            yield from self.ord1[v]
        if self.higher:
            # Rarely reached: only when low-order donors cannot span the rank.
            supp_set = set(supp)
            cells_supp = sum(levels[v - 1] for v in supp)
            scored = []
            for c, pat, s, order in self.higher:
                if j in s:
                    continue
                extra = sum(levels[v - 1] for v in s if v not in supp_set)
                shared = self.schema.total_cells - cells_supp - extra
                scored.append((order, -shared, pat, c))
            scored.sort()
            for _, _, _, c in scored:
                yield c


def _select_donors(
    index: _DonorIndex,
    supp: tuple[int, ...],
    j: int,
    k0: int,
    obs_masks: dict[tuple[int, ...], np.ndarray],
) -> tuple[np.ndarray, np.ndarray] | None:
    """Pick ``k0`` donor columns with jointly independent restrictions.

    Candidates are scanned in priority order; one is accepted only if it
    keeps at least ``k0`` shared observed rows and strictly increases the
    numerical rank of the stacked restriction (exact count identities make
    naive top-``k0`` picks singular, e.g. all levels of one variable plus
    the all-free column).
    """
    matrix = index.matrix
    target_mask = obs_masks[supp]
    chosen: list[int] = []
    shared = target_mask.copy()
    for c in index.candidates(supp, j):
        cand_shared = shared & obs_masks[index.support[c]]
        if int(cand_shared.sum()) < k0:
            continue
        rows = np.flatnonzero(cand_shared)
        block = matrix.values[np.ix_(rows, chosen + [c])]
        norms = np.linalg.norm(block, axis=0)
        if norms.min() <= 0:
            continue
        svals = np.linalg.svd(block / norms, compute_uv=False)
        if svals[-1] <= 1e-6:
            continue
        chosen.append(c)
        shared = cand_shared
        if len(chosen) == k0:
            return np.array(chosen), np.flatnonzero(shared)
    return None


def complete_matrix(matrix: MomentMatrix, k0: int) -> CompletionResult:
    """Impute every unobservable cell by donor-column least squares.

    Each column with missing blocks gets one solve per missing block: the
    coefficients that reproduce it on the shared observed rows of the
    donors are applied to the donors' rows of the missing block.  Columns
    with fewer than ``k0`` observed values, or without an admissible donor
    set, are dropped; more than half of the columns dropping is an error.
    """
    if k0 < 1:
        raise ValueError("k0 must be positive")
    schema = matrix.schema
    values = matrix.values.copy()
    n_cols = len(matrix.columns)

    groups: dict[tuple[int, ...], list[int]] = {}
    dropped: set[int] = set()
    for c, pat in enumerate(matrix.columns):
        supp = tuple(j for j, x in enumerate(pat, start=1) if x != 0)
        if not supp:
            continue
        if int(matrix.observed[:, c].sum()) < k0:
            dropped.add(c)
            logger.debug("dropping column %s: fewer than %d observed values",
                         pat, k0)
            continue
        groups.setdefault(supp, []).append(c)

    obs_masks = {supp: _support_mask(schema, supp) for supp in groups}
    obs_masks[()] = np.ones(schema.total_cells, dtype=bool)
    for c, pat in enumerate(matrix.columns):
        supp_c = tuple(j for j, x in enumerate(pat, start=1) if x != 0)
        if supp_c not in obs_masks:
            obs_masks[supp_c] = _support_mask(schema, supp_c)

    n_imputed = 0
    index = _DonorIndex(matrix)
    donor_cache: dict[tuple[tuple[int, ...], int], tuple | None] = {}
    for supp in sorted(groups):
        cols = [c for c in groups[supp] if c not in dropped]
        if not cols:
            continue
        for j in supp:
            key = (supp, j)
            if key not in donor_cache:
                donor_cache[key] = _select_donors(index, supp, j, k0, obs_masks)
            picked = donor_cache[key]
            if picked is None:
                logger.warning(
                    "no admissible donor set for support %s, block %d; "
                    "dropping %d column(s)", supp, j, len(cols)
                )
                dropped.update(cols)
                cols = []
                break
            donors, rows = picked
            a = matrix.values[np.ix_(rows, donors)]
            b = matrix.values[np.ix_(rows, cols)]
            coef, *_ = np.linalg.lstsq(a, b, rcond=None)
            block = schema.block_slice(j)
            block_rows = np.arange(block.start, block.stop)
            values[np.ix_(block_rows, cols)] = (
                matrix.values[np.ix_(block_rows, donors)] @ coef
            )
            n_imputed += block_rows.size * len(cols)

    if len(dropped) > n_cols / 2:
        raise NumericalError(
            f"completion dropped {len(dropped)} of {n_cols} columns; "
            "the moment matrix is too incomplete for this rank"
        )
    kept = np.array([c for c in range(n_cols) if c not in dropped], dtype=int)
    out = values[:, kept]
    assert np.isfinite(out).all()
    return CompletionResult(
        kept=kept, values=out, n_cells_imputed=n_imputed, n_dropped=len(dropped)
    )


# -- step (iii): column normalization ---------------------------------------


def normalize_columns(
    matrix: MomentMatrix, completion: CompletionResult
) -> tuple[np.ndarray, np.ndarray, int]:
    """Divide by column mass and rescale imputed blocks to sum exactly 1.

    Observed blocks already sum to the column mass by the counting
    identity.  Imputed blocks are rescaled by their own sum; a block sum
    of magnitude below 1e-6 marks a failed imputation and drops the
    column.  Returns (normalized values, kept indices into
    ``matrix.columns``, number of columns dropped here).
    """
    schema = matrix.schema
    mass = matrix.column_mass[completion.kept]
    normalized = completion.values / mass[np.newaxis, :]
    keep = np.ones(len(completion.kept), dtype=bool)
    for pos, c in enumerate(completion.kept):
        pat = matrix.columns[c]
        for j in range(1, schema.n_variables + 1):
            if pat[j - 1] == 0:
                continue
            block = schema.block_slice(j)
            s = normalized[block, pos].sum()
            if abs(s) < 1e-6:
                keep[pos] = False
                logger.warning(
                    "imputed block %d of column %s sums to %.2e; dropping", j, pat, s
                )
                break
            normalized[block, pos] /= s
    n_dropped = int((~keep).sum())
    return normalized[:, keep], completion.kept[keep], n_dropped


# -- step (iv): isometric reduction -----------------------------------------


def reduction_matrix(schema: Schema) -> np.ndarray:
    """Block-diagonal map to a space with one dimension fewer per variable.

    Each variable block is (L_j - 1) x L_j: identity on levels 2..L_j and
    a constant first column -(sqrt(L_j) - 1)/(L_j - 1), which makes the
    map an isometry between block-sum-one slices.
    """
    m = schema.total_cells - schema.n_variables
    a = np.zeros((m, schema.total_cells))
    r = 0
    for j in range(1, schema.n_variables + 1):
        lv = schema.levels[j - 1]
        start = schema.block_start(j)
        coeff = -(math.sqrt(lv) - 1.0) / (lv - 1.0)
        for l in range(2, lv + 1):
            a[r, start] = coeff
            a[r, start + l - 1] = 1.0
            r += 1
    return a


def reduce_dimension(schema: Schema, columns: np.ndarray) -> ReducedPoints:
    """Map normalized columns into the reduced space; one point per column."""
    points = (reduction_matrix(schema) @ columns).T
    center = points.mean(axis=0)
    return ReducedPoints(points=points, center=center, centered=points - center)


def lift_point(schema: Schema, point: np.ndarray) -> np.ndarray:
    """Inverse of the reduction on the block-sum-one slice.

    The free levels are copied back (minus the rotation of the first
    cell); the first cell of each block is then set to 1 minus the rest,
    making block sums exactly 1.
    """
    point = np.asarray(point, dtype=float)
    if point.shape != (schema.total_cells - schema.n_variables,):
        raise ValueError("reduced point has wrong dimension")
    out = np.empty(schema.total_cells)
    r = 0
    for j in range(1, schema.n_variables + 1):
        lv = schema.levels[j - 1]
        w = point[r : r + lv - 1]
        r += lv - 1
        coeff = -(math.sqrt(lv) - 1.0) / (lv - 1.0)
        first = (1.0 - w.sum()) / math.sqrt(lv)
        rest = w - coeff * first
        block = schema.block_slice(j)
        out[block.start] = 1.0 - rest.sum()
        out[block.start + 1 : block.stop] = rest
    return out


# -- step (v): affine plane fit ----------------------------------------------


@dataclass(frozen=True)
class AffineFit:
    center: np.ndarray
    directions: np.ndarray  # (m, k - 1) eigenvector columns
    eigenvalues: np.ndarray  # full spectrum, descending
    k: int
    threshold: float
    residual: float
    degenerate: bool


def fit_affine_plane(
    points: np.ndarray,
    *,
    noise_scale: float = 0.0,
    eig_threshold_factor: float = 1.0,
    k_override: int | None = None,
    weights: np.ndarray | None = None,
) -> AffineFit:
    """Best-fitting affine plane through a point cloud.

    The plane passes through the (weighted) center of gravity and is
    spanned by the leading eigenvectors of the scatter matrix; the sum of
    squared distances to the plane of dimension p is the sum of the
    trailing eigenvalues.  The plane dimension is the number of
    eigenvalues at or above ``eig_threshold_factor * n_points *
    noise_scale**2`` (with small floors), so the returned ``k`` — one
    more than the dimension — counts the affinely independent basis
    points.  ``k_override`` bypasses the threshold rule.

    Eigenvector signs are fixed: first coordinate of magnitude above
    1e-9 is positive.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise ValueError("points must be a 2-d array")
    n_pts, m = points.shape
    if n_pts < 1:
        raise DataError("no points to fit")
    if weights is None:
        center = points.mean(axis=0)
        centered = points - center
        scatter = centered.T @ centered
    else:
        weights = np.asarray(weights, dtype=float)
        weights = weights * (n_pts / weights.sum())
        center = weights @ points / n_pts
        centered = points - center
        scatter = (centered * weights[:, np.newaxis]).T @ centered

    eigvals, eigvecs = np.linalg.eigh(scatter)
    eigvals = eigvals[::-1]
    eigvecs = eigvecs[:, ::-1]
    eigvals = np.maximum(eigvals, 0.0)

    gamma_max = eigvals[0] if eigvals.size else 0.0
    threshold = max(
        eig_threshold_factor * n_pts * noise_scale**2,
        _EIG_FLOOR * gamma_max,
        n_pts * m * 1e-26,
    )
    degenerate = False
    if k_override is not None:
        if not 1 <= k_override <= m + 1:
            raise ModelNotApplicableError(
                f"k override {k_override} impossible in reduced dimension {m}"
            )
        k = int(k_override)
    else:
        k = int((eigvals >= threshold).sum()) + 1
        if k == 1:
            degenerate = True
            logger.warning(
                "all scatter eigenvalues are below %.3e; "
                "fitting a degenerate single-point model", threshold,
            )

    directions = eigvecs[:, : k - 1].copy()
    for i in range(directions.shape[1]):
        z = directions[:, i]
        nz = np.flatnonzero(np.abs(z) > 1e-9)
        if nz.size and z[nz[0]] < 0:
            directions[:, i] = -z
    residual = float(scatter.trace() - eigvals[: k - 1].sum())
    return AffineFit(
        center=center,
        directions=directions,
        eigenvalues=eigvals,
        k=k,
        threshold=threshold,
        residual=residual,
        degenerate=degenerate,
    )


# -- step (vi): lift ----------------------------------------------------------


def lift_basis(schema: Schema, fit: AffineFit) -> Basis:
    """Lift center and center+directions back to cell space."""
    cols = [lift_point(schema, fit.center)]
    for i in range(fit.directions.shape[1]):
        cols.append(lift_point(schema, fit.center + fit.directions[:, i]))
    return Basis(schema, np.column_stack(cols))


# -- orchestration -------------------------------------------------------------


def estimate_plane(
    matrix: MomentMatrix,
    *,
    rank_threshold_factor: float = 1.0,
    eig_threshold_factor: float = 1.0,
    k_override: int | None = None,
    column_weighting: bool = False,
) -> tuple[Basis, PlaneFitReport]:
    """Run the full supporting-plane recovery on a moment matrix.

    ``k_override`` fixes the dimension everywhere it matters: it is used
    as the completion rank and as the final plane dimension, while the
    spectra are still computed and reported for diagnostics.
    ``column_weighting`` (off by default, matching the unweighted
    formulation) downweights noisy columns in the plane fit; it has no
    effect on exact input.
    """
    row_idx, col_idx = find_observed_minor(matrix)
    rank = estimate_rank(
        matrix, row_idx, col_idx, rank_threshold_factor=rank_threshold_factor
    )
    k0 = int(k_override) if k_override is not None else rank.k0

    completion = complete_matrix(matrix, k0)
    normalized, kept, n_norm_dropped = normalize_columns(matrix, completion)
    if normalized.shape[1] == 0:
        raise NumericalError("no columns survived normalization")
    reduced = reduce_dimension(matrix.schema, normalized)

    weights = None
    if column_weighting and matrix.sample_size:
        raw = matrix.values[:, kept]
        var = np.nansum(np.clip(raw, 0, 1) * (1 - np.clip(raw, 0, 1)), axis=0)
        eps2 = var / matrix.sample_size / matrix.column_mass[kept] ** 2
        weights = 1.0 / (eps2 + eps2.mean() + 1e-30)

    fit = fit_affine_plane(
        reduced.points,
        noise_scale=rank.noise_scale,
        eig_threshold_factor=eig_threshold_factor,
        k_override=k_override,
        weights=weights,
    )
    basis = lift_basis(matrix.schema, fit)
    report = PlaneFitReport(
        k0=k0,
        k=fit.k,
        minor_shape=(int(row_idx.size), int(col_idx.size)),
        singular_values=rank.singular_values,
        eigenvalues=fit.eigenvalues,
        residual=fit.residual,
        rank_threshold=rank.threshold,
        eig_threshold=fit.threshold,
        noise_scale=rank.noise_scale,
        n_columns=len(matrix.columns),
        n_columns_dropped_completion=completion.n_dropped,
        n_columns_dropped_normalization=n_norm_dropped,
        n_cells_imputed=completion.n_cells_imputed,
        degenerate=fit.degenerate,
    )
    return basis, report
