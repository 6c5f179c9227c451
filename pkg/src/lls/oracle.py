"""Synthetic models with exactly computable moments.

A synthetic model mixes finitely many independent laws: each support point
``s`` carries latent coordinates ``g[s]`` (summing to 1) and a weight; its
cell probabilities are the corresponding combination of the basis columns.
All moments and conditional moments are finite sums over support points,
which makes these models exact oracles for the estimation pipeline.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import DataError, GenerationError
from .frequency import Dataset, FrequencyTable, MomentMatrix, observability_mask
from .schema import MomentIndex, Pattern, Schema, enumerate_patterns

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SyntheticModel:
    """Finite mixture of independent laws supported on a basis plane.

    Attributes
    ----------
    schema : Schema
    basis : ndarray, shape (total_cells, k)
        Columns are block-stochastic: each variable's block sums to 1.
    support : ndarray, shape (n_support, k)
        Latent coordinates of the support points; rows sum to 1.
    weights : ndarray, shape (n_support,)
        Positive mixing weights summing to 1.
    """

    schema: Schema
    basis: np.ndarray
    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=float)
        support = np.atleast_2d(np.asarray(self.support, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        total = self.schema.total_cells
        if basis.ndim != 2 or basis.shape[0] != total:
            raise DataError(f"basis must have {total} rows, got {basis.shape}")
        k = basis.shape[1]
        if support.shape[1] != k:
            raise DataError("support coordinates do not match basis width")
        if weights.shape != (support.shape[0],):
            raise DataError("one weight per support point required")
        if support.shape[0] < k:
            raise DataError("need at least k support points")
        for j in range(1, self.schema.n_variables + 1):
            sums = basis[self.schema.block_slice(j)].sum(axis=0)
            if np.max(np.abs(sums - 1.0)) > 1e-9:
                raise DataError(f"basis block {j} does not sum to 1")
        if np.max(np.abs(support.sum(axis=1) - 1.0)) > 1e-9:
            raise DataError("support coordinates must sum to 1")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise DataError("weights must be positive and sum to 1")
        cells = basis @ support.T  # (total_cells, n_support)
        if cells.min() < -1e-12 or cells.max() > 1 + 1e-12:
            raise DataError("support points leave the probability region")
        if k > 1:
            centered = support - support.mean(axis=0)
            svals = np.linalg.svd(centered, compute_uv=False)
            if svals[k - 2] <= 1e-12 * max(1.0, svals[0]):
                raise DataError("support points are affinely degenerate")
        for arr in (basis, support, weights, cells):
            arr.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "support", support)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "_cells", cells)

    @property
    def k(self) -> int:
        return self.basis.shape[1]

    @property
    def n_support(self) -> int:
        return self.support.shape[0]

    @property
    def cell_probabilities(self) -> np.ndarray:
        """Per-support-point cell probabilities, shape (total_cells, S)."""
        return self._cells


def generate_model(
    schema: Schema,
    k: int,
    n_support: int,
    seed,
    *,
    prob_range: tuple[float, float] = (0.02, 0.98),
    basis_concentration: float = 4.0,
    max_tries: int = 10_000,
) -> SyntheticModel:
    """Draw a random, comfortably non-degenerate synthetic model.

    Basis blocks and support coordinates are Dirichlet draws from the
    PCG64 stream seeded by ``seed`` (or an explicit Generator).  Draws are
    rejected until every cell probability lies inside ``prob_range``, the
    basis columns are independent, and the support points affinely span
    the full latent simplex slice; exhausting ``max_tries`` raises
    :class:`GenerationError` (a smaller ``k`` usually helps).

    ``basis_concentration`` is the Dirichlet parameter of the basis
    blocks: the default 4.0 keeps level probabilities mild; values below
    1 push them toward the simplex corners, giving well-separated
    components for recovery experiments on sampled data.
    """
    if k < 1:
        raise DataError("k must be at least 1")
    free_dims = schema.total_cells - schema.n_variables
    if k > free_dims:
        raise GenerationError(
            f"k={k} exceeds the {free_dims} degrees of freedom of the "
            "level probabilities; use a smaller k or more levels"
        )
    if n_support < k:
        raise DataError("need at least k support points")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    lo, hi = prob_range

    for attempt in range(max_tries):
        basis = np.empty((schema.total_cells, k))
        for kk in range(k):
            for j in range(1, schema.n_variables + 1):
                lv = schema.levels[j - 1]
                basis[schema.block_slice(j), kk] = rng.dirichlet(
                    np.full(lv, basis_concentration)
                )
        support = rng.dirichlet(np.full(k, 3.0), size=n_support)
        if basis.min() < lo or basis.max() > hi:
            continue
        cells = basis @ support.T
        if cells.min() < lo or cells.max() > hi:
            continue
        svals = np.linalg.svd(basis, compute_uv=False)
        if svals[-1] < 0.02 * svals[0]:
            continue
        if k > 1:
            centered = support - support.mean(axis=0)
            s2 = np.linalg.svd(centered, compute_uv=False)
            if s2[k - 2] < 0.05 * s2[0]:
                continue
        logger.debug("model generated after %d attempt(s)", attempt + 1)
        return SyntheticModel(schema, basis, support, rng.dirichlet(np.full(n_support, 5.0)))
    raise GenerationError(
        f"no admissible model in {max_tries} tries (k={k}, S={n_support}); "
        "try a smaller k or another seed"
    )


def _support_products(model: SyntheticModel, pattern: Pattern) -> np.ndarray:
    """Per-support-point product of fixed-cell probabilities."""
    out = np.ones(model.n_support)
    for j, l in enumerate(pattern, start=1):
        if l != 0:
            out *= model.cell_probabilities[model.schema.flatten(j, l)]
    return out


def exact_moment(model: SyntheticModel, pattern: Pattern) -> float:
    """Moment of a response pattern: weighted product over support points."""
    pattern = model.schema.validate_pattern(pattern)
    if all(x == 0 for x in pattern):
        return 1.0
    return float(model.weights @ _support_products(model, pattern))


def exact_conditional_moment(
    model: SyntheticModel, v: MomentIndex, pattern: Pattern
) -> float:
    """Conditional latent moment E(G^v | X matches pattern)."""
    pattern = model.schema.validate_pattern(pattern)
    mass = exact_moment(model, pattern)
    if mass <= 0:
        raise DataError(f"pattern {pattern} has zero probability")
    gpow = np.prod(model.support ** np.asarray(v, dtype=float), axis=1)
    return float(model.weights @ (gpow * _support_products(model, pattern))) / mass


def exact_frequency_table(model: SyntheticModel, patterns) -> FrequencyTable:
    """Exact moments of the given patterns as a frequency table."""
    entries = {}
    for pat in patterns:
        pat = model.schema.validate_pattern(pat)
        entries[pat] = exact_moment(model, pat)
    return FrequencyTable(model.schema, entries, sample_size=None)


@dataclass(frozen=True)
class ExactMoments:
    """Exact incomplete moment matrix together with its true completion."""

    matrix: MomentMatrix
    completion: np.ndarray  # (total_cells, n_columns), all cells filled


def exact_moment_matrix(model: SyntheticModel, max_col_order: int = 2) -> ExactMoments:
    """Exact moment matrix plus the true values of unobservable cells."""
    schema = model.schema
    if not 0 <= max_col_order <= schema.n_variables - 1:
        raise DataError(f"max_col_order must be in [0, {schema.n_variables - 1}]")
    cells = model.cell_probabilities
    kept = []
    cols = []
    masses = []
    for pat in enumerate_patterns(schema, max_col_order):
        colvec = model.weights * _support_products(model, pat)
        mass = float(colvec.sum())
        if mass <= 0.0:
            logger.warning("dropping zero-mass exact column %s", pat)
            continue
        kept.append(pat)
        cols.append(cells @ colvec)
        masses.append(mass)
    completion = np.stack(cols, axis=1)
    observed = observability_mask(schema, kept)
    values = np.where(observed, completion, np.nan)
    matrix = MomentMatrix(
        schema=schema,
        columns=tuple(kept),
        values=values,
        observed=observed,
        column_mass=np.array(masses),
        sample_size=None,
    )
    return ExactMoments(matrix=matrix, completion=completion)


def sample_dataset(model: SyntheticModel, n: int, seed) -> Dataset:
    """Draw ``n`` complete observations (component, then each variable)."""
    if n < 1:
        raise DataError("need at least one observation")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    schema = model.schema
    comps = rng.choice(model.n_support, size=n, p=model.weights)
    rows = np.empty((n, schema.n_variables), dtype=np.int32)
    for s in range(model.n_support):
        idx = np.flatnonzero(comps == s)
        if idx.size == 0:
            continue
        for j in range(1, schema.n_variables + 1):
            probs = model.cell_probabilities[schema.block_slice(j), s]
            cdf = np.cumsum(probs)
            draws = np.searchsorted(cdf, rng.random(idx.size), side="right")
            rows[idx, j - 1] = np.minimum(draws, schema.levels[j - 1] - 1) + 1
    return Dataset(schema, rows)


def principal_angles(a, b) -> np.ndarray:
    """Principal angles (radians, non-decreasing) between column spans.

    Accepts plain (total_cells, k) arrays or objects with a ``vectors``
    attribute.  Rank-deficient inputs are reduced to their actual span.
    """
    u = np.asarray(getattr(a, "vectors", a), dtype=float)
    v = np.asarray(getattr(b, "vectors", b), dtype=float)
    if u.ndim == 1:
        u = u[:, np.newaxis]
    if v.ndim == 1:
        v = v[:, np.newaxis]
    if u.shape[0] != v.shape[0]:
        raise ValueError("spanning sets live in different dimensions")
    qu = scipy.linalg.orth(u)
    qv = scipy.linalg.orth(v)
    svals = np.linalg.svd(qu.T @ qv, compute_uv=False)
    return np.arccos(np.clip(svals, 0.0, 1.0))


def reexpress_in_basis(model: SyntheticModel, vectors) -> SyntheticModel:
    """Rewrite the model's support coordinates in another basis of its plane.

    Useful for comparing solver output (which is relative to an estimated
    basis) against exact conditional moments.  Raises if the given basis
    does not span the model's support points.
    """
    vecs = np.asarray(getattr(vectors, "vectors", vectors), dtype=float)
    coords, *_ = np.linalg.lstsq(vecs, model.cell_probabilities, rcond=None)
    residual = np.abs(vecs @ coords - model.cell_probabilities).max()
    if residual > 1e-8:
        raise DataError(
            f"basis does not span the model's support (residual {residual:.2e})"
        )
    return SyntheticModel(model.schema, vecs, coords.T, model.weights)


# -- model files ---------------------------------------------------------


def model_to_json(model: SyntheticModel) -> dict:
    return {
        "levels": list(model.schema.levels),
        "k": model.k,
        "lambda": [list(map(float, col)) for col in model.basis.T],
        "support": [
            {"g": list(map(float, g)), "w": float(w)}
            for g, w in zip(model.support, model.weights)
        ],
    }


def model_from_json(obj: dict) -> SyntheticModel:
    try:
        schema = Schema(tuple(obj["levels"]))
        basis = np.array(obj["lambda"], dtype=float).T
        support = np.array([p["g"] for p in obj["support"]], dtype=float)
        weights = np.array([p["w"] for p in obj["support"]], dtype=float)
        if basis.shape[1] != int(obj["k"]):
            raise DataError("lambda rows do not match k")
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed model JSON: {exc}") from exc
    return SyntheticModel(schema, basis, support, weights)


def save_model(model: SyntheticModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_json(model), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_model(path) -> SyntheticModel:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"invalid model file {path}: {exc}") from exc
    return model_from_json(obj)
