"""Scikit-learn style front end: fit the plane, score samples, solve moments."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .errors import DataError
from .frequency import Dataset, FrequencyTable, build_moment_matrix, frequency
from .plane import estimate_plane
from .schema import Schema
from .solver import assemble_system, solve_system, subpattern_closure


class LLSEstimator(BaseEstimator, TransformerMixin):
    """Latent linear structure estimator for categorical response data.

    ``fit`` builds the observable moment matrix of the sample and recovers
    the supporting plane of the mixing measure: its dimension ``k`` and a
    basis of block-stochastic vectors spanning it.  ``transform`` then
    maps each response row to its affine coordinates in that basis (the
    coordinates sum to one): the orthogonal projection of the row's
    one-hot profile onto the fitted plane.  ``conditional_moments`` runs
    the linear moment solver for chosen target patterns.

    Parameters
    ----------
    n_components : int, optional
        Force the plane dimension instead of estimating it from the
        singular spectrum.
    levels : sequence of int, optional
        Number of levels per variable.  Inferred from the data maximum
        when omitted, which under-counts levels that never occur.
    max_col_order : int, default 2
        Largest pattern order used for moment-matrix columns.
    rank_threshold_factor, eig_threshold_factor : float, default 1.0
        Multipliers on the noise-derived cutoffs of the two spectral
        decisions (dimension estimate, plane fit).
    column_weighting : bool, default False
        Down-weight noisy columns in the plane fit by their estimated
        sampling variance.
    moment_order : int, default 2
        Largest latent moment order carried by ``conditional_moments``.
    anchor_weight : float, default 10.0
        Relative weight of the exact rows (frequencies, normalization)
        in the moment solve.

    Attributes
    ----------
    schema_ : Schema
    dataset_ : Dataset
    moment_matrix_ : MomentMatrix
    basis_ : Basis
    report_ : PlaneFitReport
    n_components_ : int
        The fitted plane dimension.
    """

    def __init__(
        self,
        n_components=None,
        levels=None,
        max_col_order=2,
        rank_threshold_factor=1.0,
        eig_threshold_factor=1.0,
        column_weighting=False,
        moment_order=2,
        anchor_weight=10.0,
    ):
        self.n_components = n_components
        self.levels = levels
        self.max_col_order = max_col_order
        self.rank_threshold_factor = rank_threshold_factor
        self.eig_threshold_factor = eig_threshold_factor
        self.column_weighting = column_weighting
        self.moment_order = moment_order
        self.anchor_weight = anchor_weight

    def _make_schema(self, rows: np.ndarray) -> Schema:
        if self.levels is not None:
            return Schema(tuple(int(x) for x in self.levels))
        if rows.size and rows.min() < 1:
            raise DataError("levels must be coded 1..L_j (found entries < 1)")
        top = rows.max(axis=0)
        if (top < 2).any():
            j = int(np.argmax(top < 2)) + 1
            raise DataError(
                f"variable {j} never takes a second level; pass levels= "
                "explicitly if its range is known"
            )
        return Schema(tuple(int(x) for x in top))

    def fit(self, X, y=None):
        """Estimate the supporting plane from response rows.

        X : array-like of shape (n_samples, n_variables), integer levels
        coded 1..L_j.
        """
        rows = np.asarray(X)
        if rows.ndim != 2:
            raise DataError(f"expected a 2-d array of responses, got shape {rows.shape}")
        if not np.issubdtype(rows.dtype, np.integer):
            cast = rows.astype(np.int64)
            if not (cast == rows).all():
                raise DataError("responses must be integers")
            rows = cast
        schema = self._make_schema(rows)
        self.dataset_ = Dataset(schema, rows)
        self.schema_ = schema
        self.n_features_in_ = schema.n_variables
        self.moment_matrix_ = build_moment_matrix(
            self.dataset_, max_col_order=self.max_col_order
        )
        self.basis_, self.report_ = estimate_plane(
            self.moment_matrix_,
            rank_threshold_factor=self.rank_threshold_factor,
            eig_threshold_factor=self.eig_threshold_factor,
            k_override=self.n_components,
            column_weighting=self.column_weighting,
        )
        self.n_components_ = self.report_.k
        return self

    def transform(self, X) -> np.ndarray:
        """Affine coordinates of each row's one-hot profile in the basis.

        Returns an array of shape (n_samples, n_components_) whose rows
        sum to one.  The lifted combination ``coords @ basis_.vectors.T``
        is the closest point of the fitted plane to the row's profile.
        """
        check_is_fitted(self, "basis_")
        data = Dataset(self.schema_, np.asarray(X))
        n, total = data.n, self.schema_.total_cells
        offsets = np.array(
            [self.schema_.block_start(j) for j in range(1, self.schema_.n_variables + 1)]
        )
        profiles = np.zeros((n, total))
        profiles[np.arange(n)[:, None], offsets[None, :] + data.rows - 1] = 1.0

        lam = self.basis_.vectors
        k = lam.shape[1]
        if k == 1:
            return np.ones((n, 1))
        # minimize ||lam @ a - profile|| subject to sum(a) = 1, writing
        # a = (t, 1 - sum t) relative to the last basis column
        diffs = lam[:, :-1] - lam[:, -1:]
        t, *_ = np.linalg.lstsq(diffs, profiles.T - lam[:, -1:], rcond=None)
        return np.vstack([t, 1.0 - t.sum(axis=0)]).T

    def conditional_moments(self, targets, moment_order=None):
        """Solve for latent moments conditional on matching each target.

        Frequencies are taken from the fitted sample; the returned table
        covers every (pattern, moment index) pair in the targets' closure
        that the truncated linear system pins down.
        """
        check_is_fitted(self, "basis_")
        order = self.moment_order if moment_order is None else moment_order
        closure = subpattern_closure(self.schema_, targets)
        entries = {pat: frequency(self.dataset_, pat) for pat in closure}
        freqs = FrequencyTable(self.schema_, entries, sample_size=self.dataset_.n)
        system = assemble_system(self.basis_, freqs, targets, moment_order=order)
        return solve_system(system, anchor_weight=self.anchor_weight)
