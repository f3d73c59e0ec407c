"""Sparse linear item-to-item model fit by per-column elastic-net regression.

Learns a sparse artist-by-artist weight matrix W minimizing

    0.5 * ||A - A W||^2_F  +  (l2/2) * ||W||^2_F  +  l1 * ||W||_1

subject to diag(W) = 0 and optionally W >= 0, by cyclic coordinate descent on
each column independently.  A user's scores are their train row times W.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.sparse as sp

from ..corpus import InteractionDataset
from ..errors import NumericalError, ValidationError
from .base import RecommenderModel


def _fit_column(gram, col_norms, j, l1, l2, non_negative, max_iters, tolerance, trace):
    """Coordinate descent for one column of W; returns (indices, weights).

    ``gram`` is the dense symmetric matrix A^T A.  Coordinates are visited in
    ascending artist index; convergence is max absolute coordinate change per
    sweep below ``tolerance``.
    """
    num_artists = gram.shape[0]
    corr = gram[j]
    if non_negative:
        # zero co-occurrence coordinates have optimum 0 under non-negativity
        cand = np.flatnonzero(corr)
        cand = cand[(cand != j) & (col_norms[cand] > 0)]
    else:
        cand = np.flatnonzero(col_norms > 0)
        cand = cand[cand != j]
    w = np.zeros(num_artists)
    if cand.size == 0:
        return cand, w[cand]
    partial = np.zeros(num_artists)  # gram @ w, maintained incrementally
    for _ in range(max_iters):
        max_delta = 0.0
        for i in cand:
            rho = corr[i] - (partial[i] - col_norms[i] * w[i])
            if non_negative:
                w_new = max(0.0, rho - l1) / (col_norms[i] + l2)
            elif rho > l1:
                w_new = (rho - l1) / (col_norms[i] + l2)
            elif rho < -l1:
                w_new = (rho + l1) / (col_norms[i] + l2)
            else:
                w_new = 0.0
            delta = w_new - w[i]
            if delta != 0.0:
                partial += delta * gram[i]
                w[i] = w_new
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
            if trace is not None:
                trace(j, w.copy())
        if not np.isfinite(max_delta):
            raise NumericalError(f"non-finite coordinate update in column {j}")
        if max_delta < tolerance:
            break
    if not np.all(np.isfinite(w[cand])):
        raise NumericalError(f"non-finite weights in column {j}")
    nz = cand[w[cand] != 0.0]
    return nz, w[nz]


class SlimRecommender(RecommenderModel):
    """Elastic-net item-to-item recommender.

    The fit materializes the dense A^T A gram matrix, so memory grows with
    the square of the artist count; intended for desk-scale catalogues.
    ``binarize`` fits on 0/1 occurrences instead of raw play counts.
    """

    model_type = "slim"

    def __init__(
        self,
        l1_penalty: float = 0.1,
        l2_penalty: float = 0.1,
        non_negative: bool = True,
        max_iters: int = 200,
        tolerance: float = 1e-5,
        binarize: bool = False,
    ):
        if l1_penalty < 0 or l2_penalty < 0:
            raise ValidationError("penalties must be >= 0")
        if max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        if not tolerance > 0:
            raise ValidationError("tolerance must be > 0")
        self.l1_penalty = float(l1_penalty)
        self.l2_penalty = float(l2_penalty)
        self.non_negative = bool(non_negative)
        self.max_iters = int(max_iters)
        self.tolerance = float(tolerance)
        self.binarize = bool(binarize)
        self.num_artists_ = None
        self.weights_ = None
        self._train_rows = None

    def _transform(self, train: InteractionDataset) -> sp.csr_matrix:
        mat = train.counts.astype(np.float64)
        if self.binarize:
            mat.data = np.ones_like(mat.data)
        return mat.tocsr()

    def fit(self, train: InteractionDataset, trace=None, threads: int = 1):
        """Fit all columns; ``trace(column, w_snapshot)`` observes every update.

        Columns are independent subproblems, so ``threads`` > 1 changes
        nothing but wall time (tracing forces the serial path).
        """
        mat = self._transform(train)
        gram = (mat.T @ mat).toarray()
        col_norms = np.diag(gram).copy()
        num_artists = train.num_artists

        def solve(j):
            return _fit_column(
                gram, col_norms, j, self.l1_penalty, self.l2_penalty,
                self.non_negative, self.max_iters, self.tolerance, trace,
            )

        if threads > 1 and trace is None:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                columns = list(pool.map(solve, range(num_artists)))
        else:
            columns = [solve(j) for j in range(num_artists)]

        indptr = np.zeros(num_artists + 1, dtype=np.int64)
        indptr[1:] = np.cumsum([len(idx) for idx, _ in columns])
        indices = np.concatenate([idx for idx, _ in columns]) if indptr[-1] else np.empty(0, np.int64)
        data = np.concatenate([vals for _, vals in columns]) if indptr[-1] else np.empty(0, np.float64)
        self.weights_ = sp.csc_matrix(
            (data, indices, indptr), shape=(num_artists, num_artists)
        )
        self.num_artists_ = num_artists
        self._train_rows = mat
        return self

    def bind_train(self, train: InteractionDataset):
        """Attach a training dataset so a loaded model can score users."""
        self._require_fitted()
        if train.num_artists != self.num_artists_:
            raise ValidationError("training dataset does not match model width")
        self._train_rows = self._transform(train)
        return self

    def score_user(self, user: int) -> np.ndarray:
        self._require_fitted()
        if self._train_rows is None:
            raise ValidationError("model needs a training dataset; call bind_train")
        row = self._train_rows.getrow(user)
        return np.asarray((row @ self.weights_).todense()).ravel()

    def save_meta(self):
        return {
            "l1_penalty": self.l1_penalty,
            "l2_penalty": self.l2_penalty,
            "non_negative": self.non_negative,
            "max_iters": self.max_iters,
            "tolerance": self.tolerance,
            "binarize": self.binarize,
        }

    def save_arrays(self):
        self._require_fitted()
        w = self.weights_
        return {
            "w_data": w.data,
            "w_indices": w.indices,
            "w_indptr": w.indptr,
            "w_shape": np.asarray(w.shape, dtype=np.int64),
        }

    @classmethod
    def load(cls, meta, arrays, train=None):
        model = cls(**meta)
        shape = tuple(arrays["w_shape"])
        model.weights_ = sp.csc_matrix(
            (arrays["w_data"], arrays["w_indices"], arrays["w_indptr"]), shape=shape
        )
        model.num_artists_ = shape[0]
        if train is not None:
            model.bind_train(train)
        return model


def slim_objective(
    train: InteractionDataset,
    weights,
    l1_penalty: float,
    l2_penalty: float,
    binarize: bool = False,
) -> float:
    """Value of the elastic-net reconstruction objective for a weight matrix."""
    weights = sp.csc_matrix(weights)
    if weights.shape != (train.num_artists, train.num_artists):
        raise ValidationError(
            f"weight matrix shape {weights.shape} does not match "
            f"{train.num_artists} artists"
        )
    mat = train.counts.astype(np.float64)
    if binarize:
        mat.data = np.ones_like(mat.data)
    residual = mat - mat @ weights
    fit_term = 0.5 * float(residual.multiply(residual).sum())
    ridge = 0.5 * l2_penalty * float(np.sum(weights.data**2))
    lasso = l1_penalty * float(np.sum(np.abs(weights.data)))
    return fit_term + ridge + lasso
