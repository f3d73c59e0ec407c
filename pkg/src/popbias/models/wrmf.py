"""Weighted matrix factorization for implicit feedback, fit by exact ALS.

Binary preferences p_ui = 1[count > 0] are weighted by confidences
c_ui = 1 + alpha * count (or a log variant) in

    sum_{u,i} c_ui (p_ui - x_u . y_i)^2 + ridge * (||X||^2 + ||Y||^2)

Each half-sweep solves every row's ridge-regularized normal equations
exactly with a dense Cholesky factorization of the d x d system, using the
standard decomposition Y^T C_u Y = Y^T Y + Y^T (C_u - I) Y over observed
items only.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from ..corpus import InteractionDataset
from ..errors import NumericalError, ValidationError
from .base import RecommenderModel

CONFIDENCE_MODES = ("linear", "log")


def _confidence_minus_one(counts: np.ndarray, alpha: float, confidence: str) -> np.ndarray:
    if confidence == "linear":
        return alpha * counts
    return alpha * np.log1p(counts)


def solve_factors(
    mat: sp.csr_matrix,
    other: np.ndarray,
    alpha: float,
    ridge: float,
    confidence: str = "linear",
) -> np.ndarray:
    """Exact conditional minimizers for one side of the factorization.

    ``mat`` has one row per entity being solved (users, or the transposed
    matrix for items); ``other`` is the fixed opposite factor matrix.  Rows
    with no observations come out exactly zero, which is their minimizer.
    """
    n = mat.shape[0]
    d = other.shape[1]
    gram = other.T @ other + ridge * np.eye(d)
    out = np.zeros((n, d))
    indptr, indices, data = mat.indptr, mat.indices, mat.data
    for i in range(n):
        lo, hi = indptr[i], indptr[i + 1]
        if lo == hi:
            continue
        cols = indices[lo:hi]
        extra = _confidence_minus_one(data[lo:hi].astype(np.float64), alpha, confidence)
        observed = other[cols]
        system = gram + observed.T @ (extra[:, None] * observed)
        rhs = observed.T @ (1.0 + extra)
        try:
            factor = scipy.linalg.cho_factor(system, lower=True)
        except scipy.linalg.LinAlgError as exc:  # cannot happen for ridge > 0
            raise NumericalError(f"singular normal equations at row {i}: {exc}") from exc
        out[i] = scipy.linalg.cho_solve(factor, rhs)
    return out


def wrmf_objective(
    train: InteractionDataset,
    user_factors: np.ndarray,
    item_factors: np.ndarray,
    alpha: float,
    ridge: float,
    confidence: str = "linear",
) -> float:
    """Full weighted loss over every (user, artist) cell plus both regularizers.

    Uses the algebraic identity that splits the sum into an all-cells term
    driven by the item gram matrix and a correction over observed cells, so
    the cost is O(nnz * d + d^2 * (users + artists)).
    """
    X = np.asarray(user_factors, dtype=np.float64)
    Y = np.asarray(item_factors, dtype=np.float64)
    if X.shape[0] != train.num_users or Y.shape[0] != train.num_artists:
        raise ValidationError("factor shapes do not match the dataset")
    if X.shape[1] != Y.shape[1]:
        raise ValidationError("user and item factor dimensions differ")
    gram = Y.T @ Y
    term_all = float(np.einsum("ud,de,ue->", X, gram, X))
    coo = train.counts.tocoo()
    scores = np.einsum("nd,nd->n", X[coo.row], Y[coo.col])
    extra = _confidence_minus_one(coo.data.astype(np.float64), alpha, confidence)
    conf = 1.0 + extra
    term_obs = float(np.sum(conf * (1.0 - scores) ** 2 - scores**2))
    reg = ridge * (float(np.sum(X * X)) + float(np.sum(Y * Y)))
    return term_all + term_obs + reg


class WrmfRecommender(RecommenderModel):
    """Alternating least squares over confidence-weighted binary preferences.

    Runs a fixed number of sweeps (no early stopping) for reproducibility;
    ``track_objective=True`` records the loss after every half-sweep in
    ``objective_trace_``.
    """

    model_type = "wrmf"

    def __init__(
        self,
        factors: int = 32,
        alpha: float = 10.0,
        ridge: float = 0.1,
        sweeps: int = 15,
        init_seed: int = 0,
        confidence: str = "linear",
        track_objective: bool = False,
    ):
        if factors < 1:
            raise ValidationError("factors must be >= 1")
        if not alpha > 0:
            raise ValidationError("alpha must be > 0")
        if not ridge > 0:
            raise ValidationError("ridge must be > 0")
        if sweeps < 1:
            raise ValidationError("sweeps must be >= 1")
        if confidence not in CONFIDENCE_MODES:
            raise ValidationError(f"confidence must be one of {CONFIDENCE_MODES}")
        if init_seed < 0:
            raise ValidationError("init_seed must be a non-negative integer")
        self.factors = int(factors)
        self.alpha = float(alpha)
        self.ridge = float(ridge)
        self.sweeps = int(sweeps)
        self.init_seed = int(init_seed)
        self.confidence = confidence
        self.track_objective = bool(track_objective)
        self.num_artists_ = None
        self.user_factors_ = None
        self.item_factors_ = None
        self.objective_trace_: list[float] = []

    def fit(self, train: InteractionDataset):
        counts = train.counts.astype(np.float64).tocsr()
        counts_t = counts.T.tocsr()
        rng = np.random.default_rng(self.init_seed)
        X = rng.uniform(-0.01, 0.01, size=(train.num_users, self.factors))
        Y = rng.uniform(-0.01, 0.01, size=(train.num_artists, self.factors))
        self.objective_trace_ = []
        for _ in range(self.sweeps):
            X = solve_factors(counts, Y, self.alpha, self.ridge, self.confidence)
            if self.track_objective:
                self.objective_trace_.append(
                    wrmf_objective(train, X, Y, self.alpha, self.ridge, self.confidence)
                )
            Y = solve_factors(counts_t, X, self.alpha, self.ridge, self.confidence)
            if self.track_objective:
                self.objective_trace_.append(
                    wrmf_objective(train, X, Y, self.alpha, self.ridge, self.confidence)
                )
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
            raise NumericalError("non-finite factors after ALS")
        self.user_factors_ = X
        self.item_factors_ = Y
        self.num_artists_ = train.num_artists
        return self

    def score_user(self, user: int) -> np.ndarray:
        self._require_fitted()
        return self.user_factors_[user] @ self.item_factors_.T

    def save_meta(self):
        return {
            "factors": self.factors,
            "alpha": self.alpha,
            "ridge": self.ridge,
            "sweeps": self.sweeps,
            "init_seed": self.init_seed,
            "confidence": self.confidence,
        }

    def save_arrays(self):
        self._require_fitted()
        return {"user_factors": self.user_factors_, "item_factors": self.item_factors_}

    @classmethod
    def load(cls, meta, arrays, train=None):
        model = cls(**meta)
        model.user_factors_ = arrays["user_factors"]
        model.item_factors_ = arrays["item_factors"]
        model.num_artists_ = model.item_factors_.shape[0]
        return model
