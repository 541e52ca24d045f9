"""Hybrid mode penalties: sparsity + total variation + ridge + nonnegativity.

Each mode d of a Kruskal model carries its own penalty on the vectorized
factor beta = vec(B_d):

    h(beta) = lambda1*||beta||_1 + lambda2*||D beta||_1
              + (lambda3/2)*||beta||_2^2 + indicator(beta >= 0)

where D takes first differences down each column of B_d separately
(block structure I_R kron bidiag(-1, +1)); differences never cross
column boundaries, so total variation acts within each rank-1 component.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "ModeRegConfig",
    "DifferenceOperator",
    "apply_diff",
    "apply_diff_transpose",
    "soft_threshold",
    "project_nonneg",
    "penalty_value",
]


@dataclass(frozen=True)
class ModeRegConfig:
    """Penalty weights for one mode.

    lambda1: l1 weight (sparsity), lambda2: total-variation weight
    (piecewise constancy), lambda3: ridge weight (smoothness), nonneg:
    whether the nonnegative-orthant indicator is active.
    """

    lambda1: float = 0.0
    lambda2: float = 0.0
    lambda3: float = 0.0
    nonneg: bool = False

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3"):
            v = getattr(self, name)
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"{name} must be finite and >= 0, got {v}")

    # Named presets.  LASSO: l1 only.  TV: differences only.  Fused
    # LASSO: l1 + TV.  Elastic net: l1 + ridge.  Each admits a
    # nonnegative variant.
    @classmethod
    def lasso(cls, lam, nonneg=False):
        return cls(lambda1=lam, nonneg=nonneg)

    @classmethod
    def total_variation(cls, lam, nonneg=False):
        return cls(lambda2=lam, nonneg=nonneg)

    @classmethod
    def fused_lasso(cls, lam1, lam2, nonneg=False):
        return cls(lambda1=lam1, lambda2=lam2, nonneg=nonneg)

    @classmethod
    def elastic_net(cls, lam1, lam3, nonneg=False):
        return cls(lambda1=lam1, lambda3=lam3, nonneg=nonneg)


class DifferenceOperator:
    """First differences within each column of an I_d x R factor matrix.

    Acts on vectors of length I_d*R laid out column-major; output has
    length (I_d-1)*R.  Applied matrix-free; :meth:`materialize` builds the
    dense matrix for testing.
    """

    __slots__ = ("size", "rank", "_gram")

    def __init__(self, size, rank):
        size = int(size)
        rank = int(rank)
        if size < 1 or rank < 1:
            raise ValueError("size and rank must be >= 1")
        self.size = size
        self.rank = rank
        self._gram = None

    @property
    def in_dim(self):
        return self.size * self.rank

    @property
    def out_dim(self):
        return (self.size - 1) * self.rank

    def apply(self, v):
        v = np.asarray(v, dtype=np.float64)
        if v.size != self.in_dim:
            raise ValueError(f"expected length {self.in_dim}, got {v.size}")
        cols = v.reshape(self.size, self.rank, order="F")
        return np.diff(cols, axis=0).ravel(order="F")

    def apply_transpose(self, w):
        w = np.asarray(w, dtype=np.float64)
        if w.size != self.out_dim:
            raise ValueError(f"expected length {self.out_dim}, got {w.size}")
        cols = w.reshape(self.size - 1, self.rank, order="F")
        out = np.zeros((self.size, self.rank))
        out[:-1] -= cols
        out[1:] += cols
        return out.ravel(order="F")

    def gram(self):
        """Dense D^T D, cached; appears in the ADMM normal matrix."""
        if self._gram is None:
            b = self._bidiag()
            self._gram = np.kron(np.eye(self.rank), b.T @ b)
        return self._gram

    def materialize(self):
        """Dense difference matrix (test reference for apply/apply_transpose)."""
        return np.kron(np.eye(self.rank), self._bidiag())

    def _bidiag(self):
        return np.eye(self.size - 1, self.size, k=1) - np.eye(self.size - 1, self.size)


def apply_diff(op, v):
    """Functional alias for ``op.apply(v)``."""
    return op.apply(v)


def apply_diff_transpose(op, w):
    """Functional alias for ``op.apply_transpose(w)``."""
    return op.apply_transpose(w)


def soft_threshold(v, beta):
    """Proximal operator of beta*||.||_1: shrink each entry toward zero."""
    if beta < 0:
        raise ValueError("threshold must be >= 0")
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - beta, 0.0)


def project_nonneg(v):
    """Elementwise projection onto the nonnegative orthant."""
    return np.maximum(np.asarray(v, dtype=np.float64), 0.0)


def penalty_value(beta, cfg, op):
    """Evaluate the hybrid penalty at a factor vector.

    Returns +inf when the nonnegativity indicator is active and violated;
    infeasible iterates are expected mid-optimization, so this is a value,
    not an error.
    """
    beta = np.asarray(beta, dtype=np.float64)
    if beta.size != op.in_dim:
        raise ValueError(f"expected length {op.in_dim}, got {beta.size}")
    if cfg.nonneg and np.any(beta < 0):
        return np.inf
    val = cfg.lambda1 * np.abs(beta).sum()
    if cfg.lambda2 != 0.0:
        val += cfg.lambda2 * np.abs(op.apply(beta)).sum()
    val += 0.5 * cfg.lambda3 * float(beta @ beta)
    return float(val)
