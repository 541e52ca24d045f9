"""Dense tensors, Kruskal (CP) models, and the multilinear kernels on them.

Every tensor is linearized in generalized column-major order: entry
(i_1, ..., i_D) sits at flat index i_1 + I_1*i_2 + I_1*I_2*i_3 + ...
(0-based).  All vec/unvec operations stack columns, and the mode-d
unfolding enumerates the remaining modes with the lowest mode varying
fastest.  Mixing conventions silently corrupts every identity below, so
this module is the single owner of the layout.

Modes are 0-based throughout the package: mode 0 is the first axis.
"""

import string

import numpy as np

__all__ = [
    "DenseTensor",
    "KruskalModel",
    "matricize",
    "fold",
    "vectorize",
    "unvec",
    "khatri_rao",
    "khatri_rao_excluding",
    "mttkrp",
    "kruskal_reconstruct",
    "inner_product",
    "kruskal_inner_product",
]


class DenseTensor:
    """A D-way array of float64 values with an explicit flat layout.

    Parameters
    ----------
    dims : sequence of int
        Extent of each mode, all >= 1.
    values : 1d array-like
        Flat values in column-major linearization order; length must
        equal the product of `dims`.
    """

    __slots__ = ("dims", "values")

    def __init__(self, dims, values):
        dims = tuple(int(d) for d in dims)
        if len(dims) < 1 or any(d < 1 for d in dims):
            raise ValueError(f"dims must be >= 1, got {dims}")
        values = np.asarray(values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("values must be a flat vector; use from_array for shaped input")
        if values.size != int(np.prod(dims)):
            raise ValueError(
                f"values length {values.size} does not match dims {dims}"
            )
        self.dims = dims
        self.values = values

    @classmethod
    def from_array(cls, arr):
        """Wrap an ndarray, reading its entries in column-major order."""
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim < 1:
            arr = arr.reshape(1)
        return cls(arr.shape, arr.ravel(order="F"))

    def to_array(self):
        """The shaped ndarray view of this tensor."""
        return self.values.reshape(self.dims, order="F")

    @property
    def ndim(self):
        return len(self.dims)

    @property
    def size(self):
        return self.values.size

    def norm(self):
        """Frobenius norm."""
        return float(np.linalg.norm(self.values))

    def copy(self):
        return DenseTensor(self.dims, self.values.copy())

    def __repr__(self):
        return f"DenseTensor(dims={self.dims})"


class KruskalModel:
    """Rank-R CP model: a list of D factor matrices, one per mode.

    Factor d has shape (I_d, R); the represented tensor is the sum over
    r of the outer products of the factors' r-th columns.
    """

    __slots__ = ("factors",)

    def __init__(self, factors):
        factors = [np.asarray(f, dtype=np.float64) for f in factors]
        if not factors:
            raise ValueError("need at least one factor matrix")
        for f in factors:
            if f.ndim != 2:
                raise ValueError("factors must be matrices")
        ranks = {f.shape[1] for f in factors}
        if len(ranks) != 1:
            raise ValueError(f"factors disagree on rank: {sorted(ranks)}")
        if factors[0].shape[1] < 1:
            raise ValueError("rank must be >= 1")
        self.factors = factors

    @property
    def rank(self):
        return self.factors[0].shape[1]

    @property
    def dims(self):
        return tuple(f.shape[0] for f in self.factors)

    @property
    def ndim(self):
        return len(self.factors)

    def copy(self):
        return KruskalModel([f.copy() for f in self.factors])

    def __repr__(self):
        return f"KruskalModel(dims={self.dims}, rank={self.rank})"


def _check_mode(mode, ndim):
    if not 0 <= mode < ndim:
        raise ValueError(f"mode {mode} out of range for a {ndim}-way tensor")


def matricize(t, mode):
    """Mode-`mode` unfolding of a tensor.

    Returns the I_mode x (prod of other dims) matrix whose (i, j) entry
    is the tensor entry with i in position `mode` and j enumerating the
    remaining indices, lowest remaining mode fastest.
    """
    _check_mode(mode, t.ndim)
    a = t.to_array()
    return np.moveaxis(a, mode, 0).reshape(t.dims[mode], -1, order="F")


def fold(m, dims, mode):
    """Inverse of :func:`matricize`: rebuild the tensor from an unfolding."""
    dims = tuple(int(d) for d in dims)
    _check_mode(mode, len(dims))
    m = np.asarray(m, dtype=np.float64)
    rest = [dims[d] for d in range(len(dims)) if d != mode]
    a = m.reshape([dims[mode]] + rest, order="F")
    return DenseTensor.from_array(np.moveaxis(a, 0, mode))


def vectorize(m):
    """Stack the columns of a matrix (or tensor) into one vector."""
    if isinstance(m, DenseTensor):
        return m.values.copy()
    return np.asarray(m, dtype=np.float64).ravel(order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vectorize` for matrices."""
    v = np.asarray(v, dtype=np.float64)
    if v.size != rows * cols:
        raise ValueError(f"cannot unvec length {v.size} into {rows}x{cols}")
    return v.reshape(rows, cols, order="F")


def khatri_rao(a, b):
    """Columnwise Kronecker product of two matrices with equal column counts."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ValueError("khatri_rao expects matrices")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"column counts differ: {a.shape[1]} vs {b.shape[1]}")
    # column k is kron(a[:, k], b[:, k])
    return (a[:, None, :] * b[None, :, :]).reshape(a.shape[0] * b.shape[0], a.shape[1])


def khatri_rao_excluding(model, mode):
    """Khatri-Rao chain of every factor except `mode`, highest mode first.

    The chain order (B_{D-1} kr ... kr B_{mode+1} kr B_{mode-1} kr ... kr B_0
    in 0-based modes) is what makes ``matricize(full, d) == B_d @ result.T``
    hold under the column-major layout; do not reorder it.
    """
    _check_mode(mode, model.ndim)
    others = [model.factors[d] for d in range(model.ndim) if d != mode]
    if not others:
        return np.ones((1, model.rank))
    out = others[-1]
    for f in reversed(others[:-1]):
        out = khatri_rao(out, f)
    return out


def mttkrp(t, model, mode):
    """Matricized tensor times Khatri-Rao product for one mode.

    Equals ``matricize(t, mode) @ khatri_rao_excluding(model, mode)`` but is
    computed by a single multi-way contraction that never materializes the
    Khatri-Rao factor.
    """
    _check_mode(mode, t.ndim)
    if t.dims != model.dims:
        raise ValueError(f"tensor dims {t.dims} do not match model dims {model.dims}")
    D = t.ndim
    if D > 25:
        raise ValueError("contraction kernel supports at most 25 modes")
    letters = string.ascii_lowercase
    subs = [letters[:D]]
    operands = [t.to_array()]
    for d in range(D):
        if d == mode:
            continue
        subs.append(letters[d] + "z")
        operands.append(model.factors[d])
    expr = ",".join(subs) + "->" + letters[mode] + "z"
    return np.einsum(expr, *operands, optimize=True)


def kruskal_reconstruct(model):
    """Densify a Kruskal model into a full tensor."""
    m0 = model.factors[0] @ khatri_rao_excluding(model, 0).T
    return fold(m0, model.dims, 0)


def inner_product(a, b):
    """Elementwise inner product of two tensors of identical dims."""
    if a.dims != b.dims:
        raise ValueError(f"dims mismatch: {a.dims} vs {b.dims}")
    return float(a.values @ b.values)


def kruskal_inner_product(x, model, mode=0):
    """Inner product of a dense tensor with a Kruskal model, via MTTKRP.

    Evaluates <x, full(model)> as vec(MTTKRP)^T vec(B_mode) without
    densifying the model; any mode gives the same value.
    """
    return float(np.sum(mttkrp(x, model, mode) * model.factors[mode]))
