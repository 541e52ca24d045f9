"""ADMM solver for a single penalized mode subproblem.

Solves, for a fixed design A (N x I_d*R) and response y,

    min_x  g(A x, y) + lambda1*||z1||_1 + lambda2*||z2||_1
           + (lambda3/2)*||x||_2^2 + indicator(x >= 0)
    s.t.   x - z1 = 0,  D x - z2 = 0

where g is either the squared-error or the logistic deviance data term.
The x-update is a cached Cholesky solve (linear) or a projected Newton
method with backtracking (logistic); z-updates are soft thresholds; dual
ascent closes each sweep.  Convergence monitors the two primal residuals
(x - z1, Dx - z2) and the two dual residuals rho*(z - z_prev).
"""

from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.special import expit

from .regularizers import soft_threshold

__all__ = [
    "NumericalError",
    "AdmmOptions",
    "AdmmState",
    "initial_state",
    "solve_subproblem",
    "make_linear_cache",
    "x_update_linear",
    "make_logistic_cache",
    "x_update_logistic",
    "logistic_primal_value",
    "logistic_primal_grad",
    "logistic_primal_hess",
    "z_updates",
    "dual_updates",
    "convergence_check",
]


class NumericalError(RuntimeError):
    """A solve failed for numerical reasons (non-finite data, stalled line
    search, indefinite system)."""


@dataclass(frozen=True)
class AdmmOptions:
    """Solver knobs.  Defaults: rho fixed at 1 (keeps the cached
    factorization valid across iterations), residual tolerance 1e-5,
    Newton decrement tolerance 1e-5, Armijo backtracking 0.25/0.5."""

    rho: float = 1.0
    max_iters: int = 500
    tol: float = 1e-5
    newton_tol: float = 1e-5
    newton_max_iters: int = 50
    line_search: tuple = (0.25, 0.5)

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be > 0")
        if self.tol <= 0 or self.newton_tol <= 0:
            raise ValueError("tolerances must be > 0")
        alpha, shrink = self.line_search
        if not 0 < alpha < 0.5:
            raise ValueError("line-search alpha must lie in (0, 0.5)")
        if not 0 < shrink < 1:
            raise ValueError("line-search shrink must lie in (0, 1)")


@dataclass
class AdmmState:
    """Primal/dual variables plus the final residual norms."""

    x: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    u1: np.ndarray
    u2: np.ndarray
    iters: int = 0
    primal_residuals: tuple = (np.inf, np.inf)
    dual_residuals: tuple = (np.inf, np.inf)
    converged: bool = False

    def copy(self):
        return AdmmState(
            self.x.copy(), self.z1.copy(), self.z2.copy(),
            self.u1.copy(), self.u2.copy(), self.iters,
            self.primal_residuals, self.dual_residuals, self.converged,
        )


def initial_state(x0, diff):
    """Feasible-split starting state: z1 = x0, z2 = D x0, zero duals."""
    x0 = np.asarray(x0, dtype=np.float64)
    return AdmmState(
        x=x0.copy(),
        z1=x0.copy(),
        z2=diff.apply(x0),
        u1=np.zeros(diff.in_dim),
        u2=np.zeros(diff.out_dim),
    )


# ----------------------------------------------------------------------
# linear x-update


class _FreeSetFactors:
    """Cholesky factors of principal submatrices, keyed by the free set.

    The alternating solver revisits the same few active sets over and
    over; caching the factors turns repeat block solves into a pair of
    triangular solves.
    """

    def __init__(self, matrix, cap=64):
        self.matrix = matrix
        self.cap = cap
        self._factors = {}

    def solve(self, free, rhs_free):
        key = free.tobytes()
        factor = self._factors.get(key)
        if factor is None:
            sub = self.matrix[np.ix_(free, free)]
            factor = cho_factor(sub, lower=True, check_finite=False)
            if len(self._factors) < self.cap:
                self._factors[key] = factor
        return cho_solve(factor, rhs_free, check_finite=False)


@dataclass
class LinearCache:
    """M = A^T A + (rho+lambda3) I + rho D^T D with its Cholesky factor and
    A^T y; M does not depend on the iterate, so it is factored once per
    solve and every x-update reuses the factor."""

    M: np.ndarray
    chol: tuple
    aty: np.ndarray
    free_factors: _FreeSetFactors = None


def make_linear_cache(A, y, cfg, diff, rho):
    n = A.shape[1]
    M = A.T @ A + (rho + cfg.lambda3) * np.eye(n) + rho * diff.gram()
    try:
        chol = cho_factor(M, lower=True, check_finite=False)
    except LinAlgError as e:
        raise NumericalError(f"normal matrix not positive definite: {e}") from e
    return LinearCache(M, chol, A.T @ y, _FreeSetFactors(M))


def x_update_linear(A, y, cfg, diff, rho, z1, z2, u1, u2, cache=None, x0=None,
                    inner_tol=2e-7):
    """Minimize the quadratic part of the augmented Lagrangian in x.

    Without nonnegativity this is the cached solve M x = b with
    b = A^T y + rho (z1 - u1/rho) + rho D^T (z2 - u2/rho).  With
    nonnegativity the block is the constrained quadratic
    min_{x>=0} q(x) = x^T M x / 2 - b^T x; a single projected solve
    [M^{-1} b]_+ leaves a fixed-point bias that oracle tests reject, so
    the update runs two-metric projected Newton (free-set Newton steps
    with Armijo backtracking) until the block is optimal.  The first
    full step from an interior point is exactly [M^{-1} b]_+.
    """
    if cache is None:
        cache = make_linear_cache(A, y, cfg, diff, rho)
    b = cache.aty + (rho * z1 - u1) + diff.apply_transpose(rho * z2 - u2)
    if not cfg.nonneg:
        return cho_solve(cache.chol, b, check_finite=False)
    if x0 is None:
        x0 = cho_solve(cache.chol, b, check_finite=False)
    x = np.maximum(np.asarray(x0, dtype=np.float64), 0.0)

    def q(v):
        return 0.5 * float(v @ (cache.M @ v)) - float(b @ v)

    for _ in range(100):
        g = cache.M @ x - b
        pg_move = np.maximum(x - g, 0.0) - x
        pg = np.linalg.norm(pg_move)
        if pg <= inner_tol:
            break
        # two-metric direction: Newton on the free set, projected-gradient
        # movement on coordinates pinned at the bound by an inward gradient
        free = ~((x <= min(1e-6, pg)) & (g > 0.0))
        d = pg_move.copy()
        if np.any(free):
            d[free] = cache.free_factors.solve(free, -g[free])
        xt = _qp_backtrack(q, x, g, d)
        if xt is None:
            xt = _qp_backtrack(q, x, g, -g)
        if xt is None or np.array_equal(xt, x):
            break
        x = xt
    return x


def _qp_backtrack(q, x, g, dx, alpha=0.25, shrink=0.5):
    """Armijo backtracking onto the orthant; None when nothing decreases."""
    f0 = q(x)
    t = 1.0
    for _ in range(60):
        xt = np.maximum(x + t * dx, 0.0)
        if q(xt) <= f0 + alpha * float(g @ (xt - x)):
            return xt
        t *= shrink
    return None


# ----------------------------------------------------------------------
# logistic x-update (projected Newton)


@dataclass
class LogisticCache:
    """P = (rho+lambda3) I + rho D^T D with factors of its principal
    submatrices, shared by every Newton step of every ADMM iteration."""

    P: np.ndarray
    free_factors: _FreeSetFactors


def make_logistic_cache(cfg, diff, rho):
    P = (rho + cfg.lambda3) * np.eye(diff.in_dim) + rho * diff.gram()
    return LogisticCache(P, _FreeSetFactors(P))


def logistic_primal_value(x, A, y, cfg, diff, rho, z1, z2, u1, u2):
    """The logistic x-update objective L_x (data term + quadratic penalties)."""
    margins = y * (A @ x)
    val = np.logaddexp(0.0, -margins).sum()
    q1 = x - z1 + u1 / rho
    q2 = diff.apply(x) - z2 + u2 / rho
    val += 0.5 * cfg.lambda3 * float(x @ x)
    val += 0.5 * rho * float(q1 @ q1) + 0.5 * rho * float(q2 @ q2)
    return float(val)


def logistic_primal_grad(x, A, y, cfg, diff, rho, z1, z2, u1, u2):
    """Gradient of :func:`logistic_primal_value`."""
    margins = y * (A @ x)
    g = -(A.T @ (y * expit(-margins)))
    g += cfg.lambda3 * x + rho * (x - z1 + u1 / rho)
    g += rho * diff.apply_transpose(diff.apply(x) - z2 + u2 / rho)
    return g


def logistic_primal_hess(x, A, y, cfg, diff, rho):
    """Hessian of :func:`logistic_primal_value` (dense)."""
    w = _logistic_weights(x, A, y)
    n = A.shape[1]
    return (A * w[:, None]).T @ A + (rho + cfg.lambda3) * np.eye(n) + rho * diff.gram()


def _logistic_weights(x, A, y):
    s = expit(y * (A @ x))
    return s * (1.0 - s)


def _newton_direction(A, w, grad, cache, solver, free=None, pinned_move=None):
    """Solve H[free, free] d = -grad[free] with H = A^T W A + P.

    "smw" routes through the matrix-inversion lemma using cached
    factorizations of P's principal submatrices; written in sqrt-weight
    form so vanishing logistic weights never get inverted.  "direct"
    factors the restricted Hessian itself.  "auto" picks smw when the
    sample count is the smaller dimension.  Pinned coordinates (free is
    False) move by `pinned_move` (their projected-gradient displacement)
    or not at all.
    """
    N, n = A.shape
    if free is None:
        free = np.ones(n, dtype=bool)
    d = np.zeros(n) if pinned_move is None else pinned_move.copy()
    d[free] = 0.0
    if not np.any(free):
        return d
    a_f = A[:, free]
    g_f = grad[free]
    if solver == "auto":
        solver = "smw" if N < int(free.sum()) else "direct"
    if solver == "smw":
        a_s = a_f * np.sqrt(w)[:, None]
        t1 = cache.free_factors.solve(free, g_f)
        pias = cache.free_factors.solve(free, a_s.T)
        K = np.eye(N) + a_s @ pias
        t3 = cho_solve(cho_factor(K, lower=True, check_finite=False), a_s @ t1,
                       check_finite=False)
        d[free] = -(t1 - pias @ t3)
    elif solver == "direct":
        H = (a_f * w[:, None]).T @ a_f + cache.P[np.ix_(free, free)]
        d[free] = -cho_solve(cho_factor(H, lower=True, check_finite=False), g_f,
                             check_finite=False)
    else:
        raise ValueError(f"unknown hessian solver {solver!r}")
    return d


def x_update_logistic(A, y, cfg, diff, rho, z1, z2, u1, u2, x0,
                      opts=None, cache=None, hessian_solver="auto"):
    """Projected Newton solve of the logistic x-update.

    Iterates x <- [x + t*dx]_+ (projection only when nonnegativity is on)
    with dx the Newton direction and t from backtracking; stops when the
    Newton decrement falls below ``opts.newton_tol``.
    """
    opts = opts or AdmmOptions(rho=rho)
    if cache is None:
        cache = make_logistic_cache(cfg, diff, rho)
    alpha, shrink = opts.line_search
    x = np.asarray(x0, dtype=np.float64).copy()
    if cfg.nonneg:
        np.maximum(x, 0.0, out=x)
    args = (A, y, cfg, diff, rho, z1, z2, u1, u2)

    def _backtrack(x0, f0, g0, dx):
        # Armijo test on the step actually taken (projection included);
        # returns None when no halving produced acceptable decrease
        t = 1.0
        for _ in range(50):
            xt = x0 + t * dx
            if cfg.nonneg:
                np.maximum(xt, 0.0, out=xt)
            ft = logistic_primal_value(xt, *args)
            if ft <= f0 + alpha * float(g0 @ (xt - x0)):
                return xt
            t *= shrink
        return None

    g = logistic_primal_grad(x, *args)
    for _ in range(opts.newton_max_iters):
        if not np.all(np.isfinite(g)):
            raise NumericalError("non-finite gradient in logistic primal update")
        free = None
        pinned_move = None
        if cfg.nonneg:
            pinned_move = np.maximum(x - g, 0.0) - x
            pg = np.linalg.norm(pinned_move)
            free = ~((x <= min(1e-6, pg)) & (g > 0.0))
        w = _logistic_weights(x, A, y)
        dx = _newton_direction(A, w, g, cache, hessian_solver, free=free,
                               pinned_move=pinned_move)
        decrement = -float(g @ dx)
        if abs(decrement) <= opts.newton_tol:
            break
        f0 = logistic_primal_value(x, *args)
        if not np.isfinite(f0):
            raise NumericalError("non-finite objective in logistic primal update")
        xt = _backtrack(x, f0, g, dx)
        if xt is None:
            # Newton direction stalled at the boundary; a plain projected
            # gradient step decreases along the arc whenever any decrease
            # is still resolvable in floating point
            xt = _backtrack(x, f0, g, -g)
        if xt is None or np.array_equal(xt, x):
            break  # numerically stationary for this subproblem
        x = xt
        g = logistic_primal_grad(x, *args)
    return x


# ----------------------------------------------------------------------
# z, dual, stopping


def z_updates(x, diff, u1, u2, cfg, rho):
    """Proximal updates of the split variables (soft thresholds)."""
    z1 = soft_threshold(x + u1 / rho, cfg.lambda1 / rho)
    z2 = soft_threshold(diff.apply(x) + u2 / rho, cfg.lambda2 / rho)
    return z1, z2


def dual_updates(x, z1, z2, u1, u2, diff, rho):
    """Gradient-ascent step on the duals, driving primal feasibility."""
    return u1 + rho * (x - z1), u2 + rho * (diff.apply(x) - z2)


def _residual_norms(x, z1, z2, prev_z1, prev_z2, diff, rho):
    r1 = float(np.linalg.norm(x - z1))
    r2 = float(np.linalg.norm(diff.apply(x) - z2))
    s1 = rho * float(np.linalg.norm(z1 - prev_z1))
    s2 = rho * float(np.linalg.norm(z2 - prev_z2))
    return r1, r2, s1, s2


def convergence_check(state, prev_z1, prev_z2, diff, rho, tol):
    """True when all four residual norms fall at or below `tol`."""
    norms = _residual_norms(state.x, state.z1, state.z2, prev_z1, prev_z2, diff, rho)
    return max(norms) <= tol


# ----------------------------------------------------------------------
# driver


def _validate_inputs(A, y, loss):
    if A.ndim != 2:
        raise ValueError("design must be a matrix")
    if y.ndim != 1 or y.size != A.shape[0]:
        raise ValueError(f"response length {y.size} does not match design rows {A.shape[0]}")
    if not np.all(np.isfinite(A)):
        raise NumericalError("design matrix contains non-finite entries")
    if not np.all(np.isfinite(y)):
        raise NumericalError("response contains non-finite entries")
    if loss == "logistic":
        if not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("logistic labels must be -1 or +1")
    elif loss != "linear":
        raise ValueError(f"unknown loss {loss!r}")


def solve_subproblem(A, y, loss, cfg, diff, opts=None, warm=None):
    """Run ADMM on one mode subproblem until the residuals meet `opts.tol`.

    Parameters
    ----------
    A : (N, I_d*R) ndarray
        Design matrix (rows are vectorized per-sample MTTKRPs).
    y : (N,) ndarray
        Responses; must be +-1 for the logistic loss.
    loss : {"linear", "logistic"}
    cfg : ModeRegConfig
    diff : DifferenceOperator
        Must agree with the design's column count.
    opts : AdmmOptions, optional
    warm : AdmmState, optional
        Prior state to resume from (x, z, u all reused).

    Returns
    -------
    AdmmState
        Final iterates, iteration count, residual norms, converged flag.
    """
    opts = opts or AdmmOptions()
    A = np.asarray(A, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    _validate_inputs(A, y, loss)
    if A.shape[1] != diff.in_dim:
        raise ValueError(
            f"design has {A.shape[1]} columns but the difference operator expects {diff.in_dim}")

    rho = opts.rho
    if warm is not None:
        state = warm.copy()
    else:
        state = initial_state(np.zeros(diff.in_dim), diff)
    x, z1, z2, u1, u2 = state.x, state.z1, state.z2, state.u1, state.u2

    if loss == "linear":
        cache = make_linear_cache(A, y, cfg, diff, rho)
        inner_tol = 0.02 * opts.tol
    else:
        cache = make_logistic_cache(cfg, diff, rho)
        # the block solves must be tighter than the residual target or the
        # dual residuals plateau above it
        inner = replace(opts, newton_tol=min(opts.newton_tol, 0.01 * opts.tol ** 2))

    converged = False
    iters = 0
    norms = (np.inf, np.inf, np.inf, np.inf)
    for k in range(opts.max_iters):
        if loss == "linear":
            x = x_update_linear(A, y, cfg, diff, rho, z1, z2, u1, u2, cache,
                                x0=x, inner_tol=inner_tol)
        else:
            x = x_update_logistic(A, y, cfg, diff, rho, z1, z2, u1, u2,
                                  x0=x, opts=inner, cache=cache)
        prev_z1, prev_z2 = z1, z2
        z1, z2 = z_updates(x, diff, u1, u2, cfg, rho)
        u1, u2 = dual_updates(x, z1, z2, u1, u2, diff, rho)
        norms = _residual_norms(x, z1, z2, prev_z1, prev_z2, diff, rho)
        iters = k + 1
        if max(norms) <= opts.tol:
            converged = True
            break

    return AdmmState(
        x=x, z1=z1, z2=z2, u1=u1, u2=u2, iters=iters,
        primal_residuals=(norms[0], norms[1]),
        dual_residuals=(norms[2], norms[3]),
        converged=converged,
    )
