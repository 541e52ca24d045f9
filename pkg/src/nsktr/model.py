"""Rank-R tensor regression by alternating mode updates.

The coefficient tensor is kept in Kruskal form; each outer sweep visits
the modes in order, rebuilds the design matrix from the freshest factors
(Gauss-Seidel), solves the mode subproblem with ADMM, and writes the
factor back.  The recorded objective is the full data term plus every
mode penalty, evaluated after each sweep.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .admm import AdmmOptions, NumericalError, initial_state, solve_subproblem
from .regularizers import DifferenceOperator, ModeRegConfig, penalty_value
from .tensor import (
    DenseTensor,
    KruskalModel,
    khatri_rao_excluding,
    kruskal_inner_product,
    unvec,
    vectorize,
)

__all__ = [
    "Dataset",
    "FitOptions",
    "FitReport",
    "SubproblemSummary",
    "resolve_per_mode",
    "initial_model",
    "assemble_design",
    "predict_all",
    "loss_value",
    "objective_value",
    "fit",
    "predict",
]

LOSSES = ("linear", "logistic")


class Dataset:
    """N tensor covariates with scalar responses and a loss tag.

    Parameters
    ----------
    samples : sequence of DenseTensor, or ndarray of shape (N, \\*dims)
        Covariates; every sample must share the same dims.
    responses : (N,) array-like
        Real responses (linear) or +-1 labels (logistic).
    loss : {"linear", "logistic"}

    Covariates are stored stacked; per-mode matricized copies are cached
    on first use since the alternating loop reuses them every sweep.
    """

    def __init__(self, samples, responses, loss="linear"):
        if loss not in LOSSES:
            raise ValueError(f"unknown loss {loss!r}")
        if isinstance(samples, np.ndarray):
            stacked = np.asarray(samples, dtype=np.float64)
            if stacked.ndim < 2:
                raise ValueError("stacked covariates need at least 2 axes: (N, *dims)")
        else:
            samples = list(samples)
            if not samples:
                raise ValueError("need at least one sample")
            dims = samples[0].dims
            if any(s.dims != dims for s in samples):
                raise ValueError("all covariates must share the same dims")
            stacked = np.stack([s.to_array() for s in samples])
        if stacked.shape[0] < 1:
            raise ValueError("need at least one sample")
        responses = np.asarray(responses, dtype=np.float64).ravel()
        if responses.size != stacked.shape[0]:
            raise ValueError(
                f"{responses.size} responses for {stacked.shape[0]} samples")
        if not np.all(np.isfinite(stacked)):
            raise ValueError("covariates contain non-finite values")
        if not np.all(np.isfinite(responses)):
            raise ValueError("responses contain non-finite values")
        if loss == "logistic" and not np.all(np.isin(responses, (-1.0, 1.0))):
            raise ValueError("logistic responses must be -1 or +1")
        self.covariates = stacked
        self.responses = responses
        self.loss = loss
        self._matricized = {}

    @property
    def n(self):
        return self.covariates.shape[0]

    @property
    def dims(self):
        return tuple(self.covariates.shape[1:])

    @property
    def ndim(self):
        return len(self.dims)

    def sample(self, i):
        """Covariate i as a DenseTensor."""
        return DenseTensor.from_array(self.covariates[i])

    def matricized(self, mode):
        """All samples unfolded along `mode`, shape (N, I_mode, prod rest)."""
        if mode not in self._matricized:
            if not 0 <= mode < self.ndim:
                raise ValueError(f"mode {mode} out of range")
            moved = np.moveaxis(self.covariates, 1 + mode, 1)
            # remaining axes must flatten column-major: reverse, then C-reshape
            order = (0, 1) + tuple(range(moved.ndim - 1, 1, -1))
            self._matricized[mode] = moved.transpose(order).reshape(
                self.n, self.dims[mode], -1)
        return self._matricized[mode]

    def subset(self, idx):
        """New dataset restricted to the given sample indices."""
        idx = np.asarray(idx)
        return Dataset(self.covariates[idx], self.responses[idx], self.loss)


@dataclass
class FitOptions:
    """Outer-loop configuration.

    per_mode may be a sequence of ModeRegConfig (one per mode), a mapping
    from mode index to ModeRegConfig (missing modes get no penalty), or
    None (no penalty anywhere).  init is "random_uniform_nonneg",
    "random_gaussian", or a KruskalModel to warm start from.
    """

    rank: int = 1
    per_mode: object = None
    t_iter: int = 100
    outer_tol: float = 1e-6
    admm: AdmmOptions = field(default_factory=AdmmOptions)
    init: object = "random_uniform_nonneg"
    seed: int = 0

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be >= 1")
        if self.t_iter < 1:
            raise ValueError("t_iter must be >= 1")
        if self.outer_tol < 0:
            raise ValueError("outer_tol must be >= 0")


@dataclass
class SubproblemSummary:
    """Per (sweep, mode) ADMM outcome kept in the fit report."""

    sweep: int
    mode: int
    iters: int
    primal_residuals: tuple
    dual_residuals: tuple
    converged: bool
    rejected: bool = False


@dataclass
class FitReport:
    model: KruskalModel
    objective_trace: np.ndarray
    subproblem_stats: list
    converged: bool
    stop_reason: str
    elapsed: float
    seed: int


def resolve_per_mode(per_mode, ndim):
    """Materialize the per-mode penalty list for a D-way problem."""
    if per_mode is None:
        return [ModeRegConfig() for _ in range(ndim)]
    if isinstance(per_mode, dict):
        for d in per_mode:
            if not 0 <= int(d) < ndim:
                raise ValueError(f"mode {d} out of range for {ndim} modes")
        return [per_mode.get(d, ModeRegConfig()) for d in range(ndim)]
    per_mode = list(per_mode)
    if len(per_mode) != ndim:
        raise ValueError(f"{len(per_mode)} mode configs for {ndim} modes")
    return per_mode


def initial_model(dims, rank, init, seed):
    """Build the starting factors.

    "random_uniform_nonneg" draws each entry uniformly from [0, 1), which
    is feasible for nonnegativity-constrained modes from the start;
    "random_gaussian" draws standard normals; a KruskalModel is copied.
    """
    if isinstance(init, KruskalModel):
        if init.dims != tuple(dims) or init.rank != rank:
            raise ValueError(
                f"warm-start model has dims {init.dims} rank {init.rank}, "
                f"expected dims {tuple(dims)} rank {rank}")
        return init.copy()
    rng = np.random.default_rng(seed)
    if init == "random_uniform_nonneg":
        factors = [rng.random((d, rank)) for d in dims]
    elif init == "random_gaussian":
        factors = [rng.standard_normal((d, rank)) for d in dims]
    else:
        raise ValueError(f"unknown init {init!r}")
    return KruskalModel(factors)


def assemble_design(data, model, mode):
    """Design matrix for one mode: row i is vec(MTTKRP of sample i).

    With A the result, ``A @ vec(B_mode)`` reproduces the model
    predictions <X_i, full(model)> for every sample.
    """
    if data.dims != model.dims:
        raise ValueError(f"data dims {data.dims} do not match model dims {model.dims}")
    g = np.matmul(data.matricized(mode), khatri_rao_excluding(model, mode))
    # (N, I_d, R) -> rows of length I_d*R in column-major (vec) order
    return g.transpose(0, 2, 1).reshape(data.n, -1)


def predict_all(data, model):
    """Model predictions <X_i, full(model)> for every sample."""
    g = np.matmul(data.matricized(0), khatri_rao_excluding(model, 0))
    return np.einsum("nir,ir->n", g, model.factors[0])


def loss_value(data, model):
    """Data-fidelity term: half squared error, or summed logistic deviance."""
    s = predict_all(data, model)
    if data.loss == "linear":
        r = data.responses - s
        return 0.5 * float(r @ r)
    return float(np.logaddexp(0.0, -data.responses * s).sum())


def objective_value(data, model, cfgs, diffs=None):
    """Full objective: data term plus every mode penalty."""
    if diffs is None:
        diffs = [DifferenceOperator(d, model.rank) for d in model.dims]
    val = loss_value(data, model)
    for d in range(model.ndim):
        val += penalty_value(vectorize(model.factors[d]), cfgs[d], diffs[d])
    return val


def predict(model, x, loss="linear"):
    """Predict one sample: the inner product (linear) or the positive-class
    probability (logistic)."""
    if loss not in LOSSES:
        raise ValueError(f"unknown loss {loss!r}")
    s = kruskal_inner_product(x, model, 0)
    return float(expit(s)) if loss == "logistic" else s


def _mode_objective(A, x, y, loss, cfgs, diffs, factors_vec):
    """Objective with mode predictions taken from the current design."""
    s = A @ x
    if loss == "linear":
        r = y - s
        val = 0.5 * float(r @ r)
    else:
        val = float(np.logaddexp(0.0, -y * s).sum())
    for v, cfg, diff in zip(factors_vec, cfgs, diffs):
        val += penalty_value(v, cfg, diff)
    return val


def fit(data, opts):
    """Alternating fit of a rank-R Kruskal regression model.

    Sweeps the modes in order for up to ``opts.t_iter`` outer iterations,
    re-assembling each design from the freshest factors and solving the
    mode subproblem with ADMM (warm-started from the previous sweep).  A
    mode update that would raise the objective beyond the bookkeeping
    slack is re-solved at a tighter tolerance and reverted if still
    worse, so the recorded trace never increases.  Stops early when the
    relative objective change drops below ``opts.outer_tol``.

    Returns
    -------
    FitReport
        Final model, per-sweep objective trace, per-(sweep, mode) ADMM
        summaries, and which stopping criterion fired.
    """
    t_start = time.perf_counter()
    D = data.ndim
    cfgs = resolve_per_mode(opts.per_mode, D)
    model = initial_model(data.dims, opts.rank, opts.init, opts.seed)
    diffs = [DifferenceOperator(data.dims[d], opts.rank) for d in range(D)]
    states = [None] * D
    betas = [vectorize(model.factors[d]) for d in range(D)]

    trace = []
    stats = []
    obj = objective_value(data, model, cfgs, diffs)
    stop_reason = "t_iter"
    for sweep in range(opts.t_iter):
        for d in range(D):
            A = assemble_design(data, model, d)
            warm = states[d] if states[d] is not None else initial_state(betas[d], diffs[d])
            state = solve_subproblem(A, data.responses, data.loss, cfgs[d],
                                     diffs[d], opts.admm, warm=warm)
            trial = list(betas)
            trial[d] = state.x
            new_obj = _mode_objective(A, state.x, data.responses, data.loss,
                                      cfgs, diffs, trial)
            rejected = False
            if not new_obj <= obj * (1 + 1e-6) + 1e-9:
                # inexact subsolve raised the objective; retry tighter, then revert
                tight = replace(opts.admm, tol=opts.admm.tol * 1e-3,
                                max_iters=2 * opts.admm.max_iters)
                state = solve_subproblem(A, data.responses, data.loss, cfgs[d],
                                         diffs[d], tight, warm=state)
                trial[d] = state.x
                new_obj = _mode_objective(A, state.x, data.responses, data.loss,
                                          cfgs, diffs, trial)
                if not new_obj <= obj * (1 + 1e-6) + 1e-9:
                    rejected = True
            stats.append(SubproblemSummary(
                sweep=sweep, mode=d, iters=state.iters,
                primal_residuals=state.primal_residuals,
                dual_residuals=state.dual_residuals,
                converged=state.converged, rejected=rejected,
            ))
            if rejected:
                states[d] = None
                continue
            betas[d] = state.x
            model.factors[d] = unvec(state.x, data.dims[d], opts.rank)
            states[d] = state
            obj = new_obj
        if not np.isfinite(obj):
            raise NumericalError(
                f"objective became non-finite at sweep {sweep} (value {obj})")
        trace.append(obj)
        if sweep > 0:
            prev = trace[-2]
            if abs(prev - obj) <= opts.outer_tol * max(1.0, abs(prev)):
                stop_reason = "outer_tol"
                break

    return FitReport(
        model=model,
        objective_trace=np.asarray(trace),
        subproblem_stats=stats,
        converged=stop_reason == "outer_tol",
        stop_reason=stop_reason,
        elapsed=time.perf_counter() - t_start,
        seed=opts.seed,
    )
