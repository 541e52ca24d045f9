"""Model selection: BIC over ranks, log-spaced penalty grids, greedy tuning.

BIC is -2*L + ln(N)*p_e with p_e = R*(sum_d I_d - D + 1), the Kruskal
parameter count net of the per-component scaling indeterminacy.  The
penalty grid is geometric from lambda0 down to epsilon*lambda0 with an
exact 0 appended; the greedy search tunes one penalty coordinate at a
time against a held-out validation set.
"""

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import expit

from .admm import NumericalError
from .model import fit, predict_all, resolve_per_mode

__all__ = [
    "DegenerateFitError",
    "BicResult",
    "LambdaGrid",
    "effective_params",
    "log_likelihood",
    "lambda_grid",
    "select_rank",
    "validation_loss",
    "split_dataset",
    "greedy_lambda_search",
]


class DegenerateFitError(NumericalError):
    """The fit is an interpolation; the Gaussian likelihood is unbounded."""


@dataclass(frozen=True)
class BicResult:
    rank: int
    bic: float
    log_likelihood: float
    p_e: int
    sigma2_hat: float = None


@dataclass(frozen=True)
class LambdaGrid:
    """Descending penalty grid ending in an exact zero."""

    values: tuple
    lambda0: float
    epsilon: float
    L: int


def effective_params(dims, rank):
    """Kruskal parameter count R*(sum_d I_d - D + 1)."""
    dims = tuple(int(d) for d in dims)
    return int(rank) * (sum(dims) - len(dims) + 1)


def log_likelihood(data, model):
    """Maximized log-likelihood of a fitted model.

    Linear: Gaussian likelihood at the plug-in variance estimate
    sigma2 = mean squared residual.  Logistic: Bernoulli log-likelihood
    with labels remapped from {-1, +1} to {0, 1} and probabilities
    clamped away from 0 and 1 before the logs.
    """
    s = predict_all(data, model)
    n = data.n
    if data.loss == "linear":
        r = data.responses - s
        sigma2 = float(r @ r) / n
        if sigma2 < 1e-300:
            raise DegenerateFitError(
                "residual variance vanished; BIC is undefined at a perfect fit")
        return -0.5 * n * math.log(2 * math.pi * sigma2) - 0.5 * n
    p = np.clip(expit(s), 1e-12, 1 - 1e-12)
    yb = (data.responses + 1.0) / 2.0
    return float(np.sum(yb * np.log(p) + (1.0 - yb) * np.log(1.0 - p)))


def bic_score(data, model):
    """(bic, log_likelihood, p_e, sigma2_hat) for one fitted model."""
    L = log_likelihood(data, model)
    p_e = effective_params(model.dims, model.rank)
    sigma2 = None
    if data.loss == "linear":
        r = data.responses - predict_all(data, model)
        sigma2 = float(r @ r) / data.n
    return -2.0 * L + math.log(data.n) * p_e, L, p_e, sigma2


def lambda_grid(lambda0, epsilon=1e-3, L=5):
    """Geometric grid lambda0 * epsilon**(j/L) for j = 0..L, then exact 0."""
    if lambda0 <= 0:
        raise ValueError("lambda0 must be > 0")
    if not 0 < epsilon < 1:
        raise ValueError("epsilon must lie in (0, 1)")
    if L < 1:
        raise ValueError("L must be >= 1")
    vals = tuple(float(lambda0) * epsilon ** (j / L) for j in range(L + 1)) + (0.0,)
    return LambdaGrid(values=vals, lambda0=float(lambda0), epsilon=float(epsilon), L=int(L))


def select_rank(data, ranks, opts, replicates=5):
    """Pick the rank minimizing mean BIC over replicate restarts.

    Each candidate rank is fit `replicates` times with seeds
    opts.seed + 0..replicates-1 and the BIC values are averaged.  Ranks
    whose likelihood degenerates are recorded with +inf BIC and excluded
    from the argmin; ties break toward the smaller rank.

    Returns
    -------
    (best_rank, curve) where curve is a list of BicResult in the input
    rank order.
    """
    ranks = list(ranks)
    if not ranks:
        raise ValueError("ranks must be nonempty")
    curve = []
    for rank in ranks:
        lls, bics, sig2s = [], [], []
        degenerate = False
        for rep in range(replicates):
            rep_opts = replace(opts, rank=int(rank), seed=opts.seed + rep)
            report = fit(data, rep_opts)
            try:
                b, ll, _, s2 = bic_score(data, report.model)
            except DegenerateFitError:
                degenerate = True
                break
            bics.append(b)
            lls.append(ll)
            if s2 is not None:
                sig2s.append(s2)
        p_e = effective_params(data.dims, rank)
        if degenerate or not bics:
            curve.append(BicResult(int(rank), np.inf, -np.inf, p_e, None))
            continue
        mean_ll = float(np.mean(lls))
        curve.append(BicResult(
            rank=int(rank),
            bic=-2.0 * mean_ll + math.log(data.n) * p_e,
            log_likelihood=mean_ll,
            p_e=p_e,
            sigma2_hat=float(np.mean(sig2s)) if sig2s else None,
        ))
    finite = [r for r in curve if np.isfinite(r.bic)]
    if not finite:
        raise NumericalError("every candidate rank produced a degenerate fit")
    best = min(finite, key=lambda r: (r.bic, r.rank))
    return best.rank, curve


def validation_loss(data, model):
    """Held-out score: mean squared error (linear) or mean deviance (logistic)."""
    s = predict_all(data, model)
    if data.loss == "linear":
        r = data.responses - s
        return float(r @ r) / data.n
    return float(np.mean(np.logaddexp(0.0, -data.responses * s)))


def split_dataset(data, train_frac=0.8, seed=0):
    """Deterministic shuffled train/validation split."""
    if not 0 < train_frac < 1:
        raise ValueError("train_frac must lie in (0, 1)")
    perm = np.random.default_rng(seed).permutation(data.n)
    n_train = min(max(int(round(train_frac * data.n)), 1), data.n - 1)
    return data.subset(perm[:n_train]), data.subset(perm[n_train:])


def greedy_lambda_search(data, opts, grid, validation, active=None, fit_fn=None):
    """Sequential coordinate-wise penalty tuning on a validation set.

    For each mode d in order and each penalty coordinate (lambda1,
    lambda2, lambda3) in order, sweeps the grid with every not-yet-tuned
    coordinate held at 0 and already-tuned coordinates frozen, keeping
    the value with the lowest validation loss.  Ties break toward the
    stronger penalty (the grid is descending).  Cost is one fit per
    (mode, coordinate, grid value): 3*D*len(grid.values) fits.

    Parameters
    ----------
    active : optional nested sequence of 3 bools per mode
        Mask of coordinates to tune; inactive coordinates stay at 0.
        Not counted against the sweep when masked off.
    fit_fn : optional callable(data, opts) -> FitReport
        Injection point for instrumentation; defaults to :func:`fit`.

    Returns
    -------
    list of ModeRegConfig, one per mode, with tuned weights and the
    nonnegativity flags taken from ``opts.per_mode``.
    """
    D = data.ndim
    if fit_fn is None:
        fit_fn = fit
    base = resolve_per_mode(opts.per_mode, D)
    if active is None:
        active = [(True, True, True)] * D
    cfgs = [replace(c, lambda1=0.0, lambda2=0.0, lambda3=0.0) for c in base]
    names = ("lambda1", "lambda2", "lambda3")
    for d in range(D):
        for k, name in enumerate(names):
            if not active[d][k]:
                continue
            best_loss = np.inf
            best_lam = 0.0
            solved = False
            for lam in grid.values:
                trial = list(cfgs)
                trial[d] = replace(cfgs[d], **{name: lam})
                try:
                    report = fit_fn(data, replace(opts, per_mode=trial))
                    score = validation_loss(validation, report.model)
                except NumericalError:
                    continue
                solved = True
                if score < best_loss:
                    best_loss = score
                    best_lam = lam
            if not solved:
                warnings.warn(
                    f"every grid value failed for mode {d} {name}; leaving it at 0")
            cfgs[d] = replace(cfgs[d], **{name: best_lam})
    return cfgs
