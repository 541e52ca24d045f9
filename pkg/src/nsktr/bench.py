"""Synthetic signals, SNR-controlled simulation, and the estimation benchmark.

Four reference coefficient tensors with distinct structure drive the
regularizer comparison: a smooth 2-D ramp (gradient), nested
piecewise-constant rectangles (floor), clipped periodic ridges (wave),
and a 3-D axis-aligned cross whose arms fade linearly toward the faces
(fading-cross).  Responses follow y_i = <X_i, B> + e_i with standard
normal covariates; the noise vector is rescaled so the realized
signal-to-noise ratio matches the request exactly.

The benchmark fits a list of named penalty configurations to fresh
replicate simulations and reports the relative recovery error
EE = ||B_hat - B||_F / ||B||_F per cell.
"""

import csv
import io as _io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from .model import Dataset, FitOptions, fit
from .regularizers import ModeRegConfig
from .selection import greedy_lambda_search, lambda_grid, split_dataset
from .tensor import DenseTensor, kruskal_reconstruct

__all__ = [
    "SIGNAL_KINDS",
    "SignalSpec",
    "SimConfig",
    "generate_signal",
    "simulate_dataset",
    "estimation_error",
    "BenchmarkResult",
    "run_benchmark",
    "BENCHMARK_METHODS",
    "method_options",
    "tune_method",
    "table_protocol",
]

SIGNAL_KINDS = ("gradient", "floor", "wave", "fading-cross")

_DEFAULT_DIMS = {
    "gradient": (128, 128),
    "floor": (128, 128),
    "wave": (128, 128),
    "fading-cross": (32, 32, 32),
}


@dataclass(frozen=True)
class SignalSpec:
    """A named synthetic coefficient tensor.

    params overrides generator knobs: floor takes ``plateaus`` (default
    4), wave takes ``periods`` (default 2), fading-cross takes ``width``
    (default 8).
    """

    kind: str
    dims: tuple = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        dims = self.dims or _DEFAULT_DIMS[self.kind]
        object.__setattr__(self, "dims", tuple(int(d) for d in dims))
        want = 3 if self.kind == "fading-cross" else 2
        if len(self.dims) != want:
            raise ValueError(f"{self.kind} needs {want}-way dims, got {self.dims}")


@dataclass(frozen=True)
class SimConfig:
    """One simulated experiment: sample count, noise level, seed, signal."""

    n: int
    snr_db: float
    seed: int
    signal: SignalSpec

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")


def _gradient(dims):
    i = np.arange(dims[0])[:, None]
    j = np.arange(dims[1])[None, :]
    return (i + j) / (dims[0] + dims[1] - 2)


def _floor(dims, plateaus=4):
    arr = np.zeros(dims)
    for k in range(plateaus):
        m0 = round(dims[0] * k / (2 * plateaus))
        m1 = round(dims[1] * k / (2 * plateaus))
        arr[m0:dims[0] - m0, m1:dims[1] - m1] = (k + 1) / plateaus
    return arr


def _wave(dims, periods=2):
    u = np.linspace(0.0, 1.0, dims[0])[:, None]
    v = np.linspace(0.0, 1.0, dims[1])[None, :]
    raw = np.maximum(np.sin(2 * np.pi * periods * u) + np.sin(2 * np.pi * periods * v), 0.0)
    return raw / raw.max()


def _fading_cross(dims, width=8):
    arr = np.zeros(dims)
    for axis in range(3):
        n_axis = dims[axis]
        center = (n_axis - 1) / 2.0
        # fades linearly toward the faces but stays positive there, so the
        # support is exactly the union of the three beams
        falloff = 1.0 - np.abs(np.arange(n_axis) - center) / (center + 1.0)
        windows = []
        for other in range(3):
            if other == axis:
                windows.append(np.ones(1))  # placeholder, replaced below
                continue
            n = dims[other]
            ind = np.zeros(n)
            lo = n // 2 - width // 2
            ind[lo:lo + width] = 1.0
            windows.append(ind)
        windows[axis] = falloff
        arr += np.einsum("i,j,k->ijk", windows[0], windows[1], windows[2])
    return arr / arr.max()


def generate_signal(spec):
    """Deterministic nonnegative signal tensor, normalized to max 1."""
    if spec.kind == "gradient":
        arr = _gradient(spec.dims)
    elif spec.kind == "floor":
        arr = _floor(spec.dims, **spec.params)
    elif spec.kind == "wave":
        arr = _wave(spec.dims, **spec.params)
    else:
        arr = _fading_cross(spec.dims, **spec.params)
    return DenseTensor.from_array(arr)


def simulate_dataset(cfg, b, loss="linear"):
    """Draw a dataset from a coefficient tensor.

    Linear: standard normal covariates, Gaussian noise rescaled so that
    10*log10(sum s_i^2 / sum e_i^2) equals ``cfg.snr_db`` exactly.
    Logistic: labels drawn with P(+1) = sigmoid(<X_i, B>); the SNR field
    is ignored.
    """
    if b.dims != cfg.signal.dims:
        raise ValueError(f"signal dims {b.dims} do not match spec {cfg.signal.dims}")
    rng = np.random.default_rng(cfg.seed)
    x = rng.standard_normal((cfg.n,) + b.dims)
    s = x.reshape(cfg.n, -1) @ b.to_array().ravel()
    if loss == "logistic":
        y = np.where(rng.random(cfg.n) < expit(s), 1.0, -1.0)
        return Dataset(x, y, loss="logistic")
    energy = float(s @ s)
    if energy == 0.0:
        raise ValueError("signal has zero response energy; SNR is undefined")
    e = rng.standard_normal(cfg.n)
    e *= math.sqrt(energy / (float(e @ e) * 10.0 ** (cfg.snr_db / 10.0)))
    return Dataset(x, s + e, loss="linear")


def estimation_error(b_hat, b_true):
    """Relative recovery error ||b_hat - b_true||_F / ||b_true||_F."""
    if b_hat.dims != b_true.dims:
        raise ValueError(f"dims mismatch: {b_hat.dims} vs {b_true.dims}")
    denom = np.linalg.norm(b_true.values)
    if denom == 0.0:
        raise ValueError("reference tensor has zero norm")
    return float(np.linalg.norm(b_hat.values - b_true.values) / denom)


# ----------------------------------------------------------------------
# benchmark harness

CSV_COLUMNS = ("signal", "N", "rank", "snr_db", "method", "rep", "seed",
               "ee", "iters", "seconds")


@dataclass
class BenchmarkResult:
    """Per-(method, rep) rows plus a per-cell mean/std summary."""

    rows: list
    failures: list

    def to_csv(self, path_or_file):
        if hasattr(path_or_file, "write"):
            self._write_csv(path_or_file)
        else:
            buf = _io.StringIO()
            self._write_csv(buf)
            with open(path_or_file, "w", newline="") as fh:
                fh.write(buf.getvalue())

    def _write_csv(self, fh):
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([repr(float(row[c])) if isinstance(row[c], float)
                             else row[c] for c in CSV_COLUMNS])

    def summary(self):
        """Per-cell mean/std of EE in 'mean(std)' display form."""
        cells = {}
        for row in self.rows:
            key = (row["signal"], row["N"], row["rank"], row["snr_db"], row["method"])
            cells.setdefault(key, []).append(row["ee"])
        out = []
        for key in sorted(cells, key=str):
            ees = np.asarray(cells[key])
            ok = ees[np.isfinite(ees)]
            mean = float(np.mean(ok)) if ok.size else float("nan")
            std = float(np.std(ok)) if ok.size else float("nan")
            out.append({
                "signal": key[0], "N": key[1], "rank": key[2],
                "snr_db": key[3], "method": key[4],
                "mean_ee": mean, "std_ee": std,
                "display": f"{mean:.2f}({std:.2f})",
                "failed_reps": int(np.sum(~np.isfinite(ees))),
            })
        return out

    def to_json(self, path):
        payload = {"cells": self.summary(), "failures": self.failures}
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    def mean_ee(self, method):
        vals = [r["ee"] for r in self.rows if r["method"] == method]
        return float(np.mean(vals))

    def rep_ee(self, method):
        """EE per replicate index for one method."""
        return {r["rep"]: r["ee"] for r in self.rows if r["method"] == method}


def run_benchmark(sim, configs, reps, seeds=None, loss="linear", record_timing=True):
    """Fit every named configuration on `reps` fresh simulations.

    All configurations see the same dataset within a replicate (the
    simulation seed depends only on the replicate), so per-replicate
    comparisons between methods are paired.  A failed fit is recorded as
    a NaN cell with a note; it never disappears silently.  With
    ``record_timing=False`` the seconds column holds the sentinel 0.0,
    which keeps serialized tables bit-reproducible across reruns.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if seeds is None:
        seeds = [sim.seed + r for r in range(reps)]
    seeds = list(seeds)
    if len(seeds) != reps:
        raise ValueError(f"{len(seeds)} seeds for {reps} reps")
    b_true = generate_signal(sim.signal)
    rows, failures = [], []
    for rep, seed in enumerate(seeds):
        data = simulate_dataset(replace(sim, seed=seed), b_true, loss=loss)
        for name, opts in configs:
            base = {"signal": sim.signal.kind, "N": sim.n, "rank": opts.rank,
                    "snr_db": sim.snr_db, "method": name, "rep": rep, "seed": seed}
            try:
                report = fit(data, replace(opts, seed=seed))
                ee = estimation_error(kruskal_reconstruct(report.model), b_true)
                rows.append({**base, "ee": ee,
                             "iters": int(len(report.objective_trace)),
                             "seconds": report.elapsed if record_timing else 0.0,
                             "report": report})
            except Exception as exc:  # record the cell, keep the run going
                failures.append({**base, "error": f"{type(exc).__name__}: {exc}"})
                rows.append({**base, "ee": float("nan"), "iters": 0,
                             "seconds": 0.0, "report": None})
    return BenchmarkResult(rows=rows, failures=failures)


# The five named penalty configurations of the estimation study:
# (lambda mask over (l1, tv, ridge), nonnegativity).  LS is plain
# unpenalized Kruskal regression.
BENCHMARK_METHODS = {
    "LS": ((False, False, False), False),
    "EN": ((True, False, True), False),
    "nEN": ((True, False, True), True),
    "FL": ((True, True, False), False),
    "nFL": ((True, True, False), True),
}


def method_options(name, rank, ndim, base=None):
    """FitOptions preset for one named benchmark method (penalties unset)."""
    mask, nonneg = BENCHMARK_METHODS[name]
    base = base or FitOptions()
    per_mode = [ModeRegConfig(nonneg=nonneg) for _ in range(ndim)]
    return replace(base, rank=rank, per_mode=per_mode), mask


def tune_method(name, train, validation, rank, base=None, grid=None):
    """Greedy-tune one named method's active penalty coordinates."""
    opts, mask = method_options(name, rank, train.ndim, base)
    if not any(mask):
        return opts
    if grid is None:
        grid = lambda_grid(train.n)
    active = [mask] * train.ndim
    tuned = greedy_lambda_search(train, opts, grid, validation, active=active)
    return replace(opts, per_mode=tuned)


def table_protocol(signal, n, rank, snr_db, methods, reps, seed,
                   base=None, grid=None, train_frac=0.8, record_timing=True):
    """Full estimation-study protocol for one signal.

    Simulates a tuning dataset, splits it, greedy-tunes each method's
    active penalties against the validation half, then benchmarks the
    tuned configurations on `reps` fresh replicates.

    Returns (BenchmarkResult, {method: FitOptions}).
    """
    sim = SimConfig(n=n, snr_db=snr_db, seed=seed, signal=signal)
    b_true = generate_signal(signal)
    tune_data = simulate_dataset(replace(sim, seed=seed + 10_000), b_true)
    train, validation = split_dataset(tune_data, train_frac, seed)
    configs = []
    for name in methods:
        opts = tune_method(name, train, validation, rank, base=base, grid=grid)
        configs.append((name, opts))
    result = run_benchmark(sim, configs, reps, record_timing=record_timing)
    return result, dict(configs)
