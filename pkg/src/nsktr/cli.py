"""Command-line driver.

Subcommands: simulate, fit, predict, select-rank, tune, benchmark.
Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numerical
failure.  Every failure prints a single machine-parseable line to stderr
prefixed with "nsktr: <kind> error:".

Config files are flat key=value text (one per line, # comments allowed):

    rank, t_iter, outer_tol, rho, admm_tol, seed, init
    mode.<d>.lambda1 / .lambda2 / .lambda3 / .nonneg   (d is 0-based)

Unknown keys are hard errors.
"""

import argparse
import json
import os
import sys
from dataclasses import replace

import numpy as np

from .admm import AdmmOptions, NumericalError
from .bench import (
    SignalSpec,
    generate_signal,
    simulate_dataset,
    SimConfig,
    table_protocol,
)
from .io import FileFormatError, read_dataset, read_model, read_tensor, write_dataset, write_model
from .model import FitOptions, fit, predict
from .regularizers import ModeRegConfig
from .selection import greedy_lambda_search, lambda_grid, select_rank, split_dataset

__all__ = ["ConfigError", "parse_config", "write_config", "run_cli", "main"]


class ConfigError(Exception):
    """Malformed or out-of-domain configuration file."""


class _Parser(argparse.ArgumentParser):
    # usage problems must exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"nsktr: usage error: {message}", file=sys.stderr)
        raise SystemExit(1)


# ----------------------------------------------------------------------
# config files

_SCALAR_KEYS = ("rank", "t_iter", "outer_tol", "rho", "admm_tol", "seed", "init")
_MODE_KEYS = ("lambda1", "lambda2", "lambda3", "nonneg")
_INITS = ("random_uniform_nonneg", "random_gaussian")


def _parse_bool(raw, where):
    low = raw.strip().lower()
    if low in ("1", "true", "yes"):
        return True
    if low in ("0", "false", "no"):
        return False
    raise ConfigError(f"{where}: expected a boolean, got {raw!r}")


def parse_config(path):
    """Parse a key=value config file into FitOptions.

    Absent keys take the documented defaults; per-mode entries are kept
    sparse and materialized once the data's mode count is known.
    """
    scalars = {}
    modes = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {text!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            where = f"{path}:{lineno}: {key}"
            if key in _SCALAR_KEYS:
                if key in scalars:
                    raise ConfigError(f"{where}: duplicate key")
                scalars[key] = (raw, lineno)
            elif key.startswith("mode."):
                parts = key.split(".")
                if len(parts) != 3 or parts[2] not in _MODE_KEYS:
                    raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
                try:
                    d = int(parts[1])
                except ValueError:
                    raise ConfigError(f"{where}: mode index must be an integer") from None
                if d < 0:
                    raise ConfigError(f"{where}: mode index must be >= 0")
                field = parts[2]
                entry = modes.setdefault(d, {})
                if field in entry:
                    raise ConfigError(f"{where}: duplicate key")
                if field == "nonneg":
                    entry[field] = _parse_bool(raw, where)
                else:
                    val = _parse_float(raw, where)
                    if val < 0:
                        raise ConfigError(f"{where}: must be >= 0, got {val}")
                    entry[field] = val
            else:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")

    def scalar(key, conv, default):
        if key not in scalars:
            return default
        raw, lineno = scalars[key]
        return conv(raw, f"{path}:{lineno}: {key}")

    rank = scalar("rank", _parse_int, 1)
    t_iter = scalar("t_iter", _parse_int, 100)
    outer_tol = scalar("outer_tol", _parse_float, 1e-6)
    rho = scalar("rho", _parse_float, 1.0)
    admm_tol = scalar("admm_tol", _parse_float, 1e-5)
    seed = scalar("seed", _parse_int, 0)
    init = scalar("init", lambda raw, where: raw.strip(), "random_uniform_nonneg")
    if rank < 1:
        raise ConfigError(f"{path}: rank must be >= 1, got {rank}")
    if t_iter < 1:
        raise ConfigError(f"{path}: t_iter must be >= 1, got {t_iter}")
    if outer_tol < 0:
        raise ConfigError(f"{path}: outer_tol must be >= 0")
    if rho <= 0:
        raise ConfigError(f"{path}: rho must be > 0, got {rho}")
    if admm_tol <= 0:
        raise ConfigError(f"{path}: admm_tol must be > 0, got {admm_tol}")
    if init not in _INITS:
        raise ConfigError(f"{path}: init must be one of {_INITS}, got {init!r}")
    per_mode = {d: ModeRegConfig(**fields) for d, fields in modes.items()} or None
    return FitOptions(rank=rank, per_mode=per_mode, t_iter=t_iter,
                      outer_tol=outer_tol,
                      admm=AdmmOptions(rho=rho, tol=admm_tol),
                      init=init, seed=seed)


def _parse_int(raw, where):
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected an integer, got {raw!r}") from None


def _parse_float(raw, where):
    try:
        val = float(raw)
    except ValueError:
        raise ConfigError(f"{where}: expected a number, got {raw!r}") from None
    if not np.isfinite(val):
        raise ConfigError(f"{where}: must be finite, got {raw!r}")
    return val


def write_config(path, opts, ndim=None):
    """Emit a FitOptions as a config file parse_config can read back."""
    lines = [
        f"rank={opts.rank}",
        f"t_iter={opts.t_iter}",
        f"outer_tol={opts.outer_tol!r}",
        f"rho={opts.admm.rho!r}",
        f"admm_tol={opts.admm.tol!r}",
        f"seed={opts.seed}",
        f"init={opts.init}",
    ]
    per_mode = opts.per_mode
    if isinstance(per_mode, dict):
        items = sorted(per_mode.items())
    elif per_mode is None:
        items = []
    else:
        items = list(enumerate(per_mode))
    for d, cfg in items:
        lines.append(f"mode.{d}.lambda1={cfg.lambda1!r}")
        lines.append(f"mode.{d}.lambda2={cfg.lambda2!r}")
        lines.append(f"mode.{d}.lambda3={cfg.lambda3!r}")
        lines.append(f"mode.{d}.nonneg={'true' if cfg.nonneg else 'false'}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


# ----------------------------------------------------------------------
# subcommands


def _cmd_simulate(ns):
    dims = tuple(int(d) for d in ns.dims.split(",")) if ns.dims else None
    spec = SignalSpec(kind=ns.signal, dims=dims)
    signal = generate_signal(spec)
    sim = SimConfig(n=ns.n, snr_db=ns.snr, seed=ns.seed, signal=spec)
    data = simulate_dataset(sim, signal, loss=ns.loss)
    write_dataset(ns.out, data, signal=signal,
                  meta={"signal": ns.signal, "snr_db": ns.snr, "seed": ns.seed})
    print(f"wrote {data.n} samples to {ns.out}")
    return 0


def _load_fit_options(ns, data):
    opts = parse_config(ns.config) if ns.config else FitOptions()
    if getattr(ns, "rank", None) is not None:
        opts = replace(opts, rank=ns.rank)
    if getattr(ns, "seed", None) is not None:
        opts = replace(opts, seed=ns.seed)
    return opts


def _cmd_fit(ns):
    data = read_dataset(ns.data, loss=ns.loss)
    opts = _load_fit_options(ns, data)
    report = fit(data, opts)
    metadata = {
        "loss": data.loss,
        "seed": opts.seed,
        "iterations": int(len(report.objective_trace)),
        "final_objective": float(report.objective_trace[-1]),
    }
    from .model import resolve_per_mode

    write_model(ns.out, report.model,
                configs=resolve_per_mode(opts.per_mode, data.ndim),
                metadata=metadata)
    print(json.dumps({
        "converged": report.converged,
        "stop_reason": report.stop_reason,
        "iterations": metadata["iterations"],
        "final_objective": metadata["final_objective"],
        "objective_trace": [float(v) for v in report.objective_trace],
        "elapsed_seconds": report.elapsed,
        "seed": opts.seed,
        "model_file": ns.out,
    }, indent=2))
    return 0


def _cmd_predict(ns):
    model, _configs, metadata = read_model(ns.model)
    x = read_tensor(ns.input)
    loss = ns.loss or metadata.get("loss", "linear")
    print(repr(predict(model, x, loss=loss)))
    return 0


def _parse_ranks(text):
    ranks = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if ".." in chunk:
            lo, hi = chunk.split("..")
            ranks.extend(range(int(lo), int(hi) + 1))
        elif chunk:
            ranks.append(int(chunk))
    if not ranks:
        raise ValueError(f"no ranks in {text!r}")
    return ranks


def _cmd_select_rank(ns):
    data = read_dataset(ns.data, loss=ns.loss)
    opts = _load_fit_options(ns, data)
    ranks = _parse_ranks(ns.ranks)
    best, curve = select_rank(data, ranks, opts, replicates=ns.reps)
    lines = ["rank,bic,log_likelihood,p_e,sigma2_hat"]
    for r in curve:
        s2 = "" if r.sigma2_hat is None else repr(r.sigma2_hat)
        lines.append(f"{r.rank},{r.bic!r},{r.log_likelihood!r},{r.p_e},{s2}")
    text = "\n".join(lines) + "\n"
    if ns.out:
        with open(ns.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"best rank: {best}", file=sys.stderr)
    return 0


def _cmd_tune(ns):
    data = read_dataset(ns.data, loss=ns.loss)
    opts = _load_fit_options(ns, data)
    train, validation = split_dataset(data, 0.8, opts.seed)
    lambda0 = float(train.n) if ns.grid_l0 == "auto" else float(ns.grid_l0)
    grid = lambda_grid(lambda0, ns.grid_epsilon, ns.grid_levels)
    tuned = greedy_lambda_search(train, opts, grid, validation)
    write_config(ns.out, replace(opts, per_mode=tuned))
    print(f"wrote tuned config to {ns.out}")
    return 0


_DESK_SUITE = {
    "signals": (("gradient", (32, 32), 2), ("floor", (32, 32), 2), ("wave", (32, 32), 2)),
    "n": 400,
    "reps": 3,
}
_FULL_SUITE = {
    "signals": (("gradient", (128, 128), 2), ("floor", (128, 128), 2),
                ("wave", (128, 128), 2), ("fading-cross", (32, 32, 32), 3)),
    "n": 1000,
    "reps": 5,
}


def _desk_base_options():
    return FitOptions(t_iter=30, outer_tol=1e-5, admm=AdmmOptions(max_iters=150))


def _full_base_options():
    # per-sweep iteration caps lean on warm starts across sweeps
    return FitOptions(t_iter=60, outer_tol=1e-5, admm=AdmmOptions(max_iters=120))


def _cmd_benchmark(ns):
    if ns.suite != "table1":
        raise ValueError(f"unknown suite {ns.suite!r}")
    suite = _DESK_SUITE if ns.scale == "desk" else _FULL_SUITE
    base = _desk_base_options() if ns.scale == "desk" else _full_base_options()
    os.makedirs(ns.out, exist_ok=True)
    methods = ("LS", "EN", "nEN", "FL", "nFL")
    all_rows, all_failures = [], []
    for kind, dims, rank in suite["signals"]:
        result, _configs = table_protocol(
            SignalSpec(kind=kind, dims=dims), n=suite["n"], rank=rank,
            snr_db=ns.snr, methods=methods, reps=suite["reps"], seed=ns.seed,
            base=base, record_timing=ns.timing)
        all_rows.extend(result.rows)
        all_failures.extend(result.failures)
    from .bench import BenchmarkResult

    merged = BenchmarkResult(rows=all_rows, failures=all_failures)
    merged.to_csv(os.path.join(ns.out, "results.csv"))
    merged.to_json(os.path.join(ns.out, "summary.json"))
    print(f"wrote {len(all_rows)} rows to {ns.out}")
    return 0


# ----------------------------------------------------------------------
# parser


def build_parser():
    parser = _Parser(prog="nsktr",
                     description="Kruskal tensor regression with hybrid mode penalties")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("simulate", help="generate a synthetic dataset",
                       description="Generate a synthetic signal and simulate responses.")
    p.add_argument("--signal", required=True,
                   choices=["gradient", "floor", "wave", "fading-cross"])
    p.add_argument("--n", type=int, required=True, help="number of samples")
    p.add_argument("--snr", type=float, default=20.0, help="signal-to-noise ratio in dB")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dims", default=None, help="override dims, e.g. 32,32")
    p.add_argument("--loss", default="linear", choices=["linear", "logistic"])
    p.add_argument("--out", required=True, help="output dataset directory")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="fit a model to a dataset directory",
                       description="Fit a Kruskal regression model; report JSON on stdout.")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--loss", default=None, choices=["linear", "logistic"])
    p.add_argument("--config", default=None, help="key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output model file (.nskm)")
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("predict", help="predict one sample from a saved model",
                       description="Print the model prediction for one tensor file.")
    p.add_argument("--model", required=True, help="model file (.nskm)")
    p.add_argument("--input", required=True, help="tensor file (.nskt)")
    p.add_argument("--loss", default=None, choices=["linear", "logistic"])
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("select-rank", help="sweep ranks and pick the BIC minimizer",
                       description="Fit candidate ranks and print the BIC curve as CSV.")
    p.add_argument("--data", required=True)
    p.add_argument("--ranks", required=True, help="e.g. 1..5 or 1,2,4")
    p.add_argument("--reps", type=int, default=5, help="replicate fits per rank")
    p.add_argument("--loss", default=None, choices=["linear", "logistic"])
    p.add_argument("--config", default=None)
    p.add_argument("--rank", type=int, default=None, help=argparse.SUPPRESS)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None, help="write CSV here instead of stdout")
    p.set_defaults(func=_cmd_select_rank)

    p = sub.add_parser("tune", help="greedy penalty search on a validation split",
                       description="Tune per-mode penalties by sequential greedy grid search.")
    p.add_argument("--data", required=True)
    p.add_argument("--grid-l0", default="auto",
                   help="top of the penalty grid; 'auto' uses the training sample count")
    p.add_argument("--grid-epsilon", type=float, default=1e-3)
    p.add_argument("--grid-levels", type=int, default=5)
    p.add_argument("--loss", default=None, choices=["linear", "logistic"])
    p.add_argument("--config", default=None)
    p.add_argument("--rank", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True, help="output config file")
    p.set_defaults(func=_cmd_tune)

    p = sub.add_parser("benchmark", help="run the estimation-error benchmark suite",
                       description="Run the synthetic estimation benchmark and write "
                                   "results.csv plus summary.json.")
    p.add_argument("--suite", default="table1", help="benchmark suite name")
    p.add_argument("--scale", default="desk", choices=["desk", "full"])
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--timing", action="store_true",
                   help="record wall-clock seconds (off by default so reruns "
                        "are byte-identical)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_benchmark)

    return parser


def run_cli(args):
    """Parse and dispatch; returns the process exit code."""
    parser = build_parser()
    try:
        ns = parser.parse_args(args)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return ns.func(ns)
    except (FileFormatError, ConfigError) as e:
        print(f"nsktr: data error: {e}", file=sys.stderr)
        return 2
    except (NumericalError, np.linalg.LinAlgError) as e:
        print(f"nsktr: numerical error: {e}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as e:
        print(f"nsktr: data error: {e}", file=sys.stderr)
        return 2


def main():
    sys.exit(run_cli(sys.argv[1:]))
