"""Experiment driver: run traces, rate estimates, condition checks, drift
diagnostics.

Every subcommand reads a JSON config (schema version 1), requires an
explicit seed, and writes machine-readable output: CSV for traces, JSON for
reports.  Identical config and seed produce byte-identical output; JSON
reports embed the fully resolved configuration for auditability.

Exit codes: 0 success, 2 configuration error, 3 numerical abort (a run cut
short by the range guard), 4 internal invariant violation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .chain import drift_ratio, find_drift_alpha
from .conditions import evaluate_condition
from .core import AlgorithmConfig, ConfigError, run
from .objectives import Objective, make_objective
from .rates import estimate_rate, expected_log_progress, fit_slopes

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INTERNAL = 4


class NumericalAbort(RuntimeError):
    """A run stopped early on the representable-range guard."""


def _fmt(value: float) -> str:
    return f"{value:.17g}"


def _load_config(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            config = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(config, dict):
        raise ConfigError("config root must be a JSON object")
    version = config.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ConfigError(f"'schema_version' must be {SCHEMA_VERSION}, got {version!r}")
    return config


def _require(config: dict, field: str, section: str = "config"):
    if field not in config:
        raise ConfigError(f"missing required field '{field}' in {section}")
    return config[field]


def _resolve_seed(config: dict, args) -> int:
    if args.seed is not None:
        return args.seed
    seed = config.get("seed")
    if seed is None:
        raise ConfigError("missing required field 'seed' (or pass --seed)")
    if not isinstance(seed, int) or seed < 0:
        raise ConfigError("'seed' must be a non-negative integer")
    return seed


def _build_objective(config: dict) -> Objective:
    section = _require(config, "objective")
    if not isinstance(section, dict):
        raise ConfigError("'objective' must be an object")
    name = _require(section, "name", "objective")
    n = _require(section, "n", "objective")
    params = {
        key: value
        for key, value in section.items()
        if key not in ("name", "n", "transform")
    }
    return make_objective(name, n, transform=section.get("transform"), **params)


def _build_algorithm(config: dict, n: int) -> AlgorithmConfig:
    section = _require(config, "algorithm")
    if not isinstance(section, dict):
        raise ConfigError("'algorithm' must be an object")
    lam = _require(section, "lam", "algorithm")
    mu = _require(section, "mu", "algorithm")
    weights = section.get("weights")
    if weights is None:
        weights = [1.0 / mu] * mu
    return AlgorithmConfig(
        n=n,
        lam=lam,
        mu=mu,
        weights=np.asarray(weights, dtype=float),
        d_sigma=section.get("d_sigma", 1.0),
        rule=_require(section, "rule", "algorithm"),
        const_factor=section.get("const_factor", 1.0),
    )


def _resolved_config(config: dict, seed: int, cfg: AlgorithmConfig | None) -> dict:
    resolved = json.loads(json.dumps(config))
    resolved["seed"] = seed
    if cfg is not None:
        resolved["algorithm"] = {
            "lam": cfg.lam,
            "mu": cfg.mu,
            "weights": list(cfg.weights),
            "d_sigma": cfg.d_sigma,
            "rule": cfg.rule,
            "const_factor": cfg.const_factor,
        }
    return resolved


def _write_text(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


def _emit_json(path: str | None, document: dict) -> None:
    _write_text(path, json.dumps(document, sort_keys=True, indent=2) + "\n")


def cmd_run(config: dict, seed: int, threads: int, out: str | None) -> int:
    f = _build_objective(config)
    cfg = _build_algorithm(config, f.n)
    section = _require(config, "run")
    x0 = np.asarray(_require(section, "x0", "run"), dtype=float)
    trace = run(
        cfg,
        f,
        x0,
        _require(section, "sigma0", "run"),
        _require(section, "k_max", "run"),
        seed,
    )
    lines = ["k,dist,sigma,log_gamma"]
    for k, dist, sigma, lg in zip(trace.k, trace.dist, trace.sigma, trace.log_gamma):
        lines.append(f"{k},{_fmt(dist)},{_fmt(sigma)},{_fmt(lg)}")
    _write_text(out, "\n".join(lines) + "\n")
    if trace.stop_reason is not None:
        print(f"run stopped early after {len(trace)} rows: {trace.stop_reason}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_rate(config: dict, seed: int, threads: int, out: str | None) -> int:
    f = _build_objective(config)
    cfg = _build_algorithm(config, f.n)
    run_section = _require(config, "run")
    rate_section = _require(config, "rate")
    x0 = np.asarray(_require(run_section, "x0", "run"), dtype=float)
    sigma0 = _require(run_section, "sigma0", "run")
    root = np.random.SeedSequence(seed)
    chain_seed, run_seed, progress_seed = root.spawn(3)

    z0 = (x0 - f.x_star) / sigma0
    estimate = estimate_rate(
        f,
        cfg,
        z0,
        t=_require(rate_section, "t", "rate"),
        burn_in=rate_section.get("burn_in"),
        batches=rate_section.get("batches", 30),
        seed=chain_seed,
    )
    trace = run(cfg, f, x0, sigma0, _require(run_section, "k_max", "run"), run_seed)
    slopes = fit_slopes(trace, rate_section.get("tail_fraction", 0.5))

    document = {
        "schema_version": SCHEMA_VERSION,
        "command": "rate",
        "version": __version__,
        "config": _resolved_config(config, seed, cfg),
        "rate_estimate": {
            "rate": estimate.rate,
            "gamma2": estimate.gamma2,
            "ci_low": estimate.ci[0],
            "ci_high": estimate.ci[1],
            "t": estimate.t,
            "burn_in": estimate.burn_in,
            "batches": estimate.batches,
        },
        "slope_fit": {
            "slope_x": slopes.slope_x,
            "slope_sigma": slopes.slope_sigma,
            "residual": slopes.residual,
            "truncated": slopes.truncated,
            "rows": len(trace),
            "stop_reason": trace.stop_reason,
        },
    }
    replicates = rate_section.get("replicates")
    if replicates:
        k_max = rate_section.get("progress_k_max", 200)
        means, stderrs = expected_log_progress(
            f, cfg, z0, k_max, replicates, seed=progress_seed, threads=threads
        )
        document["expected_log_progress"] = {
            "k_max": k_max,
            "replicates": replicates,
            "tail_mean": float(means[k_max // 2 :].mean()),
            "means": [float(v) for v in means],
            "stderrs": [float(v) for v in stderrs],
        }
    _emit_json(out, document)
    return EXIT_OK


def cmd_condition(config: dict, seed: int, threads: int, out: str | None) -> int:
    section = _require(config, "condition")
    if not isinstance(section, dict):
        raise ConfigError("'condition' must be an object")
    mu = _require(section, "mu", "condition")
    weights = section.get("weights")
    if weights is None:
        weights = [1.0 / mu] * mu
    report = evaluate_condition(
        rule=_require(section, "rule", "condition"),
        lam=_require(section, "lam", "condition"),
        mu=mu,
        w=np.asarray(weights, dtype=float),
        d_sigma=section.get("d_sigma", 1.0),
        n=_require(section, "n", "condition"),
        m=section.get("samples", 10_000_000),
        seed=seed,
    )
    document = {
        "schema_version": SCHEMA_VERSION,
        "command": "condition",
        "version": __version__,
        "config": _resolved_config(config, seed, None),
        "condition_report": dataclasses.asdict(report),
    }
    document["condition_report"]["weights"] = list(report.weights)
    _emit_json(out, document)
    return EXIT_OK


def cmd_diagnose(config: dict, seed: int, threads: int, out: str | None) -> int:
    f = _build_objective(config)
    cfg = _build_algorithm(config, f.n)
    section = _require(config, "diagnose")
    if not isinstance(section, dict):
        raise ConfigError("'diagnose' must be an object")
    z_norms = _require(section, "z_norms", "diagnose")
    if not isinstance(z_norms, list) or not z_norms:
        raise ConfigError("'z_norms' must be a non-empty list")
    for value in z_norms:
        if not value > 0:
            raise ConfigError("'z_norms' entries must be positive; z = 0 is rejected")
    m = section.get("samples", 200_000)
    direction = section.get("direction")
    if direction is None:
        d = np.ones(cfg.n) / math.sqrt(cfg.n)
    else:
        d = np.asarray(direction, dtype=float)
        if d.shape != (cfg.n,) or not np.linalg.norm(d) > 0:
            raise ConfigError(f"'direction' must be a non-zero vector of length {cfg.n}")
        d = d / np.linalg.norm(d)

    root = np.random.SeedSequence(seed)
    alpha = section.get("alpha")
    alpha_seed, *row_seeds = root.spawn(1 + len(z_norms))
    if alpha is None:
        alpha = find_drift_alpha(cfg, m=m, seed=alpha_seed)
        if alpha is None:
            raise ConfigError(
                "no drift exponent certified: expected log step-size change on "
                "linear functions is not positive; set 'alpha' explicitly"
            )

    def work(index: int):
        report = drift_ratio(z_norms[index] * d, alpha, f, cfg, m, row_seeds[index])
        return dataclasses.asdict(report)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(work, range(len(z_norms))))
    else:
        rows = [work(i) for i in range(len(z_norms))]

    document = {
        "schema_version": SCHEMA_VERSION,
        "command": "diagnose",
        "version": __version__,
        "config": _resolved_config(config, seed, cfg),
        "alpha": alpha,
        "drift_reports": rows,
    }
    _emit_json(out, document)
    return EXIT_OK


_COMMANDS = {
    "run": cmd_run,
    "rate": cmd_rate,
    "condition": cmd_condition,
    "diagnose": cmd_diagnose,
}


def _default_threads() -> int:
    env = os.environ.get("ESLR_THREADS")
    if env is None:
        return 1
    try:
        value = int(env)
    except ValueError:
        raise ConfigError(f"ESLR_THREADS must be an integer, got {env!r}")
    if value < 1:
        raise ConfigError("ESLR_THREADS must be at least 1")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eslr",
        description="Step-size adaptive evolution strategy experiments and "
        "linear rate estimators.",
    )
    parser.add_argument("--version", action="version", version=f"eslr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("run", "run the strategy and write the per-iteration trace as CSV"),
        ("rate", "estimate the linear rate with a confidence interval (JSON)"),
        ("condition", "evaluate the step-size increase condition (JSON)"),
        ("diagnose", "moment-contraction drift diagnostics over a norm grid (JSON)"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="path to a JSON experiment config")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument(
            "--threads",
            type=int,
            default=None,
            help="worker threads for replicates (default: ESLR_THREADS or 1)",
        )
        cmd.add_argument("--out", default=None, help="output path (default: stdout)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        threads = args.threads if args.threads is not None else _default_threads()
        if threads < 1:
            raise ConfigError("--threads must be at least 1")
        config = _load_config(args.config)
        seed = _resolve_seed(config, args)
        return _COMMANDS[args.command](config, seed, threads, args.out)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {exc!r}", file=sys.stderr)
        return EXIT_INTERNAL


def entry_point() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
