"""The step-size-normalized Markov chain and its drift diagnostics.

On a scaling-invariant objective the normalized state z = (x - x_star)/sigma
is a homogeneous Markov chain: one update selects the mu best unit-step
candidates around x_star + z, recombines them into z and divides by the
step-size change factor.  Simulating this chain reproduces the log step-size
increments of the underlying strategy without ever forming the (possibly
overflowing) raw state, which is what all rate estimators here build on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    AlgorithmConfig,
    ConfigError,
    EvaluationError,
    _gamma_value_fn,
    _log_gamma_fn,
    log_gamma,
    ranked_indices,
    rng_from_seed,
)
from .objectives import Objective, linear

_CHUNK = 65536


def _mean_se(samples: np.ndarray) -> tuple[float, float]:
    """Sample mean and standard error; exact for a degenerate sample.

    Identical samples (as produced by the constant step-size rule) return
    that value with zero standard error instead of picking up summation
    round-off.
    """
    lo, hi = samples.min(), samples.max()
    if lo == hi:
        return float(lo), 0.0
    return float(samples.mean()), float(samples.std(ddof=1) / math.sqrt(len(samples)))


def chain_update(z: np.ndarray, sel: np.ndarray, cfg: AlgorithmConfig):
    """Deterministic part of the chain transition.

    Returns the successor state (z + sum_i w_i sel_i) / Gamma(sel) together
    with log Gamma(sel).
    """
    lg = float(_log_gamma_fn(cfg)(np.asarray(sel, dtype=float)))
    z_next = (np.asarray(z, dtype=float) + cfg.weights @ sel) / _gamma_value_fn(cfg)(lg)
    return z_next, lg


def chain_step(z, f: Objective, cfg: AlgorithmConfig, rng: np.random.Generator) -> np.ndarray:
    """One transition of the normalized chain."""
    z = np.asarray(z, dtype=float)
    u = rng.standard_normal((cfg.lam, cfg.n))
    order = ranked_indices(f, f.x_star + z, u)
    sel = u[order[: cfg.mu]]
    z_next, _ = chain_update(z, sel, cfg)
    return z_next


def simulate_chain(f: Objective, cfg: AlgorithmConfig, z0, t: int, seed, keep_states: bool = False):
    """Simulate ``t`` chain transitions from ``z0``.

    Returns ``(log_gammas, z_final)`` or, with ``keep_states``, the full
    (t+1, n) state history in place of the final state.
    """
    if t < 1:
        raise ConfigError("'t' must be at least 1")
    rng = rng_from_seed(seed)
    z = np.array(z0, dtype=float)
    if z.shape != (cfg.n,):
        raise ConfigError(f"'z0' must have shape ({cfg.n},), got {z.shape}")
    x_star = np.asarray(f.x_star, dtype=float)
    w = np.asarray(cfg.weights, dtype=float)
    lam, n, mu = cfg.lam, cfg.n, cfg.mu
    lg_fn = _log_gamma_fn(cfg)
    gamma_fn = _gamma_value_fn(cfg)
    lgs = np.empty(t)
    states = np.empty((t + 1, n)) if keep_states else None
    if keep_states:
        states[0] = z
    for k in range(t):
        u = rng.standard_normal((lam, n))
        order = ranked_indices(f, x_star + z, u)
        sel = u[order[:mu]]
        lg = lg_fn(sel)
        z = (z + w @ sel) / gamma_fn(lg)
        lgs[k] = lg
        if keep_states:
            states[k + 1] = z
    return (lgs, states) if keep_states else (lgs, z)


def _batch_selected(f: Objective, cfg: AlgorithmConfig, center, count, rng):
    """Vectorized draws of the selected unit steps around a fixed center.

    Returns an array of shape (count, mu, n).
    """
    u = rng.standard_normal((count, cfg.lam, cfg.n))
    values = f.fn(center + u)
    finite = np.isfinite(values)
    if not finite.all():
        flat = int(np.argmax(~finite.reshape(-1)))
        raise EvaluationError(flat % cfg.lam, float(values.reshape(-1)[flat]))
    order = np.argsort(values, axis=1, kind="stable")[:, : cfg.mu]
    return np.take_along_axis(u, order[:, :, None], axis=1)


def sample_log_gammas(
    f: Objective, cfg: AlgorithmConfig, z, m: int, rng: np.random.Generator
) -> np.ndarray:
    """m independent one-step samples of log Gamma at the chain state z."""
    z = np.asarray(z, dtype=float)
    center = np.asarray(f.x_star, dtype=float) + z
    out = np.empty(m)
    done = 0
    while done < m:
        count = min(_CHUNK, m - done)
        sel = _batch_selected(f, cfg, center, count, rng)
        out[done : done + count] = np.atleast_1d(log_gamma(sel, cfg))
        done += count
    return out


def gamma_star_logs(cfg: AlgorithmConfig, m: int, rng: np.random.Generator) -> np.ndarray:
    """m i.i.d. samples of log of the step-size change on a linear function."""
    return sample_log_gammas(linear(cfg.n), cfg, np.zeros(cfg.n), m, rng)


def estimate_Rf(z, f: Objective, cfg: AlgorithmConfig, m: int, seed):
    """Monte Carlo estimate of the expected one-step log step-size change.

    Returns ``(mean, stderr)`` over m independent draws.
    """
    if m < 2:
        raise ConfigError("'m' must be at least 2")
    rng = rng_from_seed(seed)
    lgs = sample_log_gammas(f, cfg, z, m, rng)
    return _mean_se(lgs)


@dataclass(frozen=True)
class DriftReport:
    """One-step moment contraction at a state z against its large-norm limit.

    ``ratio`` estimates E[||Z_1||^alpha | Z_0 = z] / ||z||^alpha; ``limit_ref``
    estimates E[Gamma*^-alpha] where Gamma* is the step-size change on a
    linear function.  ``ci_halfwidth`` is the four-standard-error radius used
    when checking agreement of the two estimates.
    """

    z_norm: float
    alpha: float
    ratio: float
    ratio_stderr: float
    limit_ref: float
    limit_stderr: float
    ci_halfwidth: float


def drift_ratio(z, alpha: float, f: Objective, cfg: AlgorithmConfig, m: int, seed) -> DriftReport:
    """Estimate the alpha-moment ratio at z and its linear-function limit."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError("'alpha' must lie in (0, 1)")
    if m < 100:
        raise ConfigError("'m' must be at least 100")
    z = np.asarray(z, dtype=float)
    z_norm = float(np.linalg.norm(z))
    if z_norm == 0.0:
        raise ConfigError("'z' must be non-zero; the moment ratio is undefined at 0")
    rng = rng_from_seed(seed)
    w = np.asarray(cfg.weights, dtype=float)
    center = np.asarray(f.x_star, dtype=float) + z

    ratio_samples = np.empty(m)
    done = 0
    while done < m:
        count = min(_CHUNK, m - done)
        sel = _batch_selected(f, cfg, center, count, rng)
        lgs = np.atleast_1d(log_gamma(sel, cfg))
        z1 = (z + np.einsum("m,kmn->kn", w, sel)) / np.exp(lgs)[:, None]
        ratio_samples[done : done + count] = (np.linalg.norm(z1, axis=1) / z_norm) ** alpha
        done += count

    limit_samples = np.exp(-alpha * gamma_star_logs(cfg, m, rng))
    ratio, ratio_se = _mean_se(ratio_samples)
    limit, limit_se = _mean_se(limit_samples)
    return DriftReport(
        z_norm=z_norm,
        alpha=alpha,
        ratio=ratio,
        ratio_stderr=ratio_se,
        limit_ref=limit,
        limit_stderr=limit_se,
        ci_halfwidth=4.0 * math.hypot(ratio_se, limit_se),
    )


DEFAULT_ALPHA_GRID = tuple(round(0.05 * i, 2) for i in range(1, 20))


def find_drift_alpha(
    cfg: AlgorithmConfig,
    alpha_grid=DEFAULT_ALPHA_GRID,
    m: int = 200_000,
    seed=0,
) -> Optional[float]:
    """Smallest grid alpha certifying E[Gamma*^-alpha] < 1 by a 4-stderr margin.

    Requires a positive expected log step-size change on linear functions
    (checked first, also with a 4-stderr margin); returns None when either
    check fails on every grid point.
    """
    if m < 2:
        raise ConfigError("'m' must be at least 2")
    rng = rng_from_seed(seed)
    lgs = gamma_star_logs(cfg, m, rng)
    mean_lg, se_lg = _mean_se(lgs)
    if not mean_lg > 4.0 * se_lg:
        return None
    for alpha in sorted(alpha_grid):
        if not 0.0 < alpha < 1.0:
            raise ConfigError("'alpha_grid' entries must lie in (0, 1)")
        mean, se = _mean_se(np.exp(-alpha * lgs))
        if mean < 1.0 - 4.0 * se:
            return float(alpha)
    return None
