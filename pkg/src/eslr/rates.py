"""Convergence/divergence rate estimation with CLT confidence intervals.

The almost-sure rate of the strategy equals the stationary mean of the log
step-size change along the normalized chain.  It is estimated by the time
average of the simulated increments; the asymptotic variance is estimated by
non-overlapping batch means, the standard device for correlated chains.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .chain import simulate_chain
from .core import AlgorithmConfig, ConfigError, RunTrace, spawn_rngs
from .objectives import Objective

Z_95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass(frozen=True)
class RateEstimate:
    """Time-average rate estimate with a batch-means confidence interval."""

    rate: float
    gamma2: float
    ci: tuple[float, float]
    t: int
    burn_in: int
    batches: int

    def ci_width(self) -> float:
        return self.ci[1] - self.ci[0]


@dataclass(frozen=True)
class SlopeFit:
    """Least-squares slopes of the log-distance and log-step-size tails.

    ``residual`` is the larger of the two root-mean-square fit residuals;
    ``truncated`` flags that trailing machine-zero distances were dropped
    before fitting.
    """

    slope_x: float
    slope_sigma: float
    residual: float
    truncated: bool = False


def batch_means_variance(values: np.ndarray, batches: int) -> float:
    """Asymptotic variance of the mean of a correlated sequence.

    Splits the sequence into ``batches`` non-overlapping batches of equal
    length (any remainder at the end is dropped) and rescales the empirical
    variance of the batch means.
    """
    values = np.asarray(values, dtype=float)
    if batches < 2:
        raise ConfigError("'batches' must be at least 2")
    b = len(values) // batches
    if b < 1:
        raise ConfigError(
            f"degenerate batches: {len(values)} samples cannot fill {batches} batches"
        )
    if values.min() == values.max():
        return 0.0
    means = values[: b * batches].reshape(batches, b).mean(axis=1)
    return float(b * means.var(ddof=1))


def estimate_rate(
    f: Objective,
    cfg: AlgorithmConfig,
    z0,
    t: int,
    burn_in: Optional[int] = None,
    batches: int = 30,
    seed=0,
) -> RateEstimate:
    """Estimate the linear rate from one chain trajectory of length ``t``.

    ``burn_in`` defaults to 10 * n; the 95% interval is
    rate +- 1.96 * sqrt(gamma2 / (t - burn_in)).
    """
    if burn_in is None:
        burn_in = 10 * cfg.n
    if burn_in < 0:
        raise ConfigError("'burn_in' must be non-negative")
    if t < 10 * burn_in or t <= burn_in:
        raise ConfigError("'t' must be at least 10 * burn_in (and exceed burn_in)")
    lgs, _ = simulate_chain(f, cfg, z0, t, seed)
    kept = lgs[burn_in:]
    rate = float(kept[0]) if kept.min() == kept.max() else float(kept.mean())
    gamma2 = batch_means_variance(kept, batches)
    half = Z_95 * math.sqrt(gamma2 / len(kept))
    return RateEstimate(
        rate=rate,
        gamma2=gamma2,
        ci=(rate - half, rate + half),
        t=t,
        burn_in=burn_in,
        batches=batches,
    )


def fit_slopes(trace: RunTrace, tail_fraction: float = 0.5) -> SlopeFit:
    """Fit the tail slopes of log distance and log step-size against k."""
    if len(trace) < 100:
        raise ConfigError("'trace' must have at least 100 rows")
    if not 0.0 < tail_fraction <= 1.0:
        raise ConfigError("'tail_fraction' must lie in (0, 1]")
    start = len(trace) - max(2, int(round(tail_fraction * len(trace))))
    k = trace.k[start:].astype(float)
    dist = trace.dist[start:]
    sigma = trace.sigma[start:]

    truncated = False
    zero = dist <= 0.0
    if zero.any():
        cut = int(np.argmax(zero))
        if cut < 2:
            raise ConfigError("tail distance is zero; nothing left to fit")
        k, dist, sigma = k[:cut], dist[:cut], sigma[:cut]
        truncated = True

    def fit(y):
        coef, res = np.polyfit(k, y, 1), None
        res = y - np.polyval(coef, k)
        return float(coef[0]), float(np.sqrt(np.mean(res * res)))

    slope_x, res_x = fit(np.log(dist))
    slope_sigma, res_sigma = fit(np.log(sigma))
    return SlopeFit(
        slope_x=slope_x,
        slope_sigma=slope_sigma,
        residual=max(res_x, res_sigma),
        truncated=truncated,
    )


def expected_log_progress(
    f: Objective,
    cfg: AlgorithmConfig,
    z0,
    k_max: int,
    replicates: int,
    seed=0,
    threads: int = 1,
):
    """Per-iteration mean of the log step-size change across replicates.

    Runs ``replicates`` independently seeded chains of length ``k_max`` from
    the same normalized start and averages iteration-wise.  Returns
    ``(means, stderrs)`` arrays of length ``k_max``.  Replicates may be
    evaluated in parallel; results are keyed by replicate index, so the
    output does not depend on scheduling.
    """
    if replicates < 100:
        raise ConfigError("'replicates' must be at least 100")
    if k_max < 1:
        raise ConfigError("'k_max' must be at least 1")
    rngs = spawn_rngs(seed, replicates)
    table = np.empty((replicates, k_max))

    def work(r):
        lgs, _ = simulate_chain(f, cfg, z0, k_max, rngs[r])
        table[r] = lgs

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, range(replicates)))
    else:
        for r in range(replicates):
            work(r)
    lo, hi = table.min(axis=0), table.max(axis=0)
    means = np.where(lo == hi, lo, table.mean(axis=0))
    stderrs = np.where(lo == hi, 0.0, table.std(axis=0, ddof=1) / math.sqrt(replicates))
    return means, stderrs
