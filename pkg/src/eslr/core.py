"""Core (mu/mu_w, lambda) evolution strategy with multiplicative step-size rules.

Every operation is a pure function of its arguments and an explicit random
generator; there is no module-level mutable state.  Replicated runs with
independently seeded generators are therefore safe to execute concurrently,
while a single run is sequential by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

RULES = ("csa1", "csa0", "xnes", "constant")

# Runs stop (and the trace is flagged) once the step-size or the distance to
# the reference point leaves [STATE_FLOOR, STATE_CEIL]; beyond these
# magnitudes float64 cannot represent the state meaningfully.
STATE_FLOOR = 1e-300
STATE_CEIL = 1e300


class ConfigError(ValueError):
    """Invalid algorithm or experiment configuration."""


class EvaluationError(ValueError):
    """The objective returned a non-finite value for a candidate."""

    def __init__(self, index: int, value: float):
        super().__init__(
            f"objective value at candidate index {index} is not finite: {value!r}"
        )
        self.index = index
        self.value = value


def rng_from_seed(seed) -> np.random.Generator:
    """Build a counter-based (Philox) generator from an explicit seed.

    Accepts an integer, a ``SeedSequence`` or an already constructed
    ``Generator`` (returned unchanged).  All public entry points of the
    package route their randomness through this function; there is no
    ambient random state anywhere.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if seed is None:
        raise ConfigError("seed is mandatory; no ambient randomness is allowed")
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    return np.random.Generator(np.random.Philox(seed))


def spawn_rngs(seed, count: int) -> list[np.random.Generator]:
    """Split a seed into ``count`` independent child generators.

    Children are derived with ``SeedSequence.spawn`` so the assignment of
    streams to replicates does not depend on execution order.
    """
    if isinstance(seed, np.random.SeedSequence):
        root = seed
    else:
        root = np.random.SeedSequence(seed)
    return [np.random.Generator(np.random.Philox(child)) for child in root.spawn(count)]


@dataclass(frozen=True)
class AlgorithmConfig:
    """Parameters of the (mu/mu_w, lambda) evolution strategy.

    Args:
        n: Search-space dimension.
        lam: Number of candidate solutions sampled per iteration.
        mu: Number of best candidates recombined into the new mean.
        weights: Recombination weights, one per selected candidate.  Must be
            a non-zero vector; non-negative entries are required for the
            ``xnes`` rule.
        d_sigma: Damping of the step-size update, positive.
        rule: Step-size rule, one of ``csa1``, ``csa0``, ``xnes`` or
            ``constant``.
        const_factor: Multiplier applied per iteration by the ``constant``
            rule; ignored by the other rules.
    """

    n: int
    lam: int
    mu: int
    weights: np.ndarray
    d_sigma: float = 1.0
    rule: str = "csa1"
    const_factor: float = 1.0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError("'n' must be a positive integer")
        if self.lam < 1:
            raise ConfigError("'lam' must be a positive integer")
        if not 1 <= self.mu <= self.lam:
            raise ConfigError("'mu' must satisfy 1 <= mu <= lam")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.mu,):
            raise ConfigError(f"'weights' must have shape ({self.mu},), got {w.shape}")
        if not np.all(np.isfinite(w)) or not np.any(w != 0.0):
            raise ConfigError("'weights' must be a finite non-zero vector")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.d_sigma <= 0:
            raise ConfigError("'d_sigma' must be positive")
        if self.rule not in RULES:
            raise ConfigError(f"'rule' must be one of {RULES}, got {self.rule!r}")
        if self.rule == "xnes" and np.any(w < 0):
            raise ConfigError("rule 'xnes' requires non-negative weights")
        if self.rule == "constant" and not self.const_factor > 0:
            raise ConfigError("rule 'constant' requires a positive 'const_factor'")


def default_config(
    n: int,
    rule: str = "csa1",
    lam: int = 11,
    mu: int = 3,
    d_sigma: float = 1.0,
    const_factor: float = 1.0,
) -> AlgorithmConfig:
    """Config with equal recombination weights 1/mu (lam=11, mu=3 defaults)."""
    return AlgorithmConfig(
        n=n,
        lam=lam,
        mu=mu,
        weights=np.full(mu, 1.0 / mu),
        d_sigma=d_sigma,
        rule=rule,
        const_factor=const_factor,
    )


@dataclass(frozen=True)
class EsState:
    """Incumbent solution, step-size and iteration counter."""

    x: np.ndarray
    sigma: float
    k: int = 0

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        object.__setattr__(self, "x", x)
        if not self.sigma > 0:
            raise ConfigError("'sigma' must stay positive")


@dataclass(frozen=True)
class RunTrace:
    """Per-iteration record of a run.

    Row ``j`` holds the iteration index ``k``, the distance of the incumbent
    to the reference point and the step-size *before* the step, and the log
    step-size change ``log(sigma_{k+1}/sigma_k)`` applied by that step.
    ``stop_reason`` is set when the run was cut short by the numerical guard.
    """

    k: np.ndarray
    dist: np.ndarray
    sigma: np.ndarray
    log_gamma: np.ndarray
    stop_reason: Optional[str] = None

    def __len__(self) -> int:
        return len(self.k)


def expected_norm(n: int) -> float:
    """Mean length of a standard normal n-vector.

    sqrt(2) * Gamma((n+1)/2) / Gamma(n/2), evaluated through log-gamma so it
    does not overflow for large n.
    """
    if n < 1:
        raise ConfigError("'n' must be a positive integer")
    return math.exp(0.5 * math.log(2.0) + math.lgamma((n + 1) / 2.0) - math.lgamma(n / 2.0))


def _batched(u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim < 2:
        raise ValueError("selected steps must have shape (..., mu, n)")
    return u


def log_gamma_csa1(u, cfg: AlgorithmConfig):
    """Log step-size change comparing the squared length of the recombined
    step to its expectation under independent sampling.

    Accepts a (mu, n) array or any batch of them with shape (..., mu, n).
    """
    u = _batched(u)
    w = cfg.weights
    recomb = np.einsum("m,...mn->...n", w, u)
    sq = np.einsum("...n,...n->...", recomb, recomb)
    out = (sq / float(w @ w) - cfg.n) / (2.0 * cfg.d_sigma * cfg.n)
    return float(out) if out.ndim == 0 else out


def log_gamma_csa0(u, cfg: AlgorithmConfig):
    """Log step-size change comparing the length (not squared) of the
    recombined step to its expectation; not continuously differentiable.
    """
    u = _batched(u)
    w = cfg.weights
    recomb = np.einsum("m,...mn->...n", w, u)
    length = np.sqrt(np.einsum("...n,...n->...", recomb, recomb))
    norm_w = float(np.linalg.norm(w))
    out = (length / (norm_w * expected_norm(cfg.n)) - 1.0) / cfg.d_sigma
    return float(out) if out.ndim == 0 else out


def log_gamma_xnes(u, cfg: AlgorithmConfig):
    """Log step-size change from the weighted sum of squared step lengths."""
    u = _batched(u)
    w = cfg.weights
    if np.any(w < 0):
        raise ConfigError("xnes step-size update requires non-negative weights")
    sq_norms = np.einsum("...mn,...mn->...m", u, u)
    coef = w / np.sum(np.abs(w))
    out = np.einsum("m,...m->...", coef, sq_norms - cfg.n) / (2.0 * cfg.d_sigma * cfg.n)
    return float(out) if out.ndim == 0 else out


def log_gamma(u, cfg: AlgorithmConfig):
    """Log of the multiplicative step-size factor for the configured rule.

    Computed directly from the exponent expression (never as the log of the
    exponential) so large arguments cannot degrade to ``log(inf)`` or lose
    precision to cancellation.
    """
    if cfg.rule == "csa1":
        return log_gamma_csa1(u, cfg)
    if cfg.rule == "csa0":
        return log_gamma_csa0(u, cfg)
    if cfg.rule == "xnes":
        return log_gamma_xnes(u, cfg)
    u = _batched(u)
    value = math.log(cfg.const_factor)
    shape = u.shape[:-2]
    return value if shape == () else np.full(shape, value)


def gamma_csa1(u, cfg: AlgorithmConfig):
    """Multiplicative step-size factor of the squared-length rule;
    bounded below by exp(-1/(2 d_sigma))."""
    return np.exp(log_gamma_csa1(u, cfg))


def gamma_csa0(u, cfg: AlgorithmConfig):
    """Multiplicative step-size factor of the length rule;
    bounded below by exp(-1/d_sigma)."""
    return np.exp(log_gamma_csa0(u, cfg))


def gamma_xnes(u, cfg: AlgorithmConfig):
    """Multiplicative step-size factor of the weighted squared-norms rule;
    bounded below by exp(-1/(2 d_sigma)) for non-negative weights."""
    return np.exp(log_gamma_xnes(u, cfg))


def gamma(u, cfg: AlgorithmConfig):
    """Multiplicative step-size factor for the configured rule."""
    return np.exp(log_gamma(u, cfg))


def _gamma_value_fn(cfg: AlgorithmConfig) -> Callable[[float], float]:
    """Map a log step-size change to the multiplicative factor.

    The constant rule returns its factor directly so that sigma changes by
    exactly ``const_factor`` per iteration instead of ``exp(log c)``.
    """
    if cfg.rule == "constant":
        c = cfg.const_factor
        return lambda lg: c
    return math.exp


def _log_gamma_fn(cfg: AlgorithmConfig) -> Callable[[np.ndarray], float]:
    """Specialized scalar log-gamma for hot loops (constants precomputed)."""
    w = np.asarray(cfg.weights, dtype=float)
    n = cfg.n
    if cfg.rule == "csa1":
        inv = 1.0 / (2.0 * cfg.d_sigma * n)
        wsq = float(w @ w)

        def fn(sel):
            s = w @ sel
            return (float(s @ s) / wsq - n) * inv

        return fn
    if cfg.rule == "csa0":
        denom = float(np.linalg.norm(w)) * expected_norm(n)
        inv_d = 1.0 / cfg.d_sigma

        def fn(sel):
            s = w @ sel
            return (math.sqrt(float(s @ s)) / denom - 1.0) * inv_d

        return fn
    if cfg.rule == "xnes":
        coef = w / np.sum(np.abs(w))
        inv = 1.0 / (2.0 * cfg.d_sigma * n)

        def fn(sel):
            sq = np.einsum("mn,mn->m", sel, sel)
            return float(coef @ (sq - n)) * inv

        return fn
    value = math.log(cfg.const_factor)
    return lambda sel: value


def sample_offspring(cfg: AlgorithmConfig, rng: np.random.Generator) -> np.ndarray:
    """Draw the lam independent standard normal n-vectors of one iteration.

    Candidate solutions are ``x + sigma * u`` for each returned row ``u``.
    """
    return rng.standard_normal((cfg.lam, cfg.n))


def ranked_indices(f, z, u) -> np.ndarray:
    """Objective ranking of the candidates ``z + u[i]``.

    Returns the permutation sorting candidates by increasing objective
    value.  The sort is stable, so equal values keep their original sampling
    order, which is the deterministic tie-breaking contract.

    Raises:
        EvaluationError: if the objective returns NaN or infinity for any
            candidate; the error carries the offending candidate index.
    """
    u = np.asarray(u, dtype=float)
    values = np.asarray(f(z + u), dtype=float)
    finite = np.isfinite(values)
    if not finite.all():
        index = int(np.argmax(~finite))
        raise EvaluationError(index, float(values[index]))
    return np.argsort(values, kind="stable")


def select(f, z, u, mu: int) -> np.ndarray:
    """The mu best of the steps ``u`` around ``z``, ordered by f-value.

    Returns a (mu, n) array whose rows are among the rows of ``u``.
    """
    u = np.asarray(u, dtype=float)
    if not 1 <= mu <= len(u):
        raise ConfigError("'mu' must satisfy 1 <= mu <= lam")
    return u[ranked_indices(f, z, u)[:mu]]


def update_mean(state: EsState, sel: np.ndarray, cfg: AlgorithmConfig) -> np.ndarray:
    """New incumbent: weighted recombination of the selected steps."""
    return state.x + state.sigma * (cfg.weights @ sel)


def step(state: EsState, f, cfg: AlgorithmConfig, rng: np.random.Generator):
    """One full iteration: sample, select, recombine, rescale the step-size.

    Returns the successor state and the log step-size change of this step.
    """
    u = sample_offspring(cfg, rng)
    order = ranked_indices(f, state.x, state.sigma * u)
    sel = u[order[: cfg.mu]]
    lg = float(_log_gamma_fn(cfg)(sel))
    new_state = EsState(
        x=update_mean(state, sel, cfg),
        sigma=state.sigma * _gamma_value_fn(cfg)(lg),
        k=state.k + 1,
    )
    return new_state, lg


def run(cfg: AlgorithmConfig, f, x0, sigma0: float, k_max: int, seed) -> RunTrace:
    """Run the strategy for up to ``k_max`` iterations and record the trace.

    The run stops early, with ``stop_reason`` set, when the step-size or the
    distance to the reference point leaves the representable range.
    """
    if k_max < 1:
        raise ConfigError("'k_max' must be at least 1")
    if not sigma0 > 0:
        raise ConfigError("'sigma0' must be positive")
    x = np.array(x0, dtype=float)
    if x.shape != (cfg.n,):
        raise ConfigError(f"'x0' must have shape ({cfg.n},), got {x.shape}")
    rng = rng_from_seed(seed)
    x_star = np.asarray(f.x_star, dtype=float)
    w = np.asarray(cfg.weights, dtype=float)
    lam, n, mu = cfg.lam, cfg.n, cfg.mu
    lg_fn = _log_gamma_fn(cfg)
    gamma_fn = _gamma_value_fn(cfg)

    ks = np.empty(k_max, dtype=np.int64)
    dists = np.empty(k_max)
    sigmas = np.empty(k_max)
    lgs = np.empty(k_max)
    rows = 0
    sigma = float(sigma0)
    stop_reason = None
    for k in range(k_max):
        dist = float(np.linalg.norm(x - x_star))
        if sigma < STATE_FLOOR:
            stop_reason = "sigma_underflow"
            break
        if dist < STATE_FLOOR:
            stop_reason = "distance_underflow"
            break
        if sigma > STATE_CEIL:
            stop_reason = "sigma_overflow"
            break
        if dist > STATE_CEIL:
            stop_reason = "distance_overflow"
            break
        u = rng.standard_normal((lam, n))
        order = ranked_indices(f, x, sigma * u)
        sel = u[order[:mu]]
        lg = lg_fn(sel)
        ks[rows] = k
        dists[rows] = dist
        sigmas[rows] = sigma
        lgs[rows] = lg
        rows += 1
        x = x + sigma * (w @ sel)
        sigma *= gamma_fn(lg)
    return RunTrace(
        k=ks[:rows].copy(),
        dist=dists[:rows].copy(),
        sigma=sigmas[:rows].copy(),
        log_gamma=lgs[:rows].copy(),
        stop_reason=stop_reason,
    )
