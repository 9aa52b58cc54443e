"""Scaling-invariant test objectives with declared reference points.

Class tags:
    ``F1``    strictly increasing transform of a smooth scaling-invariant
              function with a unique global argmin,
    ``F2``    strictly increasing transform of a nontrivial linear function,
    ``OTHER`` scaling-invariant but with non-smooth level sets.

All objectives are immutable, evaluate batches of points of shape (..., n)
along the last axis, and can be shared freely between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import ConfigError

F1 = "F1"
F2 = "F2"
OTHER = "OTHER"


@dataclass(frozen=True)
class Objective:
    """An evaluable function together with its reference point and class tag."""

    name: str
    n: int
    fn: Callable[[np.ndarray], np.ndarray]
    x_star: np.ndarray
    class_tag: str

    def __post_init__(self):
        x_star = np.asarray(self.x_star, dtype=float)
        if x_star.shape != (self.n,):
            raise ConfigError(f"'x_star' must have shape ({self.n},)")
        x_star = x_star.copy()
        x_star.setflags(write=False)
        object.__setattr__(self, "x_star", x_star)

    def __call__(self, x):
        return self.fn(np.asarray(x, dtype=float))


def sphere(n: int) -> Objective:
    """f(x) = ||x||^2 with optimum at the origin."""
    return Objective(
        name="sphere",
        n=n,
        fn=lambda x: np.sum(x * x, axis=-1),
        x_star=np.zeros(n),
        class_tag=F1,
    )


def ellipsoid(n: int) -> Objective:
    """f(x) = sum_i 10^(3(i-1)/(n-1)) x_i^2, condition number 10^3."""
    exponents = 3.0 * np.arange(n) / max(n - 1, 1)
    coeffs = 10.0 ** exponents
    coeffs.setflags(write=False)
    return Objective(
        name="ellipsoid",
        n=n,
        fn=lambda x: np.sum(coeffs * x * x, axis=-1),
        x_star=np.zeros(n),
        class_tag=F1,
    )


def linear(n: int) -> Objective:
    """The coordinate projection x -> x_1; scaling-invariant with respect to
    every reference point, reported here with respect to the origin."""
    return Objective(
        name="linear",
        n=n,
        fn=lambda x: np.asarray(x, dtype=float)[..., 0],
        x_star=np.zeros(n),
        class_tag=F2,
    )


def one_norm(n: int) -> Objective:
    """f(x) = sum_i |x_i|; unimodal with non-smooth level sets."""
    return Objective(
        name="one_norm",
        n=n,
        fn=lambda x: np.sum(np.abs(x), axis=-1),
        x_star=np.zeros(n),
        class_tag=OTHER,
    )


def half_norm(n: int) -> Objective:
    """f(x) = sum_i sqrt(|x_i|); scale-invariant orderings but level sets so
    pinched that step-size adaptive strategies are expected to fail on it."""
    return Objective(
        name="half_norm",
        n=n,
        fn=lambda x: np.sum(np.sqrt(np.abs(x)), axis=-1),
        x_star=np.zeros(n),
        class_tag=OTHER,
    )


def perturbed_sphere(
    n: int,
    beta: float = 0.5,
    frequency: int = 3,
    modulation_seed: int = 0,
) -> Objective:
    """Positively homogeneous degree-1 function with wiggly level sets.

    f(x) = ||x|| * (1 + beta * s(x/||x||)) where s is a deterministic,
    seed-parameterized finite Fourier series in the direction of x, bounded
    in [-1, 1].  With |beta| < 1 the function is positive away from the
    origin, has its unique argmin there, and f(rho x) = rho f(x) holds for
    all rho > 0 by construction.  Larger |beta| (or frequency) produces
    non-convex sublevel sets.
    """
    if not abs(beta) < 1:
        raise ConfigError("'beta' must satisfy |beta| < 1")
    if frequency < 1:
        raise ConfigError("'frequency' must be a positive integer")
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(modulation_seed)))
    terms = 2 * frequency
    axes = gen.standard_normal((terms, n))
    axes /= np.linalg.norm(axes, axis=1, keepdims=True)
    freqs = gen.integers(1, frequency + 1, size=terms).astype(float)
    phases = gen.uniform(0.0, 2.0 * np.pi, size=terms)
    for arr in (axes, freqs, phases):
        arr.setflags(write=False)

    def fn(x):
        x = np.asarray(x, dtype=float)
        pts = x.reshape(-1, n)
        r = np.linalg.norm(pts, axis=1)
        values = np.zeros(len(pts))
        off_origin = r > 0
        if np.any(off_origin):
            d = pts[off_origin] / r[off_origin, None]
            angles = np.pi * freqs * (d @ axes.T) + phases
            s = np.sin(angles).mean(axis=1)
            values[off_origin] = r[off_origin] * (1.0 + beta * s)
        return values.reshape(x.shape[:-1])

    return Objective(
        name="perturbed_sphere",
        n=n,
        fn=fn,
        x_star=np.zeros(n),
        class_tag=F1,
    )


_TRANSFORMS = {
    "exp": np.exp,
    "cube": lambda y: y * y * y,
    "staircase": lambda y: y + np.floor(y),
}


def compose_increasing(f: Objective, phi_tag: str) -> Objective:
    """Compose an objective with a strictly increasing transform.

    ``exp`` and ``cube`` are smooth; ``staircase`` (y + floor(y)) is
    discontinuous but still strictly increasing.  The class tag and the
    reference point are unchanged.
    """
    tag = phi_tag.lower()
    if tag not in _TRANSFORMS:
        raise ConfigError(f"'phi_tag' must be one of {sorted(_TRANSFORMS)}, got {phi_tag!r}")
    phi = _TRANSFORMS[tag]
    inner = f.fn
    return Objective(
        name=f"{f.name}+{tag}",
        n=f.n,
        fn=lambda x: phi(inner(x)),
        x_star=f.x_star,
        class_tag=f.class_tag,
    )


_FACTORIES = {
    "sphere": sphere,
    "ellipsoid": ellipsoid,
    "linear": linear,
    "one_norm": one_norm,
    "half_norm": half_norm,
    "perturbed_sphere": perturbed_sphere,
}

OBJECTIVE_NAMES = tuple(sorted(_FACTORIES))


def make_objective(name: str, n: int, transform: str | None = None, **params) -> Objective:
    """Instantiate a registered objective by name, optionally composed with
    a strictly increasing transform."""
    if name not in _FACTORIES:
        raise ConfigError(
            f"unknown objective {name!r}; known objectives: {', '.join(OBJECTIVE_NAMES)}"
        )
    try:
        f = _FACTORIES[name](n, **params)
    except TypeError as exc:
        raise ConfigError(f"bad parameters for objective {name!r}: {exc}") from exc
    if transform is not None:
        f = compose_increasing(f, transform)
    return f
