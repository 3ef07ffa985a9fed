"""Driving noise: Brownian increments and rotationally invariant stable noise.

Conventions.  The stable drive is normalized so that
E exp(i<xi, Z_t>) = exp(-t |xi|^alpha); its Levy measure is then
constant * |z|^(-d-alpha) dz with ``constant = levy_constant(d, alpha)``.
Exact increments use subordination: Z = sqrt(2 S) N with N standard normal
and S a positive (alpha/2)-stable variable with Laplace transform
exp(-t lambda^(alpha/2)), sampled by Kanter's representation.

Jump-resolved form.  For coupling constructions the increment is split at a
truncation radius: jumps above it arrive as a compound Poisson stream with

    rate = constant * surface * trunc^(-alpha) / alpha

per unit time, Pareto radial law P(|z| > u) = (trunc / u)^alpha and uniform
directions; the part below is replaced by a centered Gaussian matching its
quadratic variation, dt * constant * surface * trunc^(2-alpha) / (2 - alpha)
split evenly over coordinates (or dropped, for bias studies).  The density
of the Levy measure shifted by x relative to the unshifted one is

    ratio(x, z) = (|z| / (|z| v |z - x|))^(d+alpha)  in [0, 1],

the thinning weight used by the refined basic coupling.
"""

from dataclasses import dataclass

import numpy as np

from .constants import levy_constant, sphere_surface

__all__ = [
    "StableSpec", "brownian_increment", "subordinator_increment",
    "stable_increment", "density_ratio", "jump_rate", "sample_jumps",
    "small_jump_std", "small_jump_compensation",
]


@dataclass(frozen=True)
class StableSpec:
    """Jump-resolved description of the stable drive.

    Attributes:
        alpha: stability index in (1, 2).
        dim: state dimension.
        trunc: truncation radius splitting resolved jumps from the
            Gaussian compensation.
        constant: Levy density constant; defaults to the value matching the
            exp(-t |xi|^alpha) convention.
        small_jump_mode: "gaussian" (default) or "drop".
    """

    alpha: float
    dim: int
    trunc: float
    constant: float = None
    small_jump_mode: str = "gaussian"

    def __post_init__(self):
        if not 1.0 < self.alpha < 2.0:
            raise ValueError("alpha must lie in (1, 2)")
        if self.dim < 1:
            raise ValueError("dim must be at least 1")
        if self.trunc <= 0:
            raise ValueError("trunc must be positive")
        if self.small_jump_mode not in ("gaussian", "drop"):
            raise ValueError("small_jump_mode must be 'gaussian' or 'drop'")
        if self.constant is None:
            object.__setattr__(self, "constant",
                               levy_constant(self.dim, self.alpha))
        elif self.constant <= 0:
            raise ValueError("Levy constant must be positive")


def brownian_increment(dt, dim, rng, n=None):
    """Standard Brownian increment(s) over dt; shape (dim,) or (n, dim)."""
    if dt < 0:
        raise ValueError("dt must be non-negative")
    shape = (dim,) if n is None else (n, dim)
    if dt == 0:
        return np.zeros(shape)
    return rng.normal(0.0, np.sqrt(dt), size=shape)


def subordinator_increment(index, dt, rng, n=None):
    """Positive stable increment with E exp(-u S) = exp(-dt u^index).

    Kanter's representation: with U uniform on (0, pi) and E unit
    exponential,

        S = dt^(1/index) * (a(U) / E)^((1-index)/index),
        a(u) = sin(index u)^(index/(1-index)) sin((1-index) u)
               / sin(u)^(1/(1-index)),

    evaluated in log space for stability near the endpoints.
    """
    if not 0.0 < index < 1.0:
        raise ValueError("subordinator index must lie in (0, 1)")
    if dt < 0:
        raise ValueError("dt must be non-negative")
    size = None if n is None else n
    if dt == 0:
        return 0.0 if n is None else np.zeros(n)
    u = rng.uniform(0.0, np.pi, size=size)
    e = rng.standard_exponential(size=size)
    g = index
    log_a = (g / (1.0 - g)) * np.log(np.sin(g * u)) \
        + np.log(np.sin((1.0 - g) * u)) \
        - (1.0 / (1.0 - g)) * np.log(np.sin(u))
    s1 = np.exp(((1.0 - g) / g) * (log_a - np.log(e)))
    return dt ** (1.0 / g) * s1


def stable_increment(alpha, dim, dt, rng, n=None):
    """Exact rotationally invariant stable increment(s) over dt.

    Subordinated Gaussian: sqrt(2 S) N with S an (alpha/2)-subordinator
    increment, which reproduces exp(-dt |xi|^alpha) exactly.
    """
    if not 1.0 < alpha < 2.0:
        raise ValueError("alpha must lie in (1, 2)")
    count = 1 if n is None else n
    s = subordinator_increment(alpha / 2.0, dt, rng, n=count)
    z = rng.normal(size=(count, dim)) * np.sqrt(2.0 * np.atleast_1d(s))[:, None]
    return z[0] if n is None else z


def density_ratio(x, z, alpha):
    """Thinning weight (|z| / (|z| v |z - x|))^(d+alpha) in [0, 1].

    Args:
        x: shift vector, shape (d,).
        z: jump vector(s), shape (d,) or (m, d); must be nonzero.
    """
    x = np.asarray(x, dtype=float)
    z = np.asarray(z, dtype=float)
    d = x.shape[-1]
    single = z.ndim == 1
    zz = z[None, :] if single else z
    nz = np.linalg.norm(zz, axis=1)
    if np.any(nz == 0.0):
        raise ValueError("density ratio undefined at z = 0")
    shifted = np.linalg.norm(zz - x[None, :], axis=1)
    ratio = (nz / np.maximum(nz, shifted)) ** (d + alpha)
    return float(ratio[0]) if single else ratio


def jump_rate(spec):
    """Arrival rate of resolved jumps per unit time."""
    return (spec.constant * sphere_surface(spec.dim)
            * spec.trunc ** (-spec.alpha) / spec.alpha)


def sample_jumps(spec, dt, rng):
    """Resolved jumps over a window dt as an (m, dim) array.

    Count is Poisson with mean jump_rate(spec) * dt; radii follow the Pareto
    tail of the Levy measure above trunc; directions are uniform.  The rows
    are exchangeable, so their order serves as arrival order.
    """
    if dt < 0:
        raise ValueError("dt must be non-negative")
    m = rng.poisson(jump_rate(spec) * dt) if dt > 0 else 0
    if m == 0:
        return np.empty((0, spec.dim))
    radii = spec.trunc * rng.uniform(size=m) ** (-1.0 / spec.alpha)
    if spec.dim == 1:
        signs = rng.integers(0, 2, size=m) * 2 - 1
        return (radii * signs)[:, None].astype(float)
    direction = rng.normal(size=(m, spec.dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    return radii[:, None] * direction


def small_jump_std(spec, dt):
    """Per-coordinate standard deviation of the Gaussian compensation."""
    var = (dt * spec.constant * sphere_surface(spec.dim)
           * spec.trunc ** (2.0 - spec.alpha) / (2.0 - spec.alpha))
    return np.sqrt(var / spec.dim)


def small_jump_compensation(spec, dt, rng, n=None):
    """Centered replacement for the sub-trunc jump activity over dt."""
    shape = (spec.dim,) if n is None else (n, spec.dim)
    if spec.small_jump_mode == "drop" or dt == 0:
        return np.zeros(shape)
    return rng.normal(0.0, small_jump_std(spec, dt), size=shape)
