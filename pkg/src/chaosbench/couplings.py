"""Single-pair coupling steps for (limit copy, particle copy) systems.

Each step function advances one CoupledPair by one Euler step.  The pair
holds the limit member (an independent copy driven by the limit flow) and
the particle member (one coordinate of the interacting system); their
mean-field drift contributions are computed by the caller and passed in.

Couplings:

* synchronous: identical noise for both members.
* distance-cutoff reflection (Brownian): below half the cutoff the pair is
  driven synchronously, above the cutoff the shared Brownian motion is
  reflected across the difference direction, with a linear interpolation
  in between.  Both members still see standard Brownian noise.
* refined basic (heavy-tailed): resolved jumps land on both members; with
  a thinning probability proportional to the reflection weight the
  particle jump is additionally shifted by the capped difference vector,
  which sends the difference to exactly zero whenever it is shorter than
  the cap radius.  Acceptance probabilities use the ratio of the jump
  density at the shifted point, so the particle marginal is preserved.

Merging is pure bookkeeping: a pair whose gap falls below the merge radius
becomes pending, is driven synchronously for one step, and is marked
merged if the gap is still below the radius.  Merged pairs stay merged and
are driven synchronously forever; positions are never snapped together.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ModelSpec
from .noise import (StableSpec, brownian_increment, density_ratio,
                    sample_jumps, small_jump_compensation, stable_increment)

__all__ = [
    "CutoffSpec", "CoupledPair", "reflection_weight", "cap_vector",
    "synchronous_step", "reflection_step", "refined_basic_step",
]


@dataclass(frozen=True)
class CutoffSpec:
    """Distance cutoff for reflection/thinning and the merge radius."""

    epsilon: float
    merge_radius: Optional[float] = None

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("cutoff epsilon must be positive")
        if self.merge_radius is None:
            object.__setattr__(self, "merge_radius", self.epsilon / 4.0)
        if not 0 < self.merge_radius < self.epsilon / 2.0:
            raise ValueError("merge radius must lie in (0, epsilon / 2)")


def reflection_weight(r, epsilon):
    """Piecewise-linear activation: 0 below eps/2, 1 above eps."""
    return np.clip(2.0 * np.asarray(r, dtype=float) / epsilon - 1.0,
                   0.0, 1.0)


def cap_vector(x, kappa):
    """x scaled down to length kappa if longer, else x itself."""
    x = np.asarray(x, dtype=float)
    r = np.linalg.norm(x)
    if r <= kappa:
        return x.copy()
    return x * (kappa / r)


@dataclass
class CoupledPair:
    """State of one (limit, particle) pair with merge bookkeeping."""

    limit: np.ndarray
    particle: np.ndarray
    merged: bool = False
    merge_time: Optional[float] = None
    pending: bool = False

    @property
    def gap(self):
        return float(np.linalg.norm(self.limit - self.particle))


def _settle(pair, new_limit, new_particle, cutoff, t_next):
    """Apply the two-stage merge rule to the post-step positions."""
    if pair.merged:
        return CoupledPair(new_limit, new_particle, True, pair.merge_time)
    below = float(np.linalg.norm(new_limit - new_particle)) \
        < cutoff.merge_radius
    if pair.pending:
        if below:
            return CoupledPair(new_limit, new_particle, True, t_next)
        return CoupledPair(new_limit, new_particle)
    return CoupledPair(new_limit, new_particle, pending=below)


def _drifted(pair, model, limit_field, particle_field, dt):
    new_l = pair.limit + (model.drift(pair.limit) + limit_field) * dt
    new_p = pair.particle + (model.drift(pair.particle)
                             + particle_field) * dt
    return new_l, new_p


def synchronous_step(pair, model, limit_field, particle_field, dt, cutoff,
                     rng, stable=None, t=0.0):
    """Both members receive identical noise.

    Brownian models add the shared dispersion drive on top; with a
    StableSpec the shared increment is drawn exactly via subordination,
    which is also how merged pairs advance in jump-resolved runs.
    """
    new_l, new_p = _drifted(pair, model, limit_field, particle_field, dt)
    d = model.dim
    if stable is not None:
        dz = stable_increment(stable.alpha, d, dt, rng)
        new_l = new_l + dz
        new_p = new_p + dz
    else:
        dw = brownian_increment(dt, d, rng)
        root_beta = np.sqrt(model.profile.diffusion)
        new_l = new_l + root_beta * dw
        new_p = new_p + root_beta * dw
        if model.has_dispersion:
            db = brownian_increment(dt, d, rng)
            new_l = new_l + model.dispersion_apply(pair.limit, db)
            new_p = new_p + model.dispersion_apply(pair.particle, db)
    return _settle(pair, new_l, new_p, cutoff, t + dt)


def reflection_step(pair, model, limit_field, particle_field, dt, cutoff,
                    rng, t=0.0):
    """Distance-cutoff reflection coupling for Brownian models.

    With w the reflection weight at the pre-step gap and c = sqrt(1 - w^2),
    the limit member sees w dW + c dV and the particle member sees the
    dW part reflected across the difference direction, plus the same
    c dV.  Quadratic variations stay the identity, so each member is
    driven by a standard Brownian motion.

    Draw order per step is fixed at dW, dV, then the shared dispersion
    drive when present, for every pair state; merged and pending pairs
    advance synchronously on dW and discard dV.  Constant per-step stream
    consumption keeps this bit-for-bit equal to the vectorized engine.
    """
    d = model.dim
    dw = brownian_increment(dt, d, rng)
    dv = brownian_increment(dt, d, rng)
    db = brownian_increment(dt, d, rng) if model.has_dispersion else None
    new_l, new_p = _drifted(pair, model, limit_field, particle_field, dt)
    root_beta = np.sqrt(model.profile.diffusion)
    if pair.merged or pair.pending:
        new_l = new_l + root_beta * dw
        new_p = new_p + root_beta * dw
    else:
        diff = pair.limit - pair.particle
        r = float(np.linalg.norm(diff))
        w = float(reflection_weight(r, cutoff.epsilon))
        comp = np.sqrt(max(0.0, 1.0 - w * w))
        if w > 0.0 and r > 0.0:
            u = diff / r
            reflected = dw - 2.0 * u * float(u @ dw)
        else:
            reflected = dw
        shared = root_beta * comp * dv
        new_l = new_l + root_beta * w * dw + shared
        new_p = new_p + root_beta * w * reflected + shared
    if db is not None:
        new_l = new_l + model.dispersion_apply(pair.limit, db)
        new_p = new_p + model.dispersion_apply(pair.particle, db)
    return _settle(pair, new_l, new_p, cutoff, t + dt)


def refined_basic_step(pair, model, limit_field, particle_field, dt,
                       cutoff, kappa, stable, rng, t=0.0):
    """Thinned jump coupling with capped shifts for heavy-tailed noise.

    Both members receive every resolved jump z of the limit member.  With
    the difference frozen between acceptances, two extra branches are
    offered per jump, each with probability half the reflection weight
    times the density ratio at the shifted jump:

    * shift the particle by +cap, moving the difference to diff - cap
      (to exactly zero when the gap is below kappa);
    * shift the particle by -cap, reflecting the difference to diff + cap.

    The difference is frozen between acceptances, so screening every
    remaining jump against the current difference at once is exact up to
    the first acceptance; the difference is then updated and the later
    jumps of the step are rescreened.  One thinning uniform is drawn per
    resolved jump regardless of outcome, keeping stream consumption a
    function of the jump count only.  Both members share every resolved
    jump and the small-jump Gaussian compensation.
    """
    if not isinstance(stable, StableSpec):
        raise TypeError("refined_basic_step needs a StableSpec")
    if not stable.trunc < kappa:
        raise ValueError("jump resolution cutoff must be below the cap "
                         "radius kappa")
    if pair.merged or pair.pending:
        return synchronous_step(pair, model, limit_field, particle_field,
                                dt, cutoff, rng, stable=stable, t=t)
    new_l, new_p = _drifted(pair, model, limit_field, particle_field, dt)
    diff = new_l - new_p
    jumps = sample_jumps(stable, dt, rng)
    m = jumps.shape[0]
    if m:
        draws = rng.uniform(size=m)
        start = 0
        while start < m:
            r = float(np.linalg.norm(diff))
            w = float(reflection_weight(r, cutoff.epsilon))
            if not (w > 0.0 and r > 0.0):
                break  # without an acceptance the difference cannot move
            cap = cap_vector(diff, kappa)
            rest = jumps[start:]
            p_zero = 0.5 * w * density_ratio(-cap, rest, stable.alpha)
            p_refl = 0.5 * w * density_ratio(cap, rest, stable.alpha)
            u = draws[start:]
            hit_zero = u < p_zero
            hit = hit_zero | (u < p_zero + p_refl)
            if not hit.any():
                break
            j = int(np.argmax(hit))
            if hit_zero[j]:
                if r <= kappa:
                    # the full-difference shift closes the gap exactly;
                    # adding cap back would leave rounding dust
                    new_p = new_l.copy()
                    diff = np.zeros_like(diff)
                else:
                    new_p = new_p + cap
                    diff = diff - cap
            else:
                new_p = new_p - cap
                diff = diff + cap
            start += j + 1
        shared = jumps.sum(axis=0)
        new_l = new_l + shared
        new_p = new_p + shared
    comp = small_jump_compensation(stable, dt, rng)
    new_l = new_l + comp
    new_p = new_p + comp
    return _settle(pair, new_l, new_p, cutoff, t + dt)
