"""Particle systems, the mean-field limit flow, and coupled pair systems.

Three layers share one Euler scheme (drift, then noise; for jump-resolved
runs drift, then jumps, then compensation):

* interacting ensembles: N particles driven by their own empirical measure,
  including the self term, with an O(N) path for separable kernels;
* the limit flow: a frozen-flow Picard iteration producing a
  piecewise-constant-in-time cloud of M samples of the nonlinear law.
  Iterations replay common driving noise, so successive flows contract
  pathwise and the reported deltas measure genuine Picard progress;
* coupled systems: N pairs (limit copy, particle copy) where the limit
  members are independent copies driven by the flow, the particle members
  interact with each other, and each pair advances under a chosen coupling
  from the couplings module.

Randomness is addressed through seeding.stream paths, so any run is
reproducible from (seed, replica) regardless of scheduling.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import couplings
from .couplings import CoupledPair, CutoffSpec
from .metrics import w1_assignment, w1_sorted
from .model import ModelSpec
from .noise import StableSpec, stable_increment
from .seeding import ROLE_INITIAL, ROLE_PAIR, stream

__all__ = [
    "SimulationFault", "InitialLaw", "make_initial", "INITIALS",
    "Ensemble", "save_ensemble", "load_ensemble", "sample_marginal",
    "evolve_positions", "MeasureFlow", "FlowResult", "solve_limit_flow",
    "CoupledRun", "simulate_coupled_systems",
]


class SimulationFault(RuntimeError):
    """Raised when a trajectory leaves the finite range."""


# --- initial laws ------------------------------------------------------------

@dataclass(frozen=True)
class InitialLaw:
    """Named initial law; components are drawn iid across coordinates."""

    name: str
    params: dict

    def sample(self, n, dim, rng):
        p = self.params
        if self.name == "point":
            return np.full((n, dim), float(p.get("value", 0.0)))
        if self.name == "gaussian":
            return rng.normal(p.get("mean", 0.0), p.get("std", 1.0),
                              size=(n, dim))
        if self.name == "pareto":
            # symmetric two-sided Pareto tail: finite p-th moment exactly
            # for p < index
            index, scale = p["index"], p.get("scale", 1.0)
            radii = scale * rng.uniform(size=(n, dim)) ** (-1.0 / index)
            signs = rng.integers(0, 2, size=(n, dim)) * 2 - 1
            return radii * signs
        raise KeyError(f"unknown initial law '{self.name}'")


INITIALS = ("point", "gaussian", "pareto")


def make_initial(name, params=None):
    if name not in INITIALS:
        raise KeyError(f"unknown initial law '{name}'; choose from {INITIALS}")
    params = dict(params or {})
    if name == "pareto" and params.get("index", 0) <= 1:
        raise ValueError("pareto initial law needs index > 1")
    return InitialLaw(name, params)


# --- ensembles and serialization --------------------------------------------

@dataclass
class Ensemble:
    """Snapshot of an exchangeable particle cloud."""

    positions: np.ndarray
    time: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.positions = np.atleast_2d(np.asarray(self.positions,
                                                  dtype=float))

    @property
    def n(self):
        return self.positions.shape[0]

    @property
    def dim(self):
        return self.positions.shape[1]


_HEADER = struct.Struct("<QQdQ")  # n, dim, time, seed


def save_ensemble(path, ensemble):
    """Write a snapshot; '.csv' suffix selects text, anything else binary.

    Binary layout: little-endian header (n, dim, time, seed) followed by
    row-major float64 positions.
    """
    path = str(path)
    if path.endswith(".csv"):
        with open(path, "w") as fh:
            fh.write(f"# time={float(ensemble.time)!r} "
                     f"seed={ensemble.seed}\n")
            fh.write(",".join(f"x{i}" for i in range(ensemble.dim)) + "\n")
            for row in ensemble.positions:
                # plain float repr: shortest digits that round-trip
                fh.write(",".join(repr(float(v)) for v in row) + "\n")
        return
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(ensemble.n, ensemble.dim, ensemble.time,
                              ensemble.seed))
        fh.write(np.ascontiguousarray(ensemble.positions,
                                      dtype="<f8").tobytes())


def load_ensemble(path):
    path = str(path)
    if path.endswith(".csv"):
        time, seed = 0.0, 0
        with open(path) as fh:
            first = fh.readline()
            if first.startswith("#"):
                for tok in first[1:].split():
                    key, _, val = tok.partition("=")
                    if key == "time":
                        time = float(val)
                    elif key == "seed":
                        seed = int(val)
                fh.readline()  # column header
            data = np.loadtxt(fh, delimiter=",", ndmin=2)
        return Ensemble(data, time, seed)
    raw = open(path, "rb").read()
    n, dim, time, seed = _HEADER.unpack_from(raw)
    body = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size)
    if body.size != n * dim:
        raise ValueError(f"corrupt ensemble file: expected {n}x{dim} doubles,"
                         f" found {body.size}")
    return Ensemble(body.reshape(n, dim).copy(), time, seed)


def sample_marginal(positions, k):
    """First k rows; a valid k-marginal sample by exchangeability."""
    pos = positions.positions if isinstance(positions, Ensemble) \
        else np.atleast_2d(np.asarray(positions, dtype=float))
    if not 1 <= k <= pos.shape[0]:
        raise ValueError("marginal order must lie in [1, n]")
    return pos[:k].copy()


# --- shared Euler engine -----------------------------------------------------

def _self_field(model, x):
    # empirical mean-field term, x shaped (n, d) or (replicas, n, d)
    if model.interaction_name == "zero":
        return 0.0
    if x.ndim == 2:
        return model.mean_field(x, x)
    if model._separable:
        return model.kernel(x, x.mean(axis=1, keepdims=True))
    return np.stack([model.mean_field(x[r], x[r])
                     for r in range(x.shape[0])])


def _noise_step(model, x, dt, rng, stable):
    shape = x.shape
    if stable is not None:
        flat = stable_increment(stable.alpha, shape[-1], dt, rng,
                                n=int(np.prod(shape[:-1])))
        return flat.reshape(shape)
    out = np.sqrt(model.profile.diffusion * dt) * rng.normal(size=shape)
    if model.has_dispersion:
        out = out + model.dispersion_apply(
            x, np.sqrt(dt) * rng.normal(size=shape))
    return out


def _steps_for(t_final, dt):
    steps = int(round(t_final / dt))
    if steps < 1 or abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("t_final must be a positive multiple of dt")
    return steps


def _save_indices(save_times, dt, steps):
    times = [0.0, steps * dt] if save_times is None else list(save_times)
    idx = sorted({min(steps, max(0, int(round(t / dt)))) for t in times})
    return idx


def evolve_positions(x, model, t_final, dt, rng, stable=None,
                     save_times=None, field_at=None, check_every=25):
    """Euler evolution of a particle cloud; returns (times, snapshots).

    Args:
        x: (n, d) or (replicas, n, d) initial positions.
        field_at: optional callable (positions, t) -> drift field replacing
            the empirical self-interaction (used for flow-driven copies).
        save_times: times to snapshot (snapped to the step grid); defaults
            to {0, t_final}.

    Raises SimulationFault if positions leave the finite range.
    """
    x = np.array(x, dtype=float)
    steps = _steps_for(t_final, dt)
    save = _save_indices(save_times, dt, steps)
    times, snaps = [], []
    cursor = 0
    if save[cursor] == 0:
        times.append(0.0)
        snaps.append(x.copy())
        cursor += 1
    for k in range(steps):
        t = k * dt
        inter = field_at(x, t) if field_at is not None \
            else _self_field(model, x)
        x = x + (model.drift(x) + inter) * dt + _noise_step(
            model, x, dt, rng, stable)
        if (k + 1) % check_every == 0 or k + 1 == steps:
            if not np.all(np.isfinite(x)):
                raise SimulationFault(
                    f"non-finite state at step {k + 1} (t = {t + dt:g})")
        if cursor < len(save) and k + 1 == save[cursor]:
            times.append((k + 1) * dt)
            snaps.append(x.copy())
            cursor += 1
    return np.array(times), snaps


# --- limit flow --------------------------------------------------------------

@dataclass
class MeasureFlow:
    """Piecewise-constant-in-time sample cloud of the limit law."""

    times: np.ndarray           # (m,), increasing, starts at 0
    snapshots: np.ndarray       # (m, size, d)

    def index_at(self, t):
        i = int(np.searchsorted(self.times, t + 1e-12, side="right") - 1)
        return max(i, 0)

    def snapshot_at(self, t):
        return self.snapshots[self.index_at(t)]

    @property
    def size(self):
        return self.snapshots.shape[1]


@dataclass
class FlowResult:
    flow: MeasureFlow
    deltas: list[float] = field(default_factory=list)


def _flow_distance(a, b):
    # per-time-point distance between sample clouds
    if a.shape[1] == 1:
        return w1_sorted(a, b)
    sub = min(a.shape[0], 1024)
    return w1_assignment(a[:sub], b[:sub])


def solve_limit_flow(model, initial, size, t_final, dt, seed,
                     iterations=3, stable=None, grid_dt=None, path=(2,)):
    """Frozen-flow Picard approximation of the nonlinear limit law.

    Starting from the flow frozen at the initial empirical sample, each
    iteration evolves the same initial cloud with the same replayed driving
    noise against the previous iteration's flow.  Reported deltas are the
    max-over-grid transport distances between successive flows.

    Args:
        initial: InitialLaw or an explicit (size, d) array.
        grid_dt: spacing of flow snapshots; defaults to 32 per run capped
            below by dt.
        path: stream path prefix under the master seed.
    """
    if iterations < 1:
        raise ValueError("need at least one iteration")
    d = model.dim
    if isinstance(initial, InitialLaw):
        x0 = initial.sample(size, d, stream(seed, *path, 0))
    else:
        x0 = np.array(initial, dtype=float)
        if x0.shape != (size, d):
            raise ValueError("initial array must be (size, dim)")
    steps = _steps_for(t_final, dt)
    if grid_dt is None:
        grid_dt = max(dt, t_final / 32.0)
    grid = np.unique(np.round(np.arange(0.0, t_final + 0.5 * grid_dt,
                                        grid_dt) / dt).astype(int))
    grid = grid[grid <= steps]
    grid_times = grid * dt

    prev = MeasureFlow(grid_times,
                       np.repeat(x0[None, :, :], len(grid_times), axis=0))
    deltas = []
    for it in range(iterations):
        rng = stream(seed, *path, 1)  # replayed across iterations
        frozen = prev

        def field_at(x, t):
            return model.mean_field(x, frozen.snapshot_at(t))

        times, snaps = evolve_positions(
            x0, model, t_final, dt, rng, stable=stable,
            save_times=grid_times, field_at=field_at)
        flow = MeasureFlow(times, np.stack(snaps))
        deltas.append(max(_flow_distance(flow.snapshots[i],
                                         prev.snapshots[i])
                          for i in range(len(times))))
        prev = flow
    return FlowResult(prev, deltas)


# --- coupled pair systems ----------------------------------------------------

@dataclass
class CoupledRun:
    """Trajectory summary of an N-pair coupled system."""

    times: np.ndarray
    mean_gap: np.ndarray        # average per-pair distance, the product
                                # metric per pair count
    merge_fraction: np.ndarray
    final_gaps: np.ndarray
    final_merged: np.ndarray


_COUPLING_NAMES = ("reflection", "refined-basic", "synchronous")


def simulate_coupled_systems(model, flow, n_pairs, t_final, dt, cutoff,
                             seed, replica=0, coupling="reflection",
                             initial=None, stable=None, kappa=None,
                             save_times=None, pairing="product"):
    """Run N coupled pairs (limit copy, particle copy) to t_final.

    The limit members are independent copies driven by the flow; the
    particle members interact through their own empirical measure.  Initial
    positions are independent draws from the initial law for both members
    ("product" pairing) or matched by an optimal assignment ("matched").

    Args:
        cutoff: CutoffSpec for the distance cutoff and merge radius.
        coupling: "reflection" (Brownian), "refined-basic" (heavy-tailed
            jumps with capped shifts), or "synchronous".
        kappa: cap radius for refined-basic; defaults to the profile radius.
        replica: index folded into every stream path.

    Returns a CoupledRun sampled at save_times (default {0, t_final}).
    """
    if coupling not in _COUPLING_NAMES:
        raise ValueError(f"coupling must be one of {_COUPLING_NAMES}")
    if initial is None:
        initial = make_initial("gaussian")
    d = model.dim
    limit0 = initial.sample(n_pairs, d, stream(seed, ROLE_INITIAL,
                                               replica, 0))
    part0 = initial.sample(n_pairs, d, stream(seed, ROLE_INITIAL,
                                              replica, 1))
    if pairing == "matched":
        from scipy.optimize import linear_sum_assignment
        from scipy.spatial.distance import cdist
        _, cols = linear_sum_assignment(cdist(limit0, part0))
        part0 = part0[cols]
    elif pairing != "product":
        raise ValueError("pairing must be 'product' or 'matched'")

    if coupling == "refined-basic":
        if stable is None:
            raise ValueError("refined-basic coupling needs a StableSpec")
        if kappa is None:
            kappa = model.profile.radius
    if stable is None and model.profile.alpha != 2.0:
        raise ValueError("heavy-tailed profile needs a StableSpec")

    steps = _steps_for(t_final, dt)
    save = _save_indices(save_times, dt, steps)
    runner = _coupled_loop if stable is not None else _coupled_vector
    return runner(model, flow, limit0, part0, steps, dt, cutoff, seed,
                  replica, coupling, stable, kappa, save)


class _Recorder:
    def __init__(self):
        self.times, self.mean_gap, self.merge_fraction = [], [], []

    def add(self, t, gaps, merged):
        self.times.append(t)
        self.mean_gap.append(float(gaps.mean()))
        self.merge_fraction.append(float(merged.mean()))

    def finish(self, gaps, merged):
        return CoupledRun(np.array(self.times), np.array(self.mean_gap),
                          np.array(self.merge_fraction), gaps, merged)


def _pair_fields(model, limit_states, part_states, snapshot):
    if model.interaction_name == "zero":
        zero = np.zeros_like(limit_states)
        return zero, zero
    return (model.mean_field(limit_states, snapshot),
            _self_field(model, part_states))


def _coupled_loop(model, flow, limit0, part0, steps, dt, cutoff, seed,
                  replica, coupling, stable, kappa, save):
    """Reference engine: one stream per pair, one coupling step at a time.

    Used for every jump-resolved run; also the ground truth the vectorized
    Brownian engine is checked against.
    """
    n_pairs = limit0.shape[0]
    pairs = [CoupledPair(limit0[i].copy(), part0[i].copy())
             for i in range(n_pairs)]
    streams = [stream(seed, ROLE_PAIR, replica, i) for i in range(n_pairs)]

    def snapshot_arrays():
        gaps = np.array([p.gap for p in pairs])
        merged = np.array([p.merged for p in pairs])
        return gaps, merged

    rec = _Recorder()
    cursor = 0
    if save[cursor] == 0:
        rec.add(0.0, *snapshot_arrays())
        cursor += 1
    limit_states = limit0.copy()
    part_states = part0.copy()
    for k in range(steps):
        t = k * dt
        limit_fields, part_fields = _pair_fields(
            model, limit_states, part_states, flow.snapshot_at(t))
        for i, pair in enumerate(pairs):
            if coupling == "reflection":
                new = couplings.reflection_step(
                    pair, model, limit_fields[i], part_fields[i], dt,
                    cutoff, streams[i], t=t)
            elif coupling == "refined-basic":
                new = couplings.refined_basic_step(
                    pair, model, limit_fields[i], part_fields[i], dt,
                    cutoff, kappa, stable, streams[i], t=t)
            else:
                new = couplings.synchronous_step(
                    pair, model, limit_fields[i], part_fields[i], dt,
                    cutoff, streams[i], stable=stable, t=t)
            pairs[i] = new
            limit_states[i] = new.limit
            part_states[i] = new.particle
        if (k + 1) % 25 == 0 or k + 1 == steps:
            if not (np.all(np.isfinite(limit_states))
                    and np.all(np.isfinite(part_states))):
                raise SimulationFault(
                    f"non-finite coupled state at step {k + 1}")
        if cursor < len(save) and k + 1 == save[cursor]:
            rec.add((k + 1) * dt, *snapshot_arrays())
            cursor += 1
    return rec.finish(*snapshot_arrays())


def _coupled_vector(model, flow, limit0, part0, steps, dt, cutoff, seed,
                    replica, coupling, stable, kappa, save):
    """Vectorized Brownian engine, in lockstep with the per-pair steps.

    Per-pair noise is drawn up front from the same per-pair streams in the
    same order the step functions consume it (dW, dV, dispersion), so both
    engines see identical draws; results agree to rounding order.
    """
    n_pairs, d = limit0.shape
    reflect = coupling == "reflection"
    lanes = (2 if reflect else 1) + (1 if model.has_dispersion else 0)
    root_dt = np.sqrt(dt)
    noise = np.empty((n_pairs, steps, lanes, d))
    for i in range(n_pairs):
        rng = stream(seed, ROLE_PAIR, replica, i)
        noise[i] = root_dt * rng.normal(size=(steps, lanes, d))

    limit_states = limit0.copy()
    part_states = part0.copy()
    merged = np.zeros(n_pairs, dtype=bool)
    pending = np.zeros(n_pairs, dtype=bool)
    root_beta = np.sqrt(model.profile.diffusion)

    def gaps_now():
        return np.linalg.norm(limit_states - part_states, axis=1)

    rec = _Recorder()
    cursor = 0
    if save[cursor] == 0:
        rec.add(0.0, gaps_now(), merged)
        cursor += 1
    for k in range(steps):
        t = k * dt
        limit_fields, part_fields = _pair_fields(
            model, limit_states, part_states, flow.snapshot_at(t))
        new_l = limit_states + (model.drift(limit_states)
                                + limit_fields) * dt
        new_p = part_states + (model.drift(part_states)
                               + part_fields) * dt
        dw = noise[:, k, 0, :]
        if reflect:
            dv = noise[:, k, 1, :]
            diff = limit_states - part_states
            r = np.linalg.norm(diff, axis=1)
            w = couplings.reflection_weight(r, cutoff.epsilon)
            comp = np.sqrt(np.maximum(0.0, 1.0 - w * w))
            unit = np.divide(diff, r[:, None], out=np.zeros_like(diff),
                             where=r[:, None] > 0)
            reflected = dw - 2.0 * unit * np.sum(unit * dw, axis=1,
                                                 keepdims=True)
            active = (~(merged | pending))[:, None]
            wdw = (root_beta * w)[:, None] * dw
            wrf = (root_beta * w)[:, None] * reflected
            cdv = (root_beta * comp)[:, None] * dv
            sync = root_beta * dw
            # two separate additions keep the rounding order identical to
            # the per-pair step functions (adding 0.0 is exact)
            new_l = (new_l + np.where(active, wdw, sync)) \
                + np.where(active, cdv, 0.0)
            new_p = (new_p + np.where(active, wrf, sync)) \
                + np.where(active, cdv, 0.0)
        else:
            new_l = new_l + root_beta * dw
            new_p = new_p + root_beta * dw
        if model.has_dispersion:
            db = noise[:, k, -1, :]
            new_l = new_l + model.dispersion_apply(limit_states, db)
            new_p = new_p + model.dispersion_apply(part_states, db)
        limit_states, part_states = new_l, new_p
        gaps = gaps_now()
        below = gaps < cutoff.merge_radius
        was_pending = pending.copy()
        merged = merged | (was_pending & below)
        pending = ~merged & ~was_pending & below
        if (k + 1) % 25 == 0 or k + 1 == steps:
            if not np.all(np.isfinite(gaps)):
                raise SimulationFault(
                    f"non-finite coupled state at step {k + 1}")
        if cursor < len(save) and k + 1 == save[cursor]:
            rec.add((k + 1) * dt, gaps, merged)
            cursor += 1
    return rec.finish(gaps_now(), merged)
