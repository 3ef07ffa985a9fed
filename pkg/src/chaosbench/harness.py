"""Config-driven experiment runner.

A run takes an ExperimentConfig (schema 1), validates it against the
constants machinery, executes one named scenario, and writes three kinds
of artifact into the output directory:

* report.csv - the canonical table, one row per (quantity, parameter
  point) with estimate, Monte Carlo stderr, recomputed theory bound and a
  pass flag where a criterion applies.  Byte-identical across reruns with
  the same config and seed, and across worker counts.
* report.json - provenance sidecar: full config, its sha256 digest,
  package version, wall time, scenario summary.  Wall time is the one
  field that may differ between reruns.
* one or more SVG figures with deterministic bytes.

Scenario fan-out uses fixed-index work units over per-unit streams and an
index-ordered reduction, so the emitted numbers never depend on
scheduling.  CHAOSBENCH_THREADS caps the worker pool.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import constants, metrics, plots
from ._version import __version__
from .couplings import CutoffSpec
from .model import DissipativityProfile, make_model
from .noise import (StableSpec, jump_rate, small_jump_std, stable_increment)
from .particles import (evolve_positions, make_initial,
                        simulate_coupled_systems, solve_limit_flow)
from .seeding import (ROLE_COMPARATOR, ROLE_ENSEMBLE, ROLE_FLOW,
                      ROLE_SAMPLER, stream)

__all__ = [
    "ExperimentConfig", "ExperimentReport", "ConfigError", "Row",
    "available_scenarios", "default_params", "validate", "run",
]


class ConfigError(ValueError):
    """Raised by run() with every validation diagnostic at once."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("invalid config:\n  " + "\n  ".join(self.diagnostics))


@dataclass
class ExperimentConfig:
    scenario: str
    seed: Optional[int] = None
    workers: int = 1
    half_tv: bool = False
    outdir: str = "."
    params: dict = field(default_factory=dict)
    schema: int = 1

    @classmethod
    def from_dict(cls, data):
        known = {"scenario", "seed", "workers", "half_tv", "outdir",
                 "params", "schema"}
        unknown = set(data) - known
        if unknown:
            raise ConfigError([f"unknown config field '{k}'"
                               for k in sorted(unknown)])
        return cls(scenario=data.get("scenario", ""),
                   seed=data.get("seed"),
                   workers=int(data.get("workers", 1)),
                   half_tv=bool(data.get("half_tv", False)),
                   outdir=str(data.get("outdir", ".")),
                   params=dict(data.get("params", {})),
                   schema=int(data.get("schema", 1)))

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return {"schema": self.schema, "scenario": self.scenario,
                "seed": self.seed, "workers": self.workers,
                "half_tv": self.half_tv, "outdir": self.outdir,
                "params": self.params}

    def digest(self):
        blob = json.dumps(self.to_dict(), sort_keys=True,
                          separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def result_key(self):
        """Digest of the fields that determine the emitted numbers.

        Drops outdir and workers, which affect where and how fast results
        are produced but never what they are; used as the SVG hash salt so
        figure bytes are invariant across worker counts and directories.
        """
        data = self.to_dict()
        del data["outdir"], data["workers"]
        blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def merged_params(self):
        out = dict(default_params(self.scenario))
        out.update(self.params)
        return out


@dataclass
class Row:
    scenario: str
    quantity: str
    parameter: object = None
    estimate: Optional[float] = None
    mc_stderr: Optional[float] = None
    theory_bound: Optional[float] = None
    passed: Optional[bool] = None


@dataclass
class ExperimentReport:
    rows: list
    summary: dict
    csv_path: str
    json_path: str
    figure_paths: list


_COLUMNS = ("scenario", "quantity", "parameter", "estimate", "mc_stderr",
            "theory_bound", "passed")


def _cell(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % float(value)
    return str(value)


def _write_csv(path, rows):
    lines = [",".join(_COLUMNS)]
    for r in rows:
        lines.append(",".join(_cell(getattr(r, c)) for c in _COLUMNS))
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _pool_size(requested, count):
    cap = os.environ.get("CHAOSBENCH_THREADS")
    size = max(1, int(requested))
    if cap:
        size = min(size, max(1, int(cap)))
    return min(size, max(1, count))


def _map_indexed(fn, count, workers):
    """Order-fixed map over range(count); results never depend on timing."""
    size = _pool_size(workers, count)
    if size <= 1:
        return [fn(i) for i in range(count)]
    out = [None] * count
    with ThreadPoolExecutor(max_workers=size) as pool:
        futures = {pool.submit(fn, i): i for i in range(count)}
        for fut in as_completed(futures):
            out[futures[fut]] = fut.result()
    return out


# --- scenario parameter catalogs ---------------------------------------------

_DEFAULTS = {
    "constants_report": dict(
        dim=1, drift=["linear", {"slope": 1.0}],
        interaction=["curie-weiss", {"strength": 0.1}],
        dispersion=["zero", {}], profile=None, kappa=None, eta=0.5),
    "lln_rate": dict(
        tail_index=1.7, scale=1.0,
        sizes=[64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384],
        reps=400),
    "ou_exact": dict(
        n=100000, dt=1e-3, t_final=1.0, slope=1.0, diffusion=1.0, bins=64),
    "brownian_contraction": dict(
        slope=1.0, strength=0.1, diffusion=1.0, n_pairs=256, replicas=8,
        dt=2e-3, t_final=8.0, epsilon=0.25, merge_radius=0.0625,
        flow_size=4096, flow_dt=5e-3, picard=3,
        times=[0.5, 1.0, 2.0, 4.0]),
    "stable_contraction": dict(
        slope=1.0, strength=0.02, alpha=1.5, radius=0.02, kappa=0.02,
        eta=0.5, trunc=0.002, n_pairs=256, replicas=4, dt=5e-3,
        t_final=8.0, epsilon=0.01, merge_radius=0.0025, flow_size=4096,
        flow_dt=5e-3, picard=3, times=[0.5, 1.0, 2.0, 4.0]),
    "tv_n_scaling": dict(
        slope=1.0, strength=0.1, tail_delta=0.9, tail_index=1.95,
        sizes=[64, 128, 256, 512, 1024, 2048, 4096], replicas=4,
        dt=5e-3, t_final=1.0, bins=48, data_range=[-12.0, 12.0],
        flow_factor=16, picard=3),
    "coupling_bias_study": dict(
        alpha=1.5, truncs=[0.04, 0.01, 0.0025], t_final=0.1,
        n=50000, ref_n=200000, modes=["gaussian", "drop"]),
}


def available_scenarios():
    return tuple(sorted(_DEFAULTS))


def default_params(scenario):
    if scenario not in _DEFAULTS:
        raise KeyError(f"unknown scenario '{scenario}'")
    return {k: (dict(v) if isinstance(v, dict) else
                list(v) if isinstance(v, list) else v)
            for k, v in _DEFAULTS[scenario].items()}


# --- validation --------------------------------------------------------------

def _check_positive(p, keys, diags):
    for key in keys:
        val = p.get(key)
        if val is None or not np.isscalar(val) or not float(val) > 0:
            diags.append(f"parameter '{key}' must be a positive number, "
                         f"got {val!r}")


def _contraction_model(p, stable):
    if stable:
        profile = DissipativityProfile(
            expansion=0.0, contraction=float(p["slope"]),
            radius=float(p["radius"]), alpha=float(p["alpha"]))
    else:
        profile = None
    return make_model(1, ("linear", {"slope": float(p["slope"])}),
                      ("curie-weiss", {"strength": float(p["strength"])}),
                      profile=profile)


def validate(config):
    """All diagnostics for a config; empty list means runnable."""
    diags = []
    if config.schema != 1:
        diags.append(f"unsupported schema {config.schema}; expected 1")
    if config.scenario not in _DEFAULTS:
        diags.append(f"unknown scenario '{config.scenario}'; choose from "
                     f"{', '.join(available_scenarios())}")
        return diags
    if config.seed is None or (not isinstance(config.seed, (int, np.integer))
                               or config.seed < 0):
        diags.append("seed is mandatory and must be a nonnegative integer")
    if config.workers < 1:
        diags.append("workers must be >= 1")
    p = config.merged_params()
    unknown = set(config.params) - set(_DEFAULTS[config.scenario])
    for key in sorted(unknown):
        diags.append(f"unknown parameter '{key}' for scenario "
                     f"'{config.scenario}'")
    s = config.scenario
    if s == "lln_rate":
        _check_positive(p, ["tail_index", "scale"], diags)
        if np.isscalar(p.get("tail_index")) and float(p["tail_index"]) <= 1:
            diags.append("tail_index must exceed 1 so the mean exists")
        if len(p.get("sizes", [])) < 4:
            diags.append("need at least four sizes for the rate fit")
        if not p.get("reps", 0) >= 1:
            diags.append("reps must be >= 1")
    elif s == "ou_exact":
        _check_positive(p, ["n", "dt", "t_final", "diffusion"], diags)
    elif s == "brownian_contraction":
        _check_positive(p, ["slope", "strength", "n_pairs", "replicas",
                            "dt", "t_final", "epsilon", "merge_radius",
                            "flow_size", "flow_dt"], diags)
        if not diags:
            if not p["merge_radius"] < p["epsilon"] / 2:
                diags.append("merge_radius must be below epsilon / 2")
            rc = constants.rate_constants(_contraction_model(p, False))
            if not rc.brownian_admissible:
                diags.append(
                    "interaction strength is not admissible for the "
                    f"declared profile: margin {rc.brownian_margin:.6g} "
                    f"<= 0 against threshold {rc.brownian_threshold:.6g}")
    elif s == "stable_contraction":
        _check_positive(p, ["slope", "strength", "radius", "kappa", "trunc",
                            "n_pairs", "replicas", "dt", "t_final",
                            "epsilon", "merge_radius", "flow_size",
                            "flow_dt"], diags)
        alpha = p.get("alpha")
        if not (np.isscalar(alpha) and 1.0 < float(alpha) < 2.0):
            diags.append("stable scenario needs a stability index alpha "
                         f"strictly between 1 and 2, got {alpha!r}")
        if not diags:
            if not p["trunc"] < p["kappa"]:
                diags.append("jump resolution cutoff trunc must be below "
                             "the cap radius kappa")
            if not p["merge_radius"] < p["epsilon"] / 2:
                diags.append("merge_radius must be below epsilon / 2")
            rc = constants.rate_constants(
                _contraction_model(p, True), kappa=float(p["kappa"]),
                eta=float(p["eta"]), search_eta=False)
            if not rc.stable_admissible:
                diags.append(
                    "interaction strength is not admissible for the "
                    f"declared profile: margin {rc.stable_margin:.6g} "
                    f"<= 0 against threshold {rc.stable_threshold:.6g}")
    elif s == "tv_n_scaling":
        _check_positive(p, ["slope", "strength", "dt", "t_final",
                            "replicas", "flow_factor"], diags)
        if len(p.get("sizes", [])) < 4:
            diags.append("need at least four sizes for the rate fit")
        delta = p.get("tail_delta")
        if not (np.isscalar(delta) and 0 < float(delta) < 1):
            diags.append("tail_delta must lie in (0, 1)")
        if np.isscalar(p.get("tail_index")) and np.isscalar(delta) \
                and not float(p["tail_index"]) > 1 + float(delta):
            diags.append("tail_index must exceed 1 + tail_delta so the "
                         "required moment is finite")
    elif s == "coupling_bias_study":
        alpha = p.get("alpha")
        if not (np.isscalar(alpha) and 1.0 < float(alpha) < 2.0):
            diags.append("bias study needs a stability index alpha "
                         f"strictly between 1 and 2, got {alpha!r}")
        _check_positive(p, ["t_final", "n", "ref_n"], diags)
        if not p.get("truncs"):
            diags.append("truncs must be a nonempty list of positive radii")
        for mode in p.get("modes", []):
            if mode not in ("gaussian", "drop"):
                diags.append(f"unknown small-jump mode '{mode}'")
    elif s == "constants_report":
        try:
            profile = None if p.get("profile") is None \
                else DissipativityProfile(**p["profile"])
            make_model(p["dim"], tuple(p["drift"]),
                       tuple(p["interaction"]), tuple(p["dispersion"]),
                       profile=profile)
        except (TypeError, ValueError, KeyError) as exc:
            diags.append(f"bad model parameters: {exc}")
    return diags


# --- scenarios ---------------------------------------------------------------

def _tv_scale(config):
    return 0.5 if config.half_tv else 1.0


def _scenario_constants_report(config):
    p = config.merged_params()
    profile = None if p["profile"] is None \
        else DissipativityProfile(**p["profile"])
    model = make_model(p["dim"], tuple(p["drift"]), tuple(p["interaction"]),
                       tuple(p["dispersion"]), profile=profile)
    stable = model.profile.alpha < 2.0
    rc = constants.rate_constants(model, kappa=p["kappa"], eta=p["eta"],
                                  search_eta=stable)
    s = config.scenario
    rows = [Row(s, "slope_at_zero", None, rc.slope_at_zero)]
    if stable:
        rows += [
            Row(s, "levy_constant", None, rc.levy),
            Row(s, "overlap_lower_constant", None, rc.overlap_constant),
            Row(s, "tail_weight", None, rc.tail),
            Row(s, "stable_slope_at_zero", None, rc.stable_slope_at_zero),
            Row(s, "contraction_rate", rc.eta, rc.stable_rate,
                theory_bound=0.0, passed=rc.stable_admissible),
            Row(s, "admissibility_margin", rc.eta, rc.stable_margin,
                theory_bound=rc.stable_threshold,
                passed=rc.stable_admissible),
            Row(s, "best_eta", None, rc.best_eta),
            Row(s, "best_eta_rate", None, rc.best_eta_rate),
            Row(s, "prefactor", None, rc.prefactor),
        ]
    else:
        rows += [
            Row(s, "contraction_rate", None, rc.brownian_rate,
                theory_bound=0.0, passed=rc.brownian_admissible),
            Row(s, "admissibility_margin", None, rc.brownian_margin,
                theory_bound=rc.brownian_threshold,
                passed=rc.brownian_admissible),
            Row(s, "prefactor", None, rc.prefactor),
        ]

    prof = model.profile
    top = max(3.0, 3.0 * prof.radius) if prof.radius > 0 else 3.0
    grid = np.linspace(0.0, top, 160)
    if stable:
        slopes = np.array([constants.stable_transform_slope(
            prof, rc.kappa, rc.eta, model.dim, r) for r in grid])
        label = "concave transform slope (jump machinery)"
    else:
        slopes = np.array([constants.transform_slope(
            prof, model.dispersion_bound, r) for r in grid])
        label = "concave transform slope (diffusive machinery)"
    fig = plots.curve_figure(grid, {label: slopes}, ylabel="slope")
    return rows, rc.as_dict(), [("transform", fig)]


def _scenario_lln_rate(config):
    p = config.merged_params()
    idx, scale, reps = float(p["tail_index"]), float(p["scale"]), \
        int(p["reps"])
    sizes = [int(n) for n in p["sizes"]]
    true_mean = scale * idx / (idx - 1.0)

    def unit(i):
        rng = stream(config.seed, ROLE_SAMPLER, i)
        draws = scale * rng.uniform(size=(reps, sizes[i])) ** (-1.0 / idx)
        errs = np.abs(draws.mean(axis=1) - true_mean)
        return float(errs.mean()), float(errs.std(ddof=1) / np.sqrt(reps))

    results = _map_indexed(unit, len(sizes), config.workers)
    estimates = [r[0] for r in results]
    stderrs = [r[1] for r in results]
    fit = metrics.fit_rate(sizes, estimates)
    gate = -1.0 / 3.0 + 0.08
    theory_slope = -(idx - 1.0) / idx

    s = config.scenario
    rows = [Row(s, "mean_abs_error", n, est, se)
            for n, est, se in zip(sizes, estimates, stderrs)]
    rows.append(Row(s, "fitted_slope", None, fit.slope, fit.stderr,
                    theory_bound=gate, passed=fit.slope <= gate))
    summary = {"fitted_slope": fit.slope, "slope_stderr": fit.stderr,
               "gate": gate, "theory_slope": theory_slope,
               "true_mean": true_mean}
    fig = plots.power_figure(sizes, estimates, fit, stderrs,
                             ylabel="mean absolute error",
                             ref_slope=theory_slope)
    return rows, summary, [("rate", fig)]


def _scenario_ou_exact(config):
    p = config.merged_params()
    n, dt, t_final = int(p["n"]), float(p["dt"]), float(p["t_final"])
    slope, beta = float(p["slope"]), float(p["diffusion"])
    model = make_model(1, ("linear", {"slope": slope}),
                       profile=DissipativityProfile(0.0, slope, 0.0,
                                                    diffusion=beta))
    x0 = np.zeros((n, 1))
    rng = stream(config.seed, ROLE_ENSEMBLE, 0)
    _, snaps = evolve_positions(x0, model, t_final, dt, rng)
    sample = snaps[-1][:, 0]

    var_exact = constants.linear_model_variance(slope, beta, t_final)
    sd = np.sqrt(var_exact)
    mean_se = sample.std(ddof=1) / np.sqrt(n)
    var_se = var_exact * np.sqrt(2.0 / (n - 1))
    cmp_rng = stream(config.seed, ROLE_COMPARATOR, 0)
    exact = sd * cmp_rng.normal(size=(n, 1))
    scale = _tv_scale(config)
    tv = scale * metrics.tv_histogram(sample[:, None], exact,
                                      bins=int(p["bins"]))

    s = config.scenario
    mean_est = float(sample.mean())
    var_est = float(sample.var(ddof=1))
    rows = [
        Row(s, "mean", t_final, mean_est, mean_se, theory_bound=0.0,
            passed=abs(mean_est) <= 3 * mean_se),
        Row(s, "variance", t_final, var_est, var_se,
            theory_bound=var_exact,
            passed=abs(var_est - var_exact) <= 3 * var_se),
        Row(s, "tv_vs_exact", t_final, tv, None,
            theory_bound=scale * 0.05, passed=tv < scale * 0.05),
    ]
    summary = {"mean": mean_est, "variance": var_est,
               "variance_exact": var_exact, "tv": tv,
               "tv_convention": "half" if config.half_tv else "diameter-2"}

    def density(x):
        return np.exp(-x * x / (2 * var_exact)) / np.sqrt(
            2 * np.pi * var_exact)

    fig = plots.histogram_figure(sample, density, bins=int(p["bins"]),
                                 data_range=(-4 * sd, 4 * sd))
    return rows, summary, [("terminal", fig)]


def _contraction_rows(config, p, rc, lam, prefactor, coupling, stable_spec,
                      kappa):
    model = _contraction_model(p, stable_spec is not None)
    init = make_initial("gaussian")
    flow = solve_limit_flow(
        model, init, int(p["flow_size"]), float(p["t_final"]),
        float(p["flow_dt"]), config.seed, iterations=int(p["picard"]),
        stable=stable_spec, path=(ROLE_FLOW,)).flow
    cutoff = CutoffSpec(float(p["epsilon"]), float(p["merge_radius"]))
    times = [float(t) for t in p["times"]]
    save = [0.0] + times + [float(p["t_final"])]

    def unit(rep):
        run = simulate_coupled_systems(
            model, flow, int(p["n_pairs"]), float(p["t_final"]),
            float(p["dt"]), cutoff, config.seed, replica=rep,
            coupling=coupling, initial=init, stable=stable_spec,
            kappa=kappa, save_times=save)
        return run.times, run.mean_gap, run.merge_fraction

    results = _map_indexed(unit, int(p["replicas"]), config.workers)
    grid = results[0][0]
    gaps = np.array([r[1] for r in results])
    merged = np.array([r[2] for r in results])
    mean_gap = gaps.mean(axis=0)
    stderr = gaps.std(axis=0, ddof=1) / np.sqrt(gaps.shape[0])
    mean_merge = merged.mean(axis=0)

    floor = float(mean_gap[-1])
    bound = prefactor * np.exp(-lam * grid) * mean_gap[0] + floor
    pre_plateau = [i for i in range(1, len(grid) - 1)
                   if mean_gap[i] > 10.0 * floor]
    if len(pre_plateau) >= 2:
        sl = np.polyfit(grid[pre_plateau],
                        np.log(mean_gap[pre_plateau]), 1)[0]
        decay = float(-sl)
    else:
        decay = float("nan")

    s = config.scenario
    rows = []
    for i, t in enumerate(grid):
        checked = 0 < i < len(grid) - 1
        rows.append(Row(
            s, "mean_pair_distance", t, float(mean_gap[i]),
            float(stderr[i]),
            theory_bound=float(bound[i]) if checked else None,
            passed=(mean_gap[i] <= bound[i] + 2 * stderr[i])
            if checked else None))
    for i, t in enumerate(grid):
        rows.append(Row(s, "merge_fraction", t, float(mean_merge[i])))
    rows.append(Row(s, "floor", float(grid[-1]), floor))
    rows.append(Row(s, "decay_rate", None, decay,
                    theory_bound=0.5 * lam,
                    passed=bool(decay >= 0.5 * lam)))
    rows.append(Row(s, "contraction_rate", None, lam))
    rows.append(Row(s, "prefactor", None, prefactor))

    summary = {"lambda": lam, "prefactor": prefactor, "floor": floor,
               "decay_rate": decay, "times": list(grid),
               "mean_gap": [float(g) for g in mean_gap],
               "merge_fraction": [float(m) for m in mean_merge],
               "constants": rc.as_dict()}
    fig = plots.decay_figure(grid, mean_gap, bound, stderr)
    return rows, summary, [("contraction", fig)]


def _scenario_brownian_contraction(config):
    p = config.merged_params()
    rc = constants.rate_constants(_contraction_model(p, False))
    return _contraction_rows(config, p, rc, rc.brownian_rate, rc.prefactor,
                             "reflection", None, None)


def _scenario_stable_contraction(config):
    p = config.merged_params()
    rc = constants.rate_constants(_contraction_model(p, True),
                                  kappa=float(p["kappa"]),
                                  eta=float(p["eta"]), search_eta=False)
    spec = StableSpec(float(p["alpha"]), 1, float(p["trunc"]))
    return _contraction_rows(config, p, rc, rc.stable_rate, rc.prefactor,
                             "refined-basic", spec, float(p["kappa"]))


def _scenario_tv_n_scaling(config):
    p = config.merged_params()
    model = make_model(1, ("linear", {"slope": float(p["slope"])}),
                       ("curie-weiss", {"strength": float(p["strength"])}))
    init = make_initial("pareto", {"index": float(p["tail_index"])})
    sizes = [int(n) for n in p["sizes"]]
    replicas = int(p["replicas"])
    dt, t_final = float(p["dt"]), float(p["t_final"])
    bins = int(p["bins"])
    rng_range = tuple(float(v) for v in p["data_range"])
    scale = _tv_scale(config)

    def unit(i):
        n = sizes[i]
        flow = solve_limit_flow(
            model, init, int(p["flow_factor"]) * n, t_final, dt,
            config.seed, iterations=int(p["picard"]),
            path=(ROLE_FLOW, i)).flow
        limit_sample = flow.snapshots[-1]
        block_rng = stream(config.seed, ROLE_ENSEMBLE, i)
        x0 = init.sample(replicas * n, 1, block_rng).reshape(replicas, n, 1)
        _, snaps = evolve_positions(x0, model, t_final, dt, block_rng)
        final = snaps[-1]
        pooled = final.reshape(-1, 1)
        tv = scale * metrics.tv_histogram(pooled, limit_sample, bins=bins,
                                          data_range=rng_range)
        per_rep = [scale * metrics.tv_histogram(final[r], limit_sample,
                                                bins=bins,
                                                data_range=rng_range)
                   for r in range(replicas)]
        return tv, float(np.std(per_rep, ddof=1) / np.sqrt(replicas))

    results = _map_indexed(unit, len(sizes), config.workers)
    tvs = [r[0] for r in results]
    stderrs = [r[1] for r in results]
    fit = metrics.fit_rate(sizes, tvs)
    gate = -0.25
    inversions = sum(
        1 for i in range(len(sizes) - 1)
        if tvs[i + 1] > tvs[i] + 2 * (stderrs[i] + stderrs[i + 1]))

    s = config.scenario
    rows = [Row(s, "tv_one_marginal", n, tv, se)
            for n, tv, se in zip(sizes, tvs, stderrs)]
    rows.append(Row(s, "fitted_slope", None, fit.slope, fit.stderr,
                    theory_bound=gate, passed=fit.slope <= gate))
    rows.append(Row(s, "inversions", None, float(inversions),
                    theory_bound=1.0, passed=inversions <= 1))
    summary = {"fitted_slope": fit.slope, "slope_stderr": fit.stderr,
               "inversions": inversions, "sizes": sizes, "tv": tvs,
               "tv_convention": "half" if config.half_tv else "diameter-2"}
    fig = plots.power_figure(sizes, tvs, fit, stderrs,
                             ylabel="TV(1-marginal, limit)",
                             ref_slope=gate)
    return rows, summary, [("scaling", fig)]


def _compound_terminal(spec, t_final, n, rng, mode):
    """Terminal positions of n jump-resolved stable paths at time t."""
    counts = rng.poisson(jump_rate(spec) * t_final, size=n)
    total = int(counts.sum())
    radii = spec.trunc * rng.uniform(size=total) ** (-1.0 / spec.alpha)
    signs = rng.integers(0, 2, size=total) * 2 - 1
    jumps = radii * signs
    offsets = np.concatenate(([0], np.cumsum(counts)[:-1]))
    sums = np.add.reduceat(np.concatenate((jumps, [0.0])), offsets)
    sums[counts == 0] = 0.0
    if mode == "gaussian":
        sums = sums + small_jump_std(spec, t_final) * rng.normal(size=n)
    return sums


def _scenario_coupling_bias_study(config):
    p = config.merged_params()
    alpha, t_final = float(p["alpha"]), float(p["t_final"])
    n, ref_n = int(p["n"]), int(p["ref_n"])
    truncs = [float(v) for v in p["truncs"]]
    modes = list(p["modes"])

    ref_rng = stream(config.seed, ROLE_COMPARATOR, 0)
    reference = stable_increment(alpha, 1, t_final, ref_rng, n=ref_n)[:, 0]

    units = [(trunc, mode) for trunc in truncs for mode in modes]

    def unit(i):
        trunc, mode = units[i]
        spec = StableSpec(alpha, 1, trunc, small_jump_mode=mode)
        rng = stream(config.seed, ROLE_SAMPLER, i)
        approx = _compound_terminal(spec, t_final, n, rng, mode)
        return metrics.w1_sorted(approx[:, None], reference[:, None])

    biases = _map_indexed(unit, len(units), config.workers)
    s = config.scenario
    rows = [Row(s, f"w1_bias_{mode}", trunc, bias)
            for (trunc, mode), bias in zip(units, biases)]
    by_mode = {mode: [b for (t, m), b in zip(units, biases) if m == mode]
               for mode in modes}
    summary = {"truncs": truncs, "bias": by_mode,
               "gaussian_beats_drop": bool(
                   all(g <= d for g, d in zip(by_mode.get("gaussian", []),
                                              by_mode.get("drop", []))))}
    fig = plots.power_figure(
        truncs, by_mode[modes[0]], None, xlabel="jump resolution cutoff",
        ylabel="W1 distance to exact law")
    for mode in modes[1:]:
        fig.axes[0].loglog(truncs, by_mode[mode], "s--",
                           label=f"mode {mode}")
        fig.axes[0].legend()
    return rows, summary, [("bias", fig)]


_SCENARIOS = {
    "constants_report": _scenario_constants_report,
    "lln_rate": _scenario_lln_rate,
    "ou_exact": _scenario_ou_exact,
    "brownian_contraction": _scenario_brownian_contraction,
    "stable_contraction": _scenario_stable_contraction,
    "tv_n_scaling": _scenario_tv_n_scaling,
    "coupling_bias_study": _scenario_coupling_bias_study,
}


def run(config, outdir=None):
    """Validate, execute and persist one experiment; returns the report."""
    diags = validate(config)
    if diags:
        raise ConfigError(diags)
    outdir = outdir or config.outdir
    os.makedirs(outdir, exist_ok=True)
    started = time.monotonic()
    rows, summary, figures = _SCENARIOS[config.scenario](config)
    wall = time.monotonic() - started

    digest = config.digest()
    csv_path = os.path.join(outdir, "report.csv")
    json_path = os.path.join(outdir, "report.json")
    _write_csv(csv_path, rows)
    salt = config.result_key()
    figure_paths = []
    for stem, fig in figures:
        path = os.path.join(outdir, f"{config.scenario}_{stem}.svg")
        figure_paths.append(plots.save_svg(fig, path, salt))
    payload = {
        "schema": 1,
        "scenario": config.scenario,
        "config": config.to_dict(),
        "config_sha256": digest,
        "version": __version__,
        "wall_time_s": wall,
        "summary": summary,
        "artifacts": [os.path.basename(csv_path)]
        + [os.path.basename(f) for f in figure_paths],
    }
    with open(json_path, "w", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return ExperimentReport(rows, summary, csv_path, json_path,
                            figure_paths)
