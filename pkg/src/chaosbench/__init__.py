"""Mean-field interacting particle systems: simulation, couplings and
quantitative convergence experiments.

The package simulates N-particle mean-field systems driven by Brownian or
rotationally invariant heavy-tailed noise, their nonlinear limit flows,
and coupled (limit, particle) pair systems; computes the contraction-rate
machinery certifying exponential convergence; and runs config-driven
experiments producing deterministic CSV/JSON/SVG reports.
"""

from ._version import __version__
from .constants import (Admissibility, RateConstants, best_eta,
                        brownian_admissibility, brownian_contraction_rate,
                        jump_overlap_exact, jump_overlap_lower,
                        levy_constant, linear_model_variance,
                        rate_constants, stable_admissibility,
                        stable_contraction_rate, transform_slope,
                        transform_value)
from .couplings import (CoupledPair, CutoffSpec, cap_vector,
                        reflection_step, reflection_weight,
                        refined_basic_step, synchronous_step)
from .harness import (ConfigError, ExperimentConfig, ExperimentReport,
                      available_scenarios, default_params, run, validate)
from .metrics import (RateFit, fit_rate, mean_abs_error, tv_from_merge,
                      tv_histogram, w1_assignment, w1_blocks, w1_sorted)
from .model import (DissipativityProfile, ModelSpec, audit_model,
                    catalog_names, make_model)
from .noise import (StableSpec, brownian_increment, density_ratio,
                    sample_jumps, stable_increment)
from .particles import (Ensemble, MeasureFlow, SimulationFault,
                        evolve_positions, load_ensemble, make_initial,
                        sample_marginal, save_ensemble,
                        simulate_coupled_systems, solve_limit_flow)
from .seeding import stream

__all__ = [
    "__version__",
    "Admissibility", "RateConstants", "best_eta",
    "brownian_admissibility", "brownian_contraction_rate",
    "jump_overlap_exact", "jump_overlap_lower", "levy_constant",
    "linear_model_variance", "rate_constants", "stable_admissibility",
    "stable_contraction_rate", "transform_slope", "transform_value",
    "CoupledPair", "CutoffSpec", "cap_vector", "reflection_step",
    "reflection_weight", "refined_basic_step", "synchronous_step",
    "ConfigError", "ExperimentConfig", "ExperimentReport",
    "available_scenarios", "default_params", "run", "validate",
    "RateFit", "fit_rate", "mean_abs_error", "tv_from_merge",
    "tv_histogram", "w1_assignment", "w1_blocks", "w1_sorted",
    "DissipativityProfile", "ModelSpec", "audit_model", "catalog_names",
    "make_model",
    "StableSpec", "brownian_increment", "density_ratio", "sample_jumps",
    "stable_increment",
    "Ensemble", "MeasureFlow", "SimulationFault", "evolve_positions",
    "load_ensemble", "make_initial", "sample_marginal", "save_ensemble",
    "simulate_coupled_systems", "solve_limit_flow",
    "stream",
]
