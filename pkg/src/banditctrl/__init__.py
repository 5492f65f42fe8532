"""Online control of linear dynamical systems from scalar cost feedback.

The package splits into a bandit optimizer core (geometry, bco), a plant
layer (lds), controllers (policies), identification of unknown dynamics
(sysid), and a benchmarking harness with a CLI (harness, presets, cli).
"""

from .bco import (BanditMemoryOptimizer, BcoConfig, BcoTrace, gradient_estimate,
                  learning_rate, perturbation_radius, regret_vs_fixed_point,
                  run_bco, sample_unit_sphere)
from .errors import ConfigError, ControllabilityError, SolverError, StateError
from .geometry import (Box, DecisionSet, EuclideanBall, MinkowskiSubset,
                       OperatorNormProduct, clip_operator_norm)
from .harness import (ExperimentConfig, HindsightOracle, RunRecord,
                      best_dac_in_hindsight, config_from_dict,
                      counterfactual_dac_cost, grid_best_dac, horizon_ladder,
                      regret_report, run_experiment, simulate, write_outputs)
from .lds import (CostFunction, DisturbanceGenerator, LinearSystem, Trajectory,
                  step)
from .policies import (BanditPerturbationController, DacClassParams, DacPolicy,
                       DisturbanceHistory, GradientPerturbationController,
                       LqrController, LqrSolution, dac_action,
                       project_dac_class, snapshot_to_json, solve_dare,
                       truncated_counterfactual)
from .sysid import (Algorithm3Record, IdentifiedSystem, MomentEstimates,
                    SysIdConfig, default_budget, estimate_disturbances,
                    estimate_moments, exact_moments, explore, identify,
                    least_squares_id, recover, run_algorithm3)

__version__ = "0.1.0"

__all__ = [
    "BanditMemoryOptimizer", "BcoConfig", "BcoTrace", "gradient_estimate",
    "learning_rate", "perturbation_radius", "regret_vs_fixed_point", "run_bco",
    "sample_unit_sphere", "ConfigError", "ControllabilityError", "SolverError",
    "StateError", "Box", "DecisionSet", "EuclideanBall", "MinkowskiSubset",
    "OperatorNormProduct", "clip_operator_norm", "ExperimentConfig",
    "HindsightOracle", "RunRecord", "best_dac_in_hindsight", "config_from_dict",
    "counterfactual_dac_cost", "grid_best_dac", "horizon_ladder",
    "regret_report", "run_experiment", "simulate", "write_outputs",
    "CostFunction", "DisturbanceGenerator", "LinearSystem", "Trajectory",
    "step", "BanditPerturbationController", "DacClassParams", "DacPolicy",
    "DisturbanceHistory", "GradientPerturbationController", "LqrController",
    "LqrSolution", "dac_action", "project_dac_class", "snapshot_to_json",
    "solve_dare", "truncated_counterfactual", "Algorithm3Record",
    "IdentifiedSystem", "MomentEstimates", "SysIdConfig", "default_budget",
    "estimate_disturbances", "estimate_moments", "exact_moments", "explore",
    "identify", "least_squares_id", "recover", "run_algorithm3",
]
