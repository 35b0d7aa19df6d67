"""Desk-scale simulator and solvers for distributed resource allocation
under a coupled average-capacity constraint.

Heterogeneous workers hold private quadratic losses and a box each; a
coordinating server prices the shared capacity through a projected dual
variable.  The package runs the asynchronous stochastic primal-dual
update inside a deterministic discrete-event model (stale gradients and
all), runs its synchronous barrier baseline on the same clock, and
checks both against an independent saddle-point oracle and the
convergence theory's error bound.
"""

from .analysis import (AuxLemmaReport, BoundConstants, SaddlePoint,
                       aux_lemma_check, bound_at_iterate, closed_form_saddle,
                       compute_bound_constants, error_metric,
                       fixed_point_saddle, kkt_residual, saddle_oracle,
                       theorem_bound)
from .bench import (ConfigError, ExperimentConfig, config_from_dict,
                    config_from_toml, run_experiment, scenario_config,
                    summarize)
from .engine import (AssumptionReport, DelayModel, Engine, Schedule,
                     build_schedule, dump_event_log, validate_assumptions)
from .model import (AffineMeanConstraint, ProblemSpec, SmoothnessConstants,
                    compute_constants)
from .solvers import (RunTrace, StepSizeReport, StepSizeRule,
                      check_stepsize_conditions, checkpoint_grid, run_apd,
                      run_sync_pd)

__version__ = "0.1.0"

__all__ = [
    "AffineMeanConstraint", "AssumptionReport", "AuxLemmaReport",
    "BoundConstants", "ConfigError", "DelayModel", "Engine",
    "ExperimentConfig", "ProblemSpec", "RunTrace", "SaddlePoint",
    "Schedule", "SmoothnessConstants", "StepSizeReport", "StepSizeRule",
    "aux_lemma_check", "bound_at_iterate", "build_schedule",
    "check_stepsize_conditions", "checkpoint_grid", "closed_form_saddle",
    "compute_bound_constants", "compute_constants", "config_from_dict",
    "config_from_toml", "dump_event_log", "error_metric",
    "fixed_point_saddle", "kkt_residual", "run_apd", "run_experiment",
    "run_sync_pd", "saddle_oracle", "scenario_config", "summarize",
    "theorem_bound", "validate_assumptions",
]
