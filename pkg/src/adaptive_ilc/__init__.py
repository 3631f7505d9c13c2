"""Optimization-based adaptive iterative learning control.

Simulation library and experiment harness for data-driven ILC of unknown
nonlinear time-varying discrete-time plants over a finite horizon, plus
executable convergence diagnostics.
"""

from .controller import ErrorHistory, LearningParams, j_index, update_input
from .diagnostics import (DiagnosticsReport, LiftedErrorMatrix, SelectionCheck,
                          analyze_run, bound_formulas, check_selection,
                          contraction_gaps, lifted_matrix, theta_bound_recursion,
                          window_product_norm, write_diagnostics_csv)
from .engine import (RunConfig, RunHistory, RunRecord, make_reference,
                     reference_sec6, register_reference, run, summary_line,
                     write_outputs)
from .errors import (AdaptiveIlcError, ConfigError, DimensionMismatch,
                     InvalidParams, NonFiniteOutput)
from .estimator import (EstimateTable, apriori_bound, export_estimates_csv,
                        h_index, q_matrix, update_estimates)
from .linearization import (SecantLinearization, refine_secant, secant_diagonal,
                            secant_jacobian, verify_linearization)
from .plant import (PlantModel, TrialRecord, UncertaintyModel, benchmark_step,
                    estimate_partial_bounds, make_plant, register_plant,
                    sample_uncertainty, simulate_batch, simulate_trial)

__version__ = "0.1.0"

__all__ = [
    "AdaptiveIlcError", "ConfigError", "DiagnosticsReport", "DimensionMismatch",
    "ErrorHistory", "EstimateTable", "InvalidParams", "LearningParams",
    "LiftedErrorMatrix", "NonFiniteOutput", "PlantModel", "RunConfig",
    "RunHistory", "RunRecord", "SecantLinearization", "SelectionCheck",
    "TrialRecord", "UncertaintyModel", "analyze_run", "apriori_bound",
    "benchmark_step", "bound_formulas", "check_selection", "contraction_gaps",
    "estimate_partial_bounds", "export_estimates_csv", "h_index", "j_index",
    "lifted_matrix", "make_plant", "make_reference", "q_matrix",
    "reference_sec6", "refine_secant", "register_plant", "register_reference",
    "run", "sample_uncertainty", "secant_diagonal", "secant_jacobian",
    "simulate_batch", "simulate_trial", "summary_line", "theta_bound_recursion",
    "update_estimates",
    "update_input", "verify_linearization", "window_product_norm",
    "write_diagnostics_csv", "write_outputs",
]
