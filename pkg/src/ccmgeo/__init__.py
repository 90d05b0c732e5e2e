"""Geodesic control-contraction-metric toolbox.

Computes minimal geodesics of a polynomial Riemannian metric by Chebyshev
pseudospectral optimization and wraps them into a real-time stabilizing
feedback law, with LQR and direct-shooting baselines and a sampled-data
simulator for the stiff benchmark plant.
"""
from .basis import (BasisTable, ChebyshevGrid, basis_table, ccq_weights,
                    cgl_nodes, chebyshev_grid, eval_curve)
from .controller import (CcmController, CcmControlSession, ControlStep,
                         GeodesicConvergenceError, LqrController,
                         ZeroReference, ccm_control, feedback_from_geodesic,
                         lqr_control, lqr_design, riemannian_energy_to_target)
from .geodesic import (GeodesicProblem, GeodesicSolution, ShootingResult,
                       SolverConfig, endpoint_constraints, energy,
                       energy_gradient, energy_hessian, shooting_baseline,
                       solve_adaptive, solve_continuation, solve_geodesic,
                       uniformity_error)
from .metric import (LmiReport, MetricFormatError, PolynomialMetric,
                     SingularMetricError, case_study_metric, dW_dx,
                     energy_integrand, eval_M, eval_W, load_metric,
                     save_metric, validate_lmi)
from .simulator import (SystemModel, Trajectory, case_study_system, simulate,
                        stability_verdict)

__version__ = "0.1.0"

__all__ = [
    "BasisTable", "ChebyshevGrid", "basis_table", "ccq_weights",
    "cgl_nodes", "chebyshev_grid", "eval_curve",
    "PolynomialMetric", "LmiReport", "MetricFormatError",
    "SingularMetricError", "case_study_metric", "dW_dx", "energy_integrand",
    "eval_M", "eval_W", "load_metric", "save_metric", "validate_lmi",
    "GeodesicProblem", "GeodesicSolution", "ShootingResult", "SolverConfig",
    "endpoint_constraints", "energy", "energy_gradient", "energy_hessian",
    "shooting_baseline", "solve_adaptive", "solve_continuation",
    "solve_geodesic",
    "uniformity_error",
    "CcmController", "CcmControlSession", "ControlStep",
    "GeodesicConvergenceError", "LqrController", "ZeroReference",
    "ccm_control", "feedback_from_geodesic", "lqr_control", "lqr_design",
    "riemannian_energy_to_target",
    "SystemModel", "Trajectory", "case_study_system", "simulate",
    "stability_verdict",
]
