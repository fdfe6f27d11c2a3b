"""Optimal time schedules for linear-interpolation transport flows.

A schedule ``tau: [0, 1] -> [0, 1]`` reparameterizes the straight-line flow
``X(x, t) = (1 - tau(t)) x + tau(t) T(x)``.  The package computes the schedule
that minimizes the uniform spatial Lipschitz constant of the induced velocity
field, its smooth L^{2p} relaxations, and the resulting Lipschitz and Euler
error figures on 1D examples.
"""

from .errors import (AdmissibilityError, ConfigError, DomainError, LipschedError,
                     TrivialTransportError)
from .spectral import (SpectralBounds, SpectralField, bounds_from_field, bounds_from_potential,
                       constant_field, field_from_map1d)
from .schedule import (ExponentialSchedule, PiecewiseSchedule, Schedule, TabulatedSchedule,
                       TrivialSchedule, TrivialTransportWarning, optimal_schedule,
                       schedule_from_dict, schedule_from_json, transition_time, trivial_schedule)
from .variational import (LpSolution, k_p, l2_distance, log_k_p, lp_objective, solve_linf_numeric,
                          solve_lp, sup_distance)
from .lipschitz import (LipschitzReport, lambda_of_schedule, lambda_of_schedule_field,
                        lambda_optimal_closed, lambda_trivial_closed, lipschitz_curve, report)
from .flow import (AffineMap, CDFMap, FlowTrajectory, GaussianMixture, TransportMap1D,
                   error_bound, euler_flow, exact_flow, figure3_map, gaussian_map, gmm_map,
                   map_from_dict, velocity)

__version__ = "0.1.0"

__all__ = [
    "AdmissibilityError", "ConfigError", "DomainError", "LipschedError", "TrivialTransportError",
    "SpectralBounds", "SpectralField", "bounds_from_field", "bounds_from_potential",
    "constant_field", "field_from_map1d",
    "Schedule", "TrivialSchedule", "ExponentialSchedule", "PiecewiseSchedule",
    "TabulatedSchedule", "TrivialTransportWarning", "optimal_schedule", "trivial_schedule",
    "transition_time", "schedule_from_dict", "schedule_from_json",
    "LpSolution", "k_p", "log_k_p", "lp_objective", "solve_lp", "solve_linf_numeric",
    "l2_distance", "sup_distance",
    "LipschitzReport", "lambda_of_schedule", "lambda_of_schedule_field",
    "lambda_trivial_closed", "lambda_optimal_closed", "lipschitz_curve", "report",
    "AffineMap", "CDFMap", "FlowTrajectory", "GaussianMixture", "TransportMap1D",
    "error_bound", "euler_flow", "exact_flow", "figure3_map", "gaussian_map", "gmm_map",
    "map_from_dict", "velocity",
]
