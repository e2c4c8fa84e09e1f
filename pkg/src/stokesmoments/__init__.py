"""Obstacle reconstruction for planar Stokes flow from boundary measurements.

Forward: biharmonic single-layer boundary integrals synthesize the measured
densities.  Inverse: the measurements give the complex moments of the
obstacles, which feed either Bergman-polynomial level sets or a Prony fit
followed by partial balayage.
"""

from .balayage import balayage, potential_U, solve_obstacle_problem
from .bem import apply_noise, forward_measurements, MeasurementSet
from .bergman import bergman_coeffs, theta_contours, theta_eval
from .geometry import ParamCurve, Scenario, circle, curve_eval, discretize, unit_disk_scenario
from .grid import GridSpec
from .kernel import KernelConstants
from .moments import MomentTable, moment_matrix, oracle_moments
from .prony import PronySolution, prony_solve

__version__ = "0.1.0"

__all__ = [
    "balayage", "potential_U", "solve_obstacle_problem",
    "apply_noise", "forward_measurements", "MeasurementSet",
    "bergman_coeffs", "theta_contours", "theta_eval",
    "ParamCurve", "Scenario", "circle", "curve_eval", "discretize", "unit_disk_scenario",
    "GridSpec", "KernelConstants",
    "MomentTable", "moment_matrix", "oracle_moments",
    "PronySolution", "prony_solve",
]
