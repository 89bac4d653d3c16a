"""Outermost-MOTS finder for spherically symmetric initial data.

The solver follows the regularized null-mean-curvature-flow route: it
solves the capillarity-regularized equation by continuation, lets the
regularization go to zero, reads the MOTS off the blow-up set and extracts
the arrival-time function outside it.
"""

from .geometry import find_mots_radius_bruteforce, sphere_geometry, theta_plus
from .grid import Field, RadialGrid
from .initial_data import (
    DataFamily,
    InitialDataSet,
    InvalidDataError,
    apply_interior_modification,
    eigen_bound,
    epsilon_gate,
    make_dataset,
)
from .levelset_oracle import arrival_oracle, extract_level_set, flow_spheres
from .pde_core import OperatorParams
from .solver import (
    ContinuationFailure,
    Schedules,
    epsilon_limit,
    kappa_continuation,
    solve_capillarity,
)

__all__ = [
    "ContinuationFailure", "DataFamily", "Field", "InitialDataSet", "InvalidDataError",
    "OperatorParams", "RadialGrid", "Schedules", "apply_interior_modification",
    "arrival_oracle", "eigen_bound", "epsilon_gate", "epsilon_limit", "extract_level_set",
    "find_mots_radius_bruteforce", "flow_spheres", "kappa_continuation", "make_dataset",
    "solve_capillarity", "sphere_geometry", "theta_plus",
]
