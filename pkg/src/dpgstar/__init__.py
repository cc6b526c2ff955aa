"""DPG and DPG* solvers for ultraweak time-harmonic acoustics on the unit square."""

from .acoustics import (
    GOAL_MANUFACTURED,
    GOAL_UNIFORM_PRESSURE,
    NORM_GRAPH,
    NORM_MATH,
    NORM_PURE,
    NORM_SCALED,
    AcousticsConfig,
    PlaneWave,
)
from .errors import convergence_rates, estimate_alpha_h, field_l2_error, graph_norm_error
from .lsq import alpha_sweep, assemble_lsq, solve_lsq
from .mesh import StructuredMesh, build_mesh
from .mixed_core import (
    FactorizationError,
    GramMatrix,
    MixedSystem,
    solve_mixed,
)
from .solver import METHOD_DPG, METHOD_DPGSTAR, SolutionBundle, run, run_pair
from .spaces import build_test_layout, build_trial_layout

__version__ = "0.1.0"

__all__ = [
    "AcousticsConfig",
    "PlaneWave",
    "StructuredMesh",
    "build_mesh",
    "build_trial_layout",
    "build_test_layout",
    "GramMatrix",
    "MixedSystem",
    "FactorizationError",
    "solve_mixed",
    "SolutionBundle",
    "run",
    "run_pair",
    "field_l2_error",
    "graph_norm_error",
    "convergence_rates",
    "estimate_alpha_h",
    "alpha_sweep",
    "assemble_lsq",
    "solve_lsq",
    "METHOD_DPG",
    "METHOD_DPGSTAR",
    "NORM_GRAPH",
    "NORM_MATH",
    "NORM_SCALED",
    "NORM_PURE",
    "GOAL_MANUFACTURED",
    "GOAL_UNIFORM_PRESSURE",
    "__version__",
]
