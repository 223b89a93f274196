"""Rectified control barrier functions for high-degree safety constraints.

Construct barriers whose rectified correction terms activate only when the
constraint is actually being eroded, filter nominal controllers through them
in closed form, simulate the closed loop, and certify validity hypotheses on
sampled grids.
"""

from .barriers import (
    Barrier,
    BarrierSpec,
    barrier_spec_from_config,
    build_barrier,
    default_barrier_spec,
)
from .classk import (
    ClassKFn,
    CustomClassK,
    Linear,
    Rectifier,
    Shifted,
    SignedSquare,
    classk_from_config,
    rectifier_from_config,
)
from .errors import (
    NestingDepthExceeded,
    NonFiniteEvaluation,
    RecbfError,
    UnknownExperiment,
    UnknownSystem,
    WrongSystem,
)
from .experiments import run_experiment
from .filtering import FilterConfig, FilterResult, hocbf_filter, project_halfspace, safety_filter
from .jets import (
    Jet,
    as_real_vector,
    directional_derivative,
    fd_gradient,
    gradient,
    nested_directional,
)
from .sim import GridSpec, LevelSetGrid, SimConfig, Trajectory, integrate, levelset, sweep
from .systems import (
    ControlAffineSystem,
    ConstraintFn,
    builtin,
    builtin_names,
    lie_f,
    lie_g_lie_f,
    system_from_config,
)
from .verify import (
    VerifyReport,
    check_cbf_condition,
    check_degree_two_validity,
    check_mixed_input_validity,
    check_recursive_validity,
    check_relative_degree,
)

__version__ = "0.1.0"

__all__ = [
    "Barrier",
    "BarrierSpec",
    "ClassKFn",
    "ControlAffineSystem",
    "ConstraintFn",
    "CustomClassK",
    "FilterConfig",
    "FilterResult",
    "GridSpec",
    "Jet",
    "LevelSetGrid",
    "Linear",
    "NestingDepthExceeded",
    "NonFiniteEvaluation",
    "RecbfError",
    "Rectifier",
    "Shifted",
    "SignedSquare",
    "SimConfig",
    "Trajectory",
    "UnknownExperiment",
    "UnknownSystem",
    "VerifyReport",
    "WrongSystem",
    "as_real_vector",
    "barrier_spec_from_config",
    "build_barrier",
    "builtin",
    "builtin_names",
    "check_cbf_condition",
    "check_degree_two_validity",
    "check_mixed_input_validity",
    "check_recursive_validity",
    "check_relative_degree",
    "classk_from_config",
    "default_barrier_spec",
    "directional_derivative",
    "fd_gradient",
    "gradient",
    "hocbf_filter",
    "integrate",
    "levelset",
    "lie_f",
    "lie_g_lie_f",
    "nested_directional",
    "project_halfspace",
    "rectifier_from_config",
    "run_experiment",
    "safety_filter",
    "sweep",
    "system_from_config",
]
