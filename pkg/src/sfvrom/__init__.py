from sfvrom.config import (
    ArtifactIOError,
    ConfigurationError,
    IntegrationError,
    PositivityError,
    RankDeficiencyError,
    SFVError,
)
from sfvrom.grid import Interval, build_tensor_grid, tensor_gauss_nodes
from sfvrom.problems import Preset, Problem, get_problem
from sfvrom.solver import (
    Method,
    SFVDiscretization,
    TimeIntegratorConfig,
    project_initial_condition,
    run_fom,
)

__version__ = "0.1.0"
