"""Simulation lab for random walks among random conductances built on
umbrella forests."""

from .conductance import ConductanceField, ConductanceParams, IidLogField, IidLogParams
from .intensity import Box, IntensityParams, Model, default_params
from .lattice import build_forest
from .stream import StreamingTreeEnvironment, StreamSettings
from .walker import Trajectory, WalkConfig, run_walk

__version__ = "0.1.0"

__all__ = [
    "Box", "ConductanceField", "ConductanceParams", "IidLogField", "IidLogParams", "IntensityParams",
    "Model", "StreamSettings", "StreamingTreeEnvironment", "Trajectory", "WalkConfig",
    "build_forest", "default_params", "run_walk",
]
