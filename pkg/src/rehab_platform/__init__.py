"""Kinematics, dynamics, control and posturography for a 3-DOF balance platform."""

from .errors import ConvergenceError, PlatformError, SingularityError, WorkspaceError
from .geometry import (
    PlatformGeometry,
    Pose,
    forward_kinematics,
    inverse_kinematics,
    resolve_constraints,
    workspace_check,
)
from .dynamics import DynamicsModel, TaskState, assemble, forward_dynamics, inverse_dynamics

__all__ = [
    "ConvergenceError", "PlatformError", "SingularityError", "WorkspaceError",
    "PlatformGeometry", "Pose", "forward_kinematics", "inverse_kinematics",
    "resolve_constraints", "workspace_check",
    "DynamicsModel", "TaskState", "assemble", "forward_dynamics", "inverse_dynamics",
]

__version__ = "0.1.0"
