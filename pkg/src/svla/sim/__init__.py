from .geometry import (
    JointState,
    JointLimitError,
    KinematicsError,
    Pose,
    RobotGeometry,
    UnreachableError,
    forward_kinematics,
    inverse_kinematics,
    reachable,
)
from .render import CameraSpec, frame_to_float, render
from .world import (
    DEFAULT_HOME,
    ObjectState,
    SimError,
    SimState,
    spawn_scene,
    scene_geometry,
    step,
)

__all__ = [
    "JointState", "JointLimitError", "KinematicsError", "Pose", "RobotGeometry",
    "UnreachableError", "forward_kinematics", "inverse_kinematics", "reachable",
    "CameraSpec", "frame_to_float", "render", "DEFAULT_HOME", "ObjectState",
    "SimError", "SimState", "spawn_scene", "scene_geometry", "step",
]
