"""SCARA kinematics with the coupled elbow/wrist-yaw spindle.

The arm is two links in the horizontal plane on a vertical column. The
wrist yaw command is expressed in the robot base frame: the real machine's
spindle coupling cancels elbow motion mechanically, so world yaw simply
equals the commanded yaw and is invariant to the elbow angle.

Joint limits carve the reachable annulus |L1-L2| <= r <= L1+L2 into the
robot's kidney-shaped workspace.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict, replace


class KinematicsError(ValueError):
    pass


class UnreachableError(KinematicsError):
    pass


class JointLimitError(KinematicsError):
    pass


@dataclass(frozen=True)
class RobotGeometry:
    l1: float = 0.2535  # shoulder -> elbow (m)
    l2: float = 0.2535  # elbow -> wrist (m)
    z_min: float = 0.0
    z_max: float = 0.90
    shoulder_limit: float = math.radians(90.0)
    elbow_limit: float = math.radians(150.0)
    wrist_yaw_limit: float = math.radians(110.0)
    pitch_min: float = math.radians(-95.0)
    pitch_max: float = 0.0
    roll_limit: float = math.radians(180.0)
    gripper_min: float = 0.0
    gripper_max: float = 0.09

    def __post_init__(self):
        if self.l1 <= 0 or self.l2 <= 0:
            raise KinematicsError("link lengths must be positive")
        if self.z_max <= self.z_min:
            raise KinematicsError("degenerate z travel")

    @property
    def r_min(self):
        return abs(self.l1 - self.l2)

    @property
    def r_max(self):
        return self.l1 + self.l2

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass(frozen=True)
class JointState:
    shoulder: float = 0.0
    elbow: float = 0.0
    wrist_yaw_cmd: float = 0.0  # base frame; spindle coupling realises it
    wrist_pitch: float = 0.0
    wrist_roll: float = 0.0
    z: float = 0.0
    gripper: float = 0.09  # opening in metres

    def to_array(self):
        return [
            self.shoulder,
            self.elbow,
            self.wrist_yaw_cmd,
            self.wrist_pitch,
            self.wrist_roll,
            self.z,
            self.gripper,
        ]

    @classmethod
    def from_array(cls, a):
        return cls(*a)


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    z: float
    roll: float = 0.0
    pitch: float = 0.0
    yaw: float = 0.0


def check_limits(j: JointState, g: RobotGeometry) -> None:
    checks = [
        ("shoulder", j.shoulder, -g.shoulder_limit, g.shoulder_limit),
        ("elbow", j.elbow, -g.elbow_limit, g.elbow_limit),
        ("wrist_yaw", j.wrist_yaw_cmd, -g.wrist_yaw_limit, g.wrist_yaw_limit),
        ("wrist_pitch", j.wrist_pitch, g.pitch_min, g.pitch_max),
        ("wrist_roll", j.wrist_roll, -g.roll_limit, g.roll_limit),
        ("z", j.z, g.z_min, g.z_max),
        ("gripper", j.gripper, g.gripper_min, g.gripper_max),
    ]
    eps = 1e-9
    for name, v, lo, hi in checks:
        if not (lo - eps <= v <= hi + eps):
            raise JointLimitError(f"{name}={v} outside [{lo}, {hi}]")


def forward_kinematics(j: JointState, g: RobotGeometry) -> Pose:
    check_limits(j, g)
    x = g.l1 * math.cos(j.shoulder) + g.l2 * math.cos(j.shoulder + j.elbow)
    y = g.l1 * math.sin(j.shoulder) + g.l2 * math.sin(j.shoulder + j.elbow)
    return Pose(
        x=x, y=y, z=j.z, roll=j.wrist_roll, pitch=j.wrist_pitch, yaw=j.wrist_yaw_cmd
    )


def elbow_position(j: JointState, g: RobotGeometry):
    """Elbow pivot in the base frame (for rendering and the workspace view)."""
    return g.l1 * math.cos(j.shoulder), g.l1 * math.sin(j.shoulder)


def _arm_solution(x, y, g: RobotGeometry, branch: str):
    r2 = x * x + y * y
    r = math.sqrt(r2)
    if r < g.r_min - 1e-9 or r > g.r_max + 1e-9:
        raise UnreachableError(
            f"unreachable: kidney workspace (r={r:.4f}, annulus [{g.r_min}, {g.r_max}])"
        )
    c = (r2 - g.l1**2 - g.l2**2) / (2.0 * g.l1 * g.l2)
    c = min(1.0, max(-1.0, c))
    elbow = math.acos(c)
    if branch == "elbow_down":
        elbow = -elbow
    elif branch != "elbow_up":
        raise KinematicsError(f"unknown IK branch {branch!r}")
    shoulder = math.atan2(y, x) - math.atan2(
        g.l2 * math.sin(elbow), g.l1 + g.l2 * math.cos(elbow)
    )
    return shoulder, elbow


def inverse_kinematics(
    target: Pose, g: RobotGeometry, branch: str = "elbow_up"
) -> JointState:
    """Analytic two-link IK on the requested elbow branch.

    Errors cover the annulus radius and z travel; shoulder/elbow limit
    feasibility is the province of `reachable`.
    """
    if not g.z_min - 1e-9 <= target.z <= g.z_max + 1e-9:
        raise UnreachableError(f"unreachable: z={target.z} outside [{g.z_min}, {g.z_max}]")
    shoulder, elbow = _arm_solution(target.x, target.y, g, branch)
    return JointState(
        shoulder=shoulder,
        elbow=elbow,
        wrist_yaw_cmd=target.yaw,
        wrist_pitch=target.pitch,
        wrist_roll=target.roll,
        z=target.z,
        gripper=g.gripper_min,
    )


def reachable(x: float, y: float, g: RobotGeometry, branch: str | None = None) -> bool:
    """True iff (x, y) is inside the kidney workspace: annulus radius plus
    shoulder/elbow limits (either elbow branch, or a specific one)."""
    branches = (branch,) if branch else ("elbow_up", "elbow_down")
    for b in branches:
        try:
            shoulder, elbow = _arm_solution(x, y, g, b)
        except KinematicsError:
            continue
        if abs(shoulder) <= g.shoulder_limit and abs(elbow) <= g.elbow_limit:
            return True
    return False
