"""Quasi-static world model: state, action stepping, grasping, scenes.

Actions are normalized 7-DoF end-effector deltas. A step denormalizes the
action, clamps the commanded motion to the workspace (saturating along
the motion ray like a real controller would), solves IK on the current
elbow branch, applies the gripper target, and runs the grasp rule. No
contact dynamics: objects either rest on the table or ride the gripper.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from ..policy import ActionSpace, ActionVector
from . import geometry as geo
from .geometry import JointState, Pose, RobotGeometry


class SimError(ValueError):
    pass


# Graspable width and rendered half-extents per object kind.
KIND_EXTENTS = {
    "banana": (0.09, 0.018, 0.018),
    "coke_can": (0.033, 0.033, 0.058),
    "generic": (0.025, 0.025, 0.025),
}
KIND_COLORS = {
    "banana": (0.93, 0.83, 0.18),
    "coke_can": (0.82, 0.12, 0.10),
    "generic": (0.25, 0.45, 0.85),
}

GRASP_XY_TOL = 0.02  # m, horizontal gripper-object tolerance
GRASP_Z_TOL = 0.03  # m, vertical tolerance

DEFAULT_HOME = JointState(
    shoulder=-0.6, elbow=1.2, wrist_yaw_cmd=0.0, wrist_pitch=0.0,
    wrist_roll=0.0, z=0.10, gripper=0.09,
)


@dataclass(frozen=True)
class ObjectState:
    id: str
    kind: str
    x: float
    y: float
    z: float  # centre height
    yaw: float = 0.0
    half_extents: tuple = None

    def __post_init__(self):
        if self.half_extents is None:
            object.__setattr__(self, "half_extents", KIND_EXTENTS.get(self.kind, KIND_EXTENTS["generic"]))

    @property
    def grasp_width(self):
        hx, hy, _ = self.half_extents
        return 2.0 * min(hx, hy)

    def to_dict(self):
        return {
            "id": self.id, "kind": self.kind, "x": self.x, "y": self.y,
            "z": self.z, "yaw": self.yaw, "half_extents": list(self.half_extents),
        }

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if d.get("half_extents") is not None:
            d["half_extents"] = tuple(d["half_extents"])
        return cls(**d)


@dataclass(frozen=True)
class SimState:
    joints: JointState
    objects: tuple = ()
    attached_object: str = None
    grasp_offset: tuple = None  # (dx, dy, dz, dyaw) object minus gripper
    table_height: float = 0.0
    clock: float = 0.0
    last_step_clamped: bool = False

    def object_by_id(self, oid):
        for o in self.objects:
            if o.id == oid:
                return o
        raise SimError(f"no object with id {oid!r}")


def _rest_z(obj: ObjectState, table_height: float) -> float:
    return table_height + obj.half_extents[2]


def make_state(joints: JointState, objects, table_height=0.0) -> SimState:
    objs = tuple(
        replace(o, z=_rest_z(o, table_height)) if o.z == 0.0 else o for o in objects
    )
    return SimState(joints=joints, objects=objs, table_height=table_height)


def _clamp(v, lo, hi):
    return min(hi, max(lo, v))


def _clamp_to_reachable(x0, y0, x1, y1, g: RobotGeometry, branch: str):
    """Largest step along (x0,y0)->(x1,y1) that stays in the workspace."""
    if geo.reachable(x1, y1, g, branch):
        return x1, y1, False
    lo, hi = 0.0, 1.0  # start point is reachable by construction
    for _ in range(48):
        mid = 0.5 * (lo + hi)
        if geo.reachable(x0 + (x1 - x0) * mid, y0 + (y1 - y0) * mid, g, branch):
            lo = mid
        else:
            hi = mid
    return x0 + (x1 - x0) * lo, y0 + (y1 - y0) * lo, True


def step(
    s: SimState,
    a: ActionVector,
    dt: float,
    g: RobotGeometry,
    space: ActionSpace = ActionSpace(),
) -> SimState:
    """Advance the world by one control period."""
    arr = a.to_array()
    if not np.all(np.isfinite(arr)):
        raise SimError(f"NaN/Inf in action {arr}")

    j = s.joints
    cur = geo.forward_kinematics(j, g)
    branch = "elbow_up" if j.elbow >= 0 else "elbow_down"

    tx = cur.x + a.dx * space.trans_bound
    ty = cur.y + a.dy * space.trans_bound
    tz = _clamp(cur.z + a.dz * space.trans_bound, g.z_min, g.z_max)
    tyaw = _clamp(cur.yaw + a.dyaw * space.rot_bound, -g.wrist_yaw_limit, g.wrist_yaw_limit)
    tpitch = _clamp(cur.pitch + a.dpitch * space.rot_bound, g.pitch_min, g.pitch_max)
    troll = _clamp(cur.roll + a.droll * space.rot_bound, -g.roll_limit, g.roll_limit)
    z_clamped = tz != cur.z + a.dz * space.trans_bound

    tx, ty, xy_clamped = _clamp_to_reachable(cur.x, cur.y, tx, ty, g, branch)
    target = Pose(x=tx, y=ty, z=tz, roll=troll, pitch=tpitch, yaw=tyaw)
    new_joints = geo.inverse_kinematics(target, g, branch)

    prev_opening = j.gripper
    opening = _clamp(
        (a.gripper + 1.0) / 2.0 * space.gripper_max, g.gripper_min, g.gripper_max
    )
    new_joints = replace(new_joints, gripper=opening)

    objects = list(s.objects)
    attached = s.attached_object
    grasp_offset = s.grasp_offset
    gripper_pose = geo.forward_kinematics(new_joints, g)

    if attached is not None:
        obj = s.object_by_id(attached)
        if opening > obj.grasp_width:
            # release: drop straight down onto the table
            objects = [
                replace(o, z=_rest_z(o, s.table_height)) if o.id == attached else o
                for o in objects
            ]
            attached = None
            grasp_offset = None
        else:
            dx, dy, dz, dyaw = grasp_offset
            objects = [
                replace(
                    o,
                    x=gripper_pose.x + dx,
                    y=gripper_pose.y + dy,
                    z=gripper_pose.z + dz,
                    yaw=gripper_pose.yaw + dyaw,
                )
                if o.id == attached
                else o
                for o in objects
            ]
    else:
        # grasp rule fires only on the closing transition
        for obj in objects:
            closes_on = prev_opening >= obj.grasp_width > opening
            if not closes_on:
                continue
            horiz = math.hypot(gripper_pose.x - obj.x, gripper_pose.y - obj.y)
            vert = abs(gripper_pose.z - obj.z)
            if horiz <= GRASP_XY_TOL and vert <= GRASP_Z_TOL:
                attached = obj.id
                grasp_offset = (
                    obj.x - gripper_pose.x,
                    obj.y - gripper_pose.y,
                    obj.z - gripper_pose.z,
                    obj.yaw - gripper_pose.yaw,
                )
                break

    return SimState(
        joints=new_joints,
        objects=tuple(objects),
        attached_object=attached,
        grasp_offset=grasp_offset,
        table_height=s.table_height,
        clock=s.clock + dt,
        last_step_clamped=xy_clamped or z_clamped,
    )


# -- scene specs ------------------------------------------------------------

def spawn_scene(spec: dict, seed: int) -> SimState:
    """Deterministic scene construction from a JSON-style description.

    Object entries carry either a fixed `pose` [x, y, yaw] or a `region`
    [xmin, xmax, ymin, ymax] sampled uniformly (with rejection against the
    workspace and already-placed objects) from the given seed.
    """
    if not isinstance(spec, dict) or "objects" not in spec:
        raise SimError("malformed scene spec: expected a dict with an 'objects' list")
    g = RobotGeometry.from_dict(spec.get("geometry", {})) if spec.get("geometry") else RobotGeometry()
    table = float(spec.get("table_height", 0.0))
    home = (
        JointState.from_array(spec["robot_home"]) if "robot_home" in spec else DEFAULT_HOME
    )
    geo.check_limits(home, g)
    rng = np.random.Generator(np.random.PCG64(seed))

    placed = []
    for entry in spec["objects"]:
        if "id" not in entry or "kind" not in entry:
            raise SimError(f"malformed object entry {entry}")
        kind = entry["kind"]
        extents = tuple(entry.get("half_extents", KIND_EXTENTS.get(kind, KIND_EXTENTS["generic"])))
        if "pose" in entry:
            x, y, yaw = entry["pose"]
            if not geo.reachable(x, y, g) and not entry.get("allow_unreachable"):
                raise SimError(f"object {entry['id']!r} at ({x}, {y}) is unreachable")
        elif "region" in entry:
            xmin, xmax, ymin, ymax = entry["region"]
            yaw_lo, yaw_hi = entry.get("yaw_range", (0.0, 0.0))
            for _ in range(1000):
                x = float(rng.uniform(xmin, xmax))
                y = float(rng.uniform(ymin, ymax))
                yaw = float(rng.uniform(yaw_lo, yaw_hi))
                if not geo.reachable(x, y, g):
                    continue
                sep = min(
                    (math.hypot(x - o.x, y - o.y) for o in placed), default=math.inf
                )
                if sep < 0.08:
                    continue
                break
            else:
                raise SimError(f"could not place object {entry['id']!r} in region {entry['region']}")
        else:
            raise SimError(f"object entry {entry['id']!r} has neither pose nor region")
        placed.append(
            ObjectState(id=entry["id"], kind=kind, x=x, y=y, z=table + extents[2], yaw=yaw, half_extents=extents)
        )

    ids = [o.id for o in placed]
    if len(set(ids)) != len(ids):
        raise SimError(f"duplicate object ids in scene: {ids}")
    return SimState(joints=home, objects=tuple(placed), table_height=table)


def scene_geometry(spec: dict) -> RobotGeometry:
    return RobotGeometry.from_dict(spec["geometry"]) if spec.get("geometry") else RobotGeometry()
