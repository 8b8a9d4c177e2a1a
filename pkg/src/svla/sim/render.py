"""Deterministic software rasterizer producing the policy's camera frames.

Everything is flat-shaded triangles through a pinhole camera with a
z-buffer: table slab, robot column/links/fingers as boxes, objects as
coloured boxes. Output is uint8 RGB so rendered frames round-trip PNG
storage bit-exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np

from . import geometry as geo
from .world import KIND_COLORS, SimState

BACKGROUND = np.array([0.72, 0.78, 0.84])
TABLE_COLOR = (0.55, 0.44, 0.32)
ROBOT_COLOR = (0.42, 0.45, 0.50)
FINGER_COLOR = (0.20, 0.22, 0.25)
LIGHT_DIR = np.array([0.3, -0.45, 0.84])


@dataclass(frozen=True)
class CameraSpec:
    preset: str = "side"  # side | top | front, or "custom" with explicit pose
    resolution: int = 144
    focal_px: float = None
    position: tuple = None
    look_at: tuple = None
    up: tuple = (0.0, 0.0, 1.0)

    def resolved(self):
        presets = {
            "side": ((0.35, -0.80, 0.42), (0.33, 0.0, 0.04), (0.0, 0.0, 1.0), 1.45),
            "top": ((0.33, 0.0, 0.95), (0.33, 0.0, 0.0), (1.0, 0.0, 0.0), 1.6),
            "front": ((1.05, 0.0, 0.35), (0.30, 0.0, 0.05), (0.0, 0.0, 1.0), 1.5),
        }
        if self.preset in presets:
            pos, look, up, fscale = presets[self.preset]
            focal = self.focal_px if self.focal_px else fscale * self.resolution
            return np.array(pos), np.array(look), np.array(up), focal
        if self.position is None or self.look_at is None:
            raise ValueError(f"camera preset {self.preset!r} unknown and no explicit pose given")
        focal = self.focal_px if self.focal_px else 1.5 * self.resolution
        return np.array(self.position), np.array(self.look_at), np.array(self.up), focal

    def to_dict(self):
        d = asdict(self)
        for k in ("position", "look_at", "up"):
            if d[k] is not None:
                d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        for k in ("position", "look_at", "up"):
            if d.get(k) is not None:
                d[k] = tuple(d[k])
        return cls(**d)


def _box_tris(center, half_extents, yaw=0.0):
    """12 triangles of an axis box rotated by yaw about z."""
    hx, hy, hz = half_extents
    corners = np.array(
        [[sx * hx, sy * hy, sz * hz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    )
    c, s = math.cos(yaw), math.sin(yaw)
    rot = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    verts = corners @ rot.T + np.asarray(center)
    # indices into the (sx,sy,sz) corner ordering
    faces = [
        (0, 1, 3, 2),  # -x
        (4, 6, 7, 5),  # +x
        (0, 4, 5, 1),  # -y
        (2, 3, 7, 6),  # +y
        (0, 2, 6, 4),  # -z
        (1, 5, 7, 3),  # +z
    ]
    tris = []
    for a, b, cc, d in faces:
        tris.append(verts[[a, b, cc]])
        tris.append(verts[[a, cc, d]])
    return tris


def _segment_box(p0, p1, thickness, color, tris, colors):
    """Box spanning two 3-d points (robot links)."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    mid = 0.5 * (p0 + p1)
    d = p1 - p0
    length = float(np.linalg.norm(d[:2]))
    yaw = math.atan2(d[1], d[0]) if length > 1e-9 else 0.0
    half = (max(length / 2, thickness), thickness, thickness + abs(d[2]) / 2)
    for t in _box_tris(mid, half, yaw):
        tris.append(t)
        colors.append(color)


def scene_triangles(s: SimState, g: geo.RobotGeometry):
    tris, colors = [], []
    # table slab under the reachable workspace
    for t in _box_tris((0.18, 0.0, s.table_height - 0.02), (0.55, 0.62, 0.02)):
        tris.append(t)
        colors.append(TABLE_COLOR)
    # column
    for t in _box_tris((0.0, 0.0, g.z_max / 2), (0.03, 0.03, g.z_max / 2)):
        tris.append(t)
        colors.append(ROBOT_COLOR)
    j = s.joints
    z_arm = j.z + 0.04  # links ride just above the gripper plane
    ex, ey = geo.elbow_position(j, g)
    pose = geo.forward_kinematics(j, g)
    _segment_box((0, 0, z_arm), (ex, ey, z_arm), 0.022, ROBOT_COLOR, tris, colors)
    _segment_box((ex, ey, z_arm), (pose.x, pose.y, z_arm), 0.018, ROBOT_COLOR, tris, colors)
    # wrist drop and fingers, separated by the current opening
    _segment_box(
        (pose.x, pose.y, z_arm), (pose.x, pose.y, pose.z + 0.01), 0.012, ROBOT_COLOR, tris, colors
    )
    half_open = j.gripper / 2 + 0.006
    c, sn = math.cos(pose.yaw), math.sin(pose.yaw)
    for side in (-1, 1):
        fx = pose.x - sn * side * half_open
        fy = pose.y + c * side * half_open
        for t in _box_tris((fx, fy, pose.z), (0.012, 0.004, 0.025), pose.yaw):
            tris.append(t)
            colors.append(FINGER_COLOR)
    for obj in s.objects:
        color = KIND_COLORS.get(obj.kind, KIND_COLORS["generic"])
        for t in _box_tris((obj.x, obj.y, obj.z), obj.half_extents, obj.yaw):
            tris.append(t)
            colors.append(color)
    return np.array(tris), np.array(colors)


def render(s: SimState, cam: CameraSpec, g: geo.RobotGeometry = None) -> np.ndarray:
    """Rasterize the scene to (res, res, 3) uint8."""
    g = g or geo.RobotGeometry()
    pos, look, up, focal = cam.resolved()
    res = cam.resolution

    fwd = look - pos
    fwd = fwd / np.linalg.norm(fwd)
    right = np.cross(fwd, up)
    right = right / np.linalg.norm(right)
    cup = np.cross(right, fwd)

    tris, colors = scene_triangles(s, g)
    v = tris.reshape(-1, 3) - pos
    cx = v @ right
    cy = v @ cup
    cz = v @ fwd
    half = res / 2.0
    # guard near plane; clamped points distort but never divide by ~0
    cz = np.maximum(cz, 1e-3)
    us = focal * cx / cz + half
    vs = half - focal * cy / cz
    us = us.reshape(-1, 3)
    vs = vs.reshape(-1, 3)
    zs = cz.reshape(-1, 3)

    # flat shading from world-space normals
    e1 = tris[:, 1] - tris[:, 0]
    e2 = tris[:, 2] - tris[:, 0]
    normals = np.cross(e1, e2)
    nlen = np.linalg.norm(normals, axis=1, keepdims=True)
    nlen[nlen == 0] = 1.0
    normals /= nlen
    light = LIGHT_DIR / np.linalg.norm(LIGHT_DIR)
    shade = 0.55 + 0.45 * np.abs(normals @ light)
    shaded = np.clip(colors * shade[:, None], 0.0, 1.0)

    img = np.tile(BACKGROUND, (res, res, 1)).astype(np.float64)
    zbuf = np.full((res, res), np.inf)

    order = np.argsort(-zs.min(axis=1))  # far first is irrelevant with z-buffer; stable order
    for ti in order:
        u3, v3, z3 = us[ti], vs[ti], zs[ti]
        xmin = max(int(math.floor(u3.min())), 0)
        xmax = min(int(math.ceil(u3.max())) + 1, res)
        ymin = max(int(math.floor(v3.min())), 0)
        ymax = min(int(math.ceil(v3.max())) + 1, res)
        if xmin >= xmax or ymin >= ymax:
            continue
        px = np.arange(xmin, xmax) + 0.5
        py = np.arange(ymin, ymax) + 0.5
        gx, gy = np.meshgrid(px, py)
        d = (u3[1] - u3[0]) * (v3[2] - v3[0]) - (u3[2] - u3[0]) * (v3[1] - v3[0])
        if abs(d) < 1e-12:
            continue
        w1 = ((gx - u3[0]) * (v3[2] - v3[0]) - (gy - v3[0]) * (u3[2] - u3[0])) / d
        w2 = ((gy - v3[0]) * (u3[1] - u3[0]) - (gx - u3[0]) * (v3[1] - v3[0])) / d
        w0 = 1.0 - w1 - w2
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        depth = w0 * z3[0] + w1 * z3[1] + w2 * z3[2]
        sub = zbuf[ymin:ymax, xmin:xmax]
        win = inside & (depth < sub)
        if not win.any():
            continue
        sub[win] = depth[win]
        img[ymin:ymax, xmin:xmax][win] = shaded[ti]

    return np.clip(img * 255.0 + 0.5, 0, 255).astype(np.uint8)


def frame_to_float(frame: np.ndarray, dtype=np.float32) -> np.ndarray:
    """uint8 frame -> [0,1] float array for the tokenizer."""
    return (frame.astype(dtype)) / dtype(255.0)
