"""Scripted expert for pick-up tasks: demo generation and solvability probes.

The oracle reads ground-truth object poses from the simulator, so it
stands in for a human demonstrator: approach above the target, descend,
close, lift, terminate. Its deltas are proportional feedback snapped to a
coarse lattice (multiples of 0.2 of the per-step bound, capped), so demos
use a small, consistent action vocabulary — the same way a human on a
rate-limited jog interface produces stereotyped inputs. Optional seeded
jitter nudges the approach by single lattice steps to vary paths.
"""
from __future__ import annotations

import math

import numpy as np

from .episodes import Episode, EpisodeRecorder
from .policy import ActionSpace, ActionVector
from .sim.geometry import RobotGeometry, forward_kinematics
from .sim.render import CameraSpec
from .sim.world import SimState, scene_geometry, spawn_scene, step as sim_step

GRIP_OPEN = 1.0
GRIP_CLOSED = -1.0
LATTICE = 0.2  # normalized jog quantum (0.2 * trans_bound = 1 cm)


def camera_from_spec(scene_spec: dict) -> CameraSpec:
    cam = scene_spec.get("camera")
    if cam is None:
        return CameraSpec()
    if isinstance(cam, str):
        return CameraSpec(preset=cam)
    return CameraSpec.from_dict(cam)


class OraclePick:
    """Closed-loop scripted policy targeting one object."""

    def __init__(
        self,
        target_id: str,
        space: ActionSpace = None,
        cruise_z: float = 0.10,
        lift_z: float = 0.14,
        speed: float = 0.4,
        xy_tol: float = 0.008,
        z_tol: float = 0.008,
        rng: np.random.Generator = None,
        jitter: float = 0.0,
    ):
        self.target_id = target_id
        self.space = space or ActionSpace()
        self.cruise_z = cruise_z
        self.lift_z = lift_z
        # cap snapped onto the lattice so every emitted value is a multiple
        self.speed = max(LATTICE, round(speed / LATTICE) * LATTICE)
        self.xy_tol = xy_tol
        self.z_tol = z_tol
        self.rng = rng
        self.jitter = jitter  # probability of a one-step lattice nudge

    def _snap(self, raw: float) -> float:
        """Proportional command -> nearest lattice multiple, capped."""
        v = float(np.clip(raw, -self.speed, self.speed))
        return round(v / LATTICE) * LATTICE

    def _jit(self) -> float:
        if self.rng is None or self.jitter == 0.0:
            return 0.0
        if self.rng.random() >= self.jitter:
            return 0.0
        return LATTICE if self.rng.random() < 0.5 else -LATTICE

    def action(self, state: SimState, geometry: RobotGeometry) -> ActionVector:
        obj = state.object_by_id(self.target_id)
        pose = forward_kinematics(state.joints, geometry)
        tb = self.space.trans_bound

        if state.attached_object == self.target_id:
            if pose.z >= self.lift_z - self.z_tol:
                return ActionVector(gripper=GRIP_CLOSED, terminate=True)
            dz = self._snap((self.lift_z - pose.z) / tb) or LATTICE
            return ActionVector(dz=dz, gripper=GRIP_CLOSED)

        horiz = math.hypot(obj.x - pose.x, obj.y - pose.y)
        if horiz > self.xy_tol:
            far = horiz > 0.04  # only jitter while clearly away from the grasp
            dx = self._snap((obj.x - pose.x) / tb) + (self._jit() if far else 0.0)
            dy = self._snap((obj.y - pose.y) / tb) + (self._jit() if far else 0.0)
            dz = self._snap((self.cruise_z - pose.z) / tb)
            return ActionVector(dx=dx, dy=dy, dz=dz, gripper=GRIP_OPEN)
        if pose.z > obj.z + self.z_tol:
            dz = self._snap((obj.z - pose.z) / tb) or -LATTICE
            return ActionVector(dz=dz, gripper=GRIP_OPEN)
        return ActionVector(gripper=GRIP_CLOSED)


def run_oracle_episode(
    scene_spec: dict,
    seed: int,
    instruction: str,
    episode_id: str,
    target_id: str,
    camera: CameraSpec = None,
    step_cap: int = 40,
    jitter: float = 0.3,
    speed: float = 0.4,
) -> Episode:
    """Spawn, drive the oracle to completion, and return the recorded episode."""
    geometry = scene_geometry(scene_spec)
    if camera is None:
        camera = camera_from_spec(scene_spec)
    state = spawn_scene(scene_spec, seed)
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, 0xE0])))
    oracle = OraclePick(target_id, rng=rng, jitter=jitter, speed=speed)
    recorder = EpisodeRecorder(
        episode_id=episode_id,
        instruction=instruction,
        geometry=geometry,
        camera=camera,
        scene_spec=scene_spec,
        initial_state=state,
    )
    period = recorder.rate_hz and 1.0 / recorder.rate_hz
    for _ in range(step_cap):
        action = oracle.action(state, geometry)
        recorder.record_step(state, action)
        state = sim_step(state, action, period, geometry)
        if action.terminate:
            break
    else:
        raise RuntimeError(f"oracle did not finish within {step_cap} steps for seed {seed}")
    return recorder.stop(outcome="oracle")
