"""Teleoperation gateway: a live service exposing the simulator over HTTP/WS.

One control loop owns the SimState; network handlers funnel Commands
through a single lock so application order is strict. While an episode is
being recorded, every motion command advances sim time by exactly one
logging period (5 s at 0.2 Hz), so the recorder clock fires once per
command and the saved episode is replay-valid by construction. Outside of
recording, commands advance a small nominal dt for a monotone clock.
"""
from __future__ import annotations

import base64
import io
import json
import asyncio
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, WebSocket, WebSocketDisconnect
from fastapi.responses import JSONResponse, Response
from PIL import Image

from .episodes import (
    DEFAULT_RATE_HZ,
    EpisodeError,
    EpisodeRecorder,
    load_episode,
    replay_validate,
    save_episode,
)
from .policy import ActionSpace, ActionVector
from .sim.geometry import forward_kinematics
from .sim.render import CameraSpec, render
from .sim.world import SimError, SimState, scene_geometry, spawn_scene, step as sim_step

IDLE_DT = 0.1  # sim-seconds per non-recording command
JOG_FIELDS = ("dx", "dy", "dz", "droll", "dpitch", "dyaw")
COMMAND_TYPES = ("jog", "grip", "record_start", "record_stop", "reset", "spawn")


class CommandError(ValueError):
    pass


def validate_command(cmd) -> dict:
    """Schema check for a Command JSON object; returns the parsed payload."""
    if not isinstance(cmd, dict) or "type" not in cmd:
        raise CommandError("command must be an object with a 'type' field")
    ctype = cmd["type"]
    if ctype not in COMMAND_TYPES:
        raise CommandError(f"unknown command type {ctype!r}")
    payload = cmd.get("payload", {})
    if not isinstance(payload, dict):
        raise CommandError("payload must be an object")
    if ctype == "jog":
        deltas = payload.get("deltas")
        if not isinstance(deltas, (list, tuple)) or len(deltas) != 6:
            raise CommandError("jog payload needs 'deltas' with 6 values")
        for name, v in zip(JOG_FIELDS, deltas):
            if not isinstance(v, (int, float)) or not np.isfinite(v):
                raise CommandError(f"jog delta {name} is not a number")
            if not -1.0 <= v <= 1.0:
                raise CommandError(f"jog delta {name}={v} outside [-1, 1]")
    elif ctype == "grip":
        opening = payload.get("opening")
        if not isinstance(opening, (int, float)) or not np.isfinite(opening):
            raise CommandError("grip payload needs a numeric 'opening'")
    elif ctype == "record_start":
        instruction = payload.get("instruction")
        if not isinstance(instruction, str) or not instruction.strip():
            raise CommandError("record_start payload needs a non-empty 'instruction'")
    elif ctype == "spawn":
        if "scene" not in payload:
            raise CommandError("spawn payload needs a 'scene' spec")
    return payload


@dataclass
class Gateway:
    """Simulator + recorder behind a strict command lock."""

    scene_spec: dict
    data_dir: Path
    rate_hz: float = DEFAULT_RATE_HZ
    scene_seed: int = 0
    space: ActionSpace = field(default_factory=ActionSpace)

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.geometry = scene_geometry(self.scene_spec)
        self.state = spawn_scene(self.scene_spec, self.scene_seed)
        self.recorder = None
        self.grip_target = 1.0  # normalized; persists across jogs
        self.lock = threading.Lock()
        self._cameras = {}

    # -- internals (call with self.lock held) -------------------------------

    def _camera(self, preset: str) -> CameraSpec:
        cam = self._cameras.get(preset)
        if cam is None:
            cam = self._cameras[preset] = CameraSpec(preset=preset)
        return cam

    def _apply_action(self, action: ActionVector):
        if self.recorder is not None:
            self.recorder.record_step(self.state, action)
            dt = 1.0 / self.rate_hz
        else:
            dt = IDLE_DT
        self.state = sim_step(self.state, action, dt, self.geometry, self.space)

    def _finish_recording(self) -> dict:
        self._apply_action(ActionVector(gripper=self.grip_target, terminate=True))
        recorder, self.recorder = self.recorder, None
        episode = recorder.stop(outcome="teleop")
        save_episode(episode, self.data_dir)
        report = replay_validate(episode)
        verdict = "pass" if report.max_pose_divergence <= 1e-6 else "fail"
        return {
            "episode_id": episode.id,
            "steps": len(episode.steps),
            "replay_verdict": verdict,
            "max_pose_divergence": report.max_pose_divergence,
        }

    # -- public API ---------------------------------------------------------

    def apply(self, cmd: dict) -> dict:
        """Validate and apply one Command; returns {ok, ...} (never raises
        for malformed commands)."""
        try:
            payload = validate_command(cmd)
        except CommandError as e:
            return {"ok": False, "error": str(e)}
        with self.lock:
            try:
                return {"ok": True, **self._dispatch(cmd["type"], payload)}
            except (CommandError, EpisodeError, SimError) as e:
                return {"ok": False, "error": str(e)}

    def _dispatch(self, ctype: str, payload: dict) -> dict:
        if ctype == "jog":
            action = ActionVector(
                **dict(zip(JOG_FIELDS, (float(v) for v in payload["deltas"]))),
                gripper=self.grip_target,
            )
            self._apply_action(action)
            return {}
        if ctype == "grip":
            opening = float(
                np.clip(payload["opening"], 0.0, self.geometry.gripper_max)
            )
            self.grip_target = 2.0 * opening / self.geometry.gripper_max - 1.0
            self._apply_action(ActionVector(gripper=self.grip_target))
            return {}
        if ctype == "record_start":
            if self.recorder is not None:
                raise CommandError("already recording")
            episode_id = payload.get("episode_id") or f"teleop-{uuid.uuid4().hex[:8]}"
            self.recorder = EpisodeRecorder(
                episode_id=episode_id,
                instruction=payload["instruction"].strip(),
                geometry=self.geometry,
                camera=self._camera_for_scene(),
                scene_spec=self.scene_spec,
                initial_state=self.state,
                rate_hz=self.rate_hz,
                action_space=self.space,
            )
            return {"episode_id": episode_id}
        if ctype == "record_stop":
            if self.recorder is None:
                raise CommandError("not recording")
            return self._finish_recording()
        if ctype == "reset":
            self.recorder = None
            self.grip_target = 1.0
            self.state = spawn_scene(self.scene_spec, self.scene_seed)
            return {}
        if ctype == "spawn":
            if self.recorder is not None:
                raise CommandError("cannot respawn while recording")
            scene = payload["scene"]
            seed = int(payload.get("seed", 0))
            state = spawn_scene(scene, seed)  # validate before committing
            self.scene_spec = scene
            self.scene_seed = seed
            self.geometry = scene_geometry(scene)
            self.state = state
            self.grip_target = 1.0
            return {}
        raise CommandError(f"unknown command type {ctype!r}")

    def _camera_for_scene(self) -> CameraSpec:
        cam = self.scene_spec.get("camera")
        if cam is None:
            return CameraSpec()
        if isinstance(cam, str):
            return self._camera(cam)
        return CameraSpec.from_dict(cam)

    def state_frame(self, cam: str = "side", include_frame: bool = True) -> dict:
        """Snapshot of everything the UI needs, JSON-serializable."""
        with self.lock:
            s = self.state
            recorder = self.recorder
            pose = forward_kinematics(s.joints, self.geometry)
            frame_png = None
            if include_frame:
                img = render(s, self._camera(cam), self.geometry)
                buf = io.BytesIO()
                Image.fromarray(img).save(buf, format="PNG")
                frame_png = base64.b64encode(buf.getvalue()).decode("ascii")
            return {
                "clock": s.clock,
                "joints": {
                    "shoulder": s.joints.shoulder,
                    "elbow": s.joints.elbow,
                    "wrist_yaw": s.joints.wrist_yaw_cmd,
                    "wrist_pitch": s.joints.wrist_pitch,
                    "wrist_roll": s.joints.wrist_roll,
                    "z": s.joints.z,
                    "gripper": s.joints.gripper,
                },
                "ee_pose": {
                    "x": pose.x, "y": pose.y, "z": pose.z,
                    "roll": pose.roll, "pitch": pose.pitch, "yaw": pose.yaw,
                },
                "objects": [o.to_dict() for o in s.objects],
                "attached_object": s.attached_object,
                "last_step_clamped": s.last_step_clamped,
                "workspace": {
                    "r_min": abs(self.geometry.l1 - self.geometry.l2),
                    "r_max": self.geometry.l1 + self.geometry.l2,
                    "shoulder_limit": self.geometry.shoulder_limit,
                    "elbow_limit": self.geometry.elbow_limit,
                },
                "recorder": {
                    "active": recorder is not None,
                    "episode_id": recorder.episode_id if recorder else None,
                    "steps": len(recorder.steps) if recorder else 0,
                },
                "camera": cam,
                "frame_png": frame_png,
            }

    def render_png(self, cam: str = "side") -> bytes:
        with self.lock:
            img = render(self.state, self._camera(cam), self.geometry)
        buf = io.BytesIO()
        Image.fromarray(img).save(buf, format="PNG")
        return buf.getvalue()

    def list_episodes(self) -> list:
        out = []
        for meta_path in sorted(self.data_dir.glob("*/meta.json")):
            try:
                meta = json.loads(meta_path.read_text())
                steps = len(
                    (meta_path.parent / "steps.jsonl").read_text().splitlines()
                )
            except (OSError, json.JSONDecodeError):
                continue
            out.append(
                {
                    "id": meta["id"],
                    "instruction": meta["instruction"],
                    "steps": steps,
                    "outcome": meta.get("outcome"),
                }
            )
        return out


def create_app(gateway: Gateway, stream_hz: float = 10.0, ui_dir: Path | None = None):
    """FastAPI app over a Gateway; importable for in-process tests.

    If `ui_dir` points at a built frontend (index.html + dist/), it is
    served at / so the browser UI shares the API's origin.
    """
    app = FastAPI(title="svla gateway")
    app.state.gateway = gateway

    @app.get("/api/state")
    def get_state(cam: str = "side"):
        return JSONResponse(gateway.state_frame(cam=cam))

    @app.post("/api/command")
    async def post_command(cmd: dict):
        result = await asyncio.to_thread(gateway.apply, cmd)
        return JSONResponse(result, status_code=200 if result["ok"] else 400)

    @app.get("/api/frame")
    def get_frame(cam: str = "side"):
        if cam not in ("side", "top", "front"):
            return JSONResponse(
                {"ok": False, "error": f"unknown camera {cam!r}"}, status_code=400
            )
        return Response(gateway.render_png(cam), media_type="image/png")

    @app.get("/api/episodes")
    def get_episodes():
        return JSONResponse(gateway.list_episodes())

    @app.websocket("/ws/stream")
    async def ws_stream(ws: WebSocket):
        await ws.accept()
        period = 1.0 / stream_hz
        try:
            while True:
                frame = await asyncio.to_thread(gateway.state_frame)
                await ws.send_text(json.dumps(frame))
                await asyncio.sleep(period)
        except WebSocketDisconnect:
            pass

    if ui_dir is not None and (ui_dir / "index.html").exists():
        from fastapi.staticfiles import StaticFiles

        # mounted last so /api and /ws keep precedence
        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def serve(bind: str, scene_spec: dict, data_dir, scene_seed: int = 0, ui_dir=None):
    """Run the gateway service until interrupted. Exits nonzero on bind
    failure (uvicorn raises SystemExit through the CLI)."""
    import uvicorn

    host, _, port = bind.rpartition(":")
    gateway = Gateway(scene_spec=scene_spec, data_dir=data_dir, scene_seed=scene_seed)
    app = create_app(gateway, ui_dir=Path(ui_dir) if ui_dir else None)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")
