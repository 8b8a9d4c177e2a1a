"""Demonstration episode recording, storage, replay validation, datasets.

On-disk container: one directory per episode with `meta.json`,
`steps.jsonl` (one object per step) and `frames/00000.png...`. Numeric
fields serialize as decimal with 17 significant digits so the jsonl round
trip is bit-exact; frames are lossless PNG.

The recorded action is the command issued at the step, so replaying the
action sequence through the simulator from the initial state must land on
each step's recorded joints (replay validation).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .policy import ActionSpace, ActionVector
from .sim.geometry import JointState, RobotGeometry, forward_kinematics
from .sim.render import CameraSpec, render
from .sim.world import ObjectState, SimState, step as sim_step
from .textembed import embed_instruction

DEFAULT_RATE_HZ = 0.2
FORMAT_VERSION = 1


class EpisodeError(ValueError):
    pass


@dataclass
class Step:
    index: int
    t: float
    action: ActionVector
    joints_before: JointState
    frame: np.ndarray  # (H,W,3) uint8


@dataclass
class Episode:
    id: str
    instruction: str
    steps: list
    geometry: RobotGeometry
    camera: CameraSpec
    scene_spec: dict
    initial_objects: list  # resolved ObjectStates at episode start
    table_height: float = 0.0
    rate_hz: float = DEFAULT_RATE_HZ
    action_space: ActionSpace = field(default_factory=ActionSpace)
    outcome: str = None

    @property
    def period(self):
        return 1.0 / self.rate_hz

    def initial_state(self) -> SimState:
        return SimState(
            joints=self.steps[0].joints_before,
            objects=tuple(self.initial_objects),
            table_height=self.table_height,
        )


class EpisodeRecorder:
    """Accumulates steps at the configured sim-time logging rate."""

    def __init__(
        self,
        episode_id: str,
        instruction: str,
        geometry: RobotGeometry,
        camera: CameraSpec,
        scene_spec: dict,
        initial_state: SimState,
        rate_hz: float = DEFAULT_RATE_HZ,
        action_space: ActionSpace = None,
    ):
        self.episode_id = episode_id
        self.instruction = instruction
        self.geometry = geometry
        self.camera = camera
        self.scene_spec = scene_spec
        self.initial_objects = list(initial_state.objects)
        self.table_height = initial_state.table_height
        self.rate_hz = rate_hz
        self.action_space = action_space or ActionSpace()
        self.steps = []
        self.active = True

    def record_step(self, state: SimState, action: ActionVector) -> None:
        if not self.active:
            raise EpisodeError("recorder is stopped")
        index = len(self.steps)
        frame = render(state, self.camera, self.geometry)
        self.steps.append(
            Step(
                index=index,
                t=index / self.rate_hz,
                action=action,
                joints_before=state.joints,
                frame=frame,
            )
        )

    def stop(self, outcome: str = None) -> Episode:
        if not self.active:
            raise EpisodeError("recorder already stopped")
        self.active = False
        if len(self.steps) < 2:
            raise EpisodeError(f"episode needs >= 2 steps, got {len(self.steps)}")
        if not self.steps[-1].action.terminate:
            raise EpisodeError("final step must carry terminate=True")
        return Episode(
            id=self.episode_id,
            instruction=self.instruction,
            steps=self.steps,
            geometry=self.geometry,
            camera=self.camera,
            scene_spec=self.scene_spec,
            initial_objects=self.initial_objects,
            table_height=self.table_height,
            rate_hz=self.rate_hz,
            action_space=self.action_space,
        )


# -- serialization ----------------------------------------------------------

def _g17(values):
    """Decimal serialization with 17 significant digits (bit-exact)."""
    return [float(format(float(v), ".17g")) for v in values]


def save_episode(episode: Episode, root) -> Path:
    root = Path(root)
    edir = root / episode.id
    frames_dir = edir / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "format_version": FORMAT_VERSION,
        "id": episode.id,
        "instruction": episode.instruction,
        "rate_hz": episode.rate_hz,
        "geometry": episode.geometry.to_dict(),
        "camera": episode.camera.to_dict(),
        "scene": episode.scene_spec,
        "initial_objects": [o.to_dict() for o in episode.initial_objects],
        "table_height": episode.table_height,
        "action_space": episode.action_space.to_dict(),
        "outcome": episode.outcome,
        "action_semantics": "command issued at the step",
    }
    (edir / "meta.json").write_text(json.dumps(meta, indent=2))
    lines = []
    for s in episode.steps:
        name = f"frames/{s.index:05d}.png"
        Image.fromarray(s.frame).save(edir / name)
        lines.append(
            json.dumps(
                {
                    "index": s.index,
                    "t": float(format(s.t, ".17g")),
                    "action": _g17(s.action.to_array()),
                    "joints_before": _g17(s.joints_before.to_array()),
                    "frame": name,
                }
            )
        )
    (edir / "steps.jsonl").write_text("\n".join(lines) + "\n")
    return edir / "meta.json"


def load_episode(edir) -> Episode:
    edir = Path(edir)
    meta_path = edir / "meta.json"
    if not meta_path.exists():
        raise EpisodeError(f"{edir}: missing meta.json")
    meta = json.loads(meta_path.read_text())
    steps = []
    prev_t = -math.inf
    for line in (edir / "steps.jsonl").read_text().splitlines():
        row = json.loads(line)
        frame_path = edir / row["frame"]
        if not frame_path.exists():
            raise EpisodeError(f"corrupt episode {meta['id']!r}: step {row['index']} frame missing")
        frame = np.asarray(Image.open(frame_path).convert("RGB"))
        if row["t"] <= prev_t:
            raise EpisodeError(f"corrupt episode {meta['id']!r}: timestamps not increasing at step {row['index']}")
        prev_t = row["t"]
        steps.append(
            Step(
                index=row["index"],
                t=row["t"],
                action=ActionVector.from_array(row["action"]),
                joints_before=JointState.from_array(row["joints_before"]),
                frame=frame,
            )
        )
    if len(steps) < 2:
        raise EpisodeError(f"corrupt episode {meta['id']!r}: fewer than 2 steps")
    return Episode(
        id=meta["id"],
        instruction=meta["instruction"],
        steps=steps,
        geometry=RobotGeometry.from_dict(meta["geometry"]),
        camera=CameraSpec.from_dict(meta["camera"]),
        scene_spec=meta["scene"],
        initial_objects=[ObjectState.from_dict(o) for o in meta["initial_objects"]],
        table_height=meta["table_height"],
        rate_hz=meta["rate_hz"],
        action_space=ActionSpace.from_dict(meta["action_space"]),
        outcome=meta.get("outcome"),
    )


# -- replay validation ------------------------------------------------------

@dataclass
class ReplayReport:
    episode_id: str
    max_pose_divergence: float
    per_step: list  # divergence in metres per step


def replay_validate(episode: Episode, geometry: RobotGeometry = None) -> ReplayReport:
    """Re-run the action sequence and measure end-effector divergence."""
    g = geometry or episode.geometry
    if g != episode.geometry:
        raise EpisodeError(
            f"geometry mismatch: episode recorded with {episode.geometry}, validating with {g}"
        )
    state = episode.initial_state()
    divergences = []
    for s in episode.steps:
        actual = forward_kinematics(state.joints, g)
        recorded = forward_kinematics(s.joints_before, g)
        div = math.sqrt(
            (actual.x - recorded.x) ** 2
            + (actual.y - recorded.y) ** 2
            + (actual.z - recorded.z) ** 2
        )
        divergences.append(div)
        state = sim_step(state, s.action, episode.period, g, episode.action_space)
    return ReplayReport(
        episode_id=episode.id,
        max_pose_divergence=max(divergences),
        per_step=divergences,
    )


# -- dataset ----------------------------------------------------------------

@dataclass
class DatasetIndex:
    episodes: dict  # id -> Episode
    episode_dirs: dict  # id -> str path
    train_ids: list
    val_ids: list
    bounds: ActionSpace
    seed: int
    total_steps: int

    @property
    def train_pairs(self):
        return [
            (eid, i)
            for eid in self.train_ids
            for i in range(len(self.episodes[eid].steps))
        ]

    @property
    def val_pairs(self):
        return [
            (eid, i)
            for eid in self.val_ids
            for i in range(len(self.episodes[eid].steps))
        ]


def build_dataset(
    episode_dirs,
    seed: int = 0,
    val_fraction: float = 0.1,
    divergence_threshold: float = 1e-4,
) -> DatasetIndex:
    """Load, validate and split episodes. Rejects the whole batch if any
    episode fails replay validation or carries out-of-bounds actions."""
    episodes = {}
    dirs = {}
    failures = []
    for d in episode_dirs:
        e = load_episode(d)
        report = replay_validate(e)
        if report.max_pose_divergence > divergence_threshold:
            failures.append(
                f"{e.id}: replay divergence {report.max_pose_divergence:.3e} m"
            )
            continue
        for s in e.steps:
            cont = s.action.continuous()
            bad = [
                name
                for name, v in zip(
                    ("dx", "dy", "dz", "droll", "dpitch", "dyaw", "gripper"), cont
                )
                if not -1.0 <= v <= 1.0
            ]
            if bad:
                failures.append(
                    f"{e.id}: step {s.index} action dimension(s) {bad} outside [-1, 1]"
                )
                break
        else:
            episodes[e.id] = e
            dirs[e.id] = str(d)
    if failures:
        raise EpisodeError("dataset rejected:\n  " + "\n  ".join(failures))
    if not episodes:
        raise EpisodeError("dataset rejected: no episodes")

    ids = sorted(episodes)
    rng = np.random.Generator(np.random.PCG64(seed))
    order = [ids[i] for i in rng.permutation(len(ids))]
    n_val = int(round(len(order) * val_fraction))
    val_ids = sorted(order[:n_val])
    train_ids = sorted(order[n_val:])
    total = sum(len(e.steps) for e in episodes.values())
    return DatasetIndex(
        episodes=episodes,
        episode_dirs=dirs,
        train_ids=train_ids,
        val_ids=val_ids,
        bounds=ActionSpace(),
        seed=seed,
        total_steps=total,
    )


def _history_frames(episode: Episode, step_idx: int, history_len: int = 6):
    lo = max(0, step_idx - history_len + 1)
    frames = [episode.steps[i].frame for i in range(lo, step_idx + 1)]
    while len(frames) < history_len:
        frames.insert(0, frames[0])
    return np.stack(frames)


_EMBED_CACHE = {}


def _cached_embedding(text):
    vec = _EMBED_CACHE.get(text)
    if vec is None:
        vec = _EMBED_CACHE[text] = embed_instruction(text).values
    return vec


def sample_batch(
    index: DatasetIndex,
    batch_size: int,
    seed: int,
    step_cursor: int,
    split: str = "train",
    bins: int = 256,
):
    """Uniform (episode, step) sampling; returns (frames u8 (B,6,H,W,3),
    embeddings (B,512) f32, targets (B,8) i64)."""
    from .policy import discretize_action

    if batch_size < 1:
        raise EpisodeError(f"batch_size must be >= 1, got {batch_size}")
    pairs = index.train_pairs if split == "train" else index.val_pairs
    if not pairs:
        raise EpisodeError(f"empty {split} split")
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, step_cursor])))
    picks = rng.integers(0, len(pairs), size=batch_size)
    frames, embs, targets = [], [], []
    for p in picks:
        eid, sidx = pairs[p]
        e = index.episodes[eid]
        frames.append(_history_frames(e, sidx))
        embs.append(_cached_embedding(e.instruction))
        targets.append(discretize_action(e.steps[sidx].action, bins))
    return (
        np.stack(frames),
        np.stack(embs).astype(np.float32),
        np.stack(targets).astype(np.int64),
    )
