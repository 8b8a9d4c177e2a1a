"""Closed-loop rollouts, outcome taxonomy, result tables, validation traces.

Outcome labels for a pick attempt:
  Success   — target object ends the episode attached and lifted >= 5 cm.
  NearMiss  — a gripper closure happened with horizontal offset from the
              target in (0, 5] cm (the only machine-checkable signature of
              "correct movements, slightly off").
  NoAttempt — no closure ever happened within 10 cm of any object.
  Failure   — everything else.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import policy as pol
from .autodiff import no_grad
from .episodes import Episode, _cached_embedding
from .oracle import camera_from_spec
from .policy import ActionVector, PolicyConfig
from .sim.geometry import forward_kinematics
from .sim.render import frame_to_float, render
from .sim.world import SimState, scene_geometry, spawn_scene, step as sim_step

SUCCESS = "Success"
NEAR_MISS = "NearMiss"
FAILURE = "Failure"
NO_ATTEMPT = "NoAttempt"
LABELS = (SUCCESS, NEAR_MISS, FAILURE, NO_ATTEMPT)

LIFT_HEIGHT = 0.05  # m above the table that counts as picked up
NEAR_MISS_BAND = 0.05  # m, horizontal
NO_ATTEMPT_BAND = 0.10  # m, horizontal


class EvalError(ValueError):
    pass


@dataclass
class Trajectory:
    states: list  # len(actions) + 1 SimStates
    actions: list  # ActionVector issued at each state
    terminal_reason: str  # "terminate" | "step_cap" | "error"
    scene_spec: dict
    instruction: str
    target_id: str

    def __len__(self):
        return len(self.actions)


@dataclass
class Outcome:
    label: str
    target_object: str
    min_horizontal_miss: float = None  # populated for NearMiss


@dataclass
class ResultTable:
    counts: dict
    total: int

    @property
    def success_rate(self):
        return self.counts.get(SUCCESS, 0) / self.total if self.total else 0.0

    @property
    def success_or_near_miss_rate(self):
        if not self.total:
            return 0.0
        return (self.counts.get(SUCCESS, 0) + self.counts.get(NEAR_MISS, 0)) / self.total

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["label", "count"])
            for label in LABELS:
                w.writerow([label, self.counts.get(label, 0)])
            w.writerow(["Total", self.total])
            w.writerow(["success_rate", repr(self.success_rate)])
            w.writerow(["success_or_near_miss_rate", repr(self.success_or_near_miss_rate)])

    def to_text(self):
        lines = [f"{'Observation':<12} Amount"]
        for label in LABELS:
            lines.append(f"{label:<12} {self.counts.get(label, 0)}")
        lines.append(f"{'Total':<12} {self.total}")
        lines.append(f"success rate: {self.success_rate:.1%}")
        lines.append(f"success or near miss: {self.success_or_near_miss_rate:.1%}")
        return "\n".join(lines)


def make_result_table(labels) -> ResultTable:
    counts = {}
    for lb in labels:
        counts[lb] = counts.get(lb, 0) + 1
    return ResultTable(counts=counts, total=len(labels))


class PolicyRunner:
    """Greedy decoding of the policy over a growing frame history."""

    def __init__(self, params, cfg: PolicyConfig, instruction: str):
        self.params = params
        self.cfg = cfg
        self.embedding = _cached_embedding(instruction)[None, :]

    def action(self, frames_so_far) -> ActionVector:
        hist = pol.pad_history(frames_so_far, self.cfg.history_len)
        frames = frame_to_float(hist)[None, ...]
        with no_grad():
            seq = pol.encode_history(frames, self.embedding, self.params, self.cfg)
            logits = pol.predict_action(seq, self.params, self.cfg)
        bins = []
        for lg in logits:
            arr = lg.data[0]
            if not np.all(np.isfinite(arr)):
                raise EvalError("non-finite logits")
            bins.append(int(np.argmax(arr)))
        return pol.undiscretize(np.array(bins), self.cfg.bins)


def run_episode(
    params,
    policy_cfg: PolicyConfig,
    scene_spec: dict,
    instruction: str,
    target_id: str,
    cap: int = 40,
    scene_seed: int = 0,
    period: float = 5.0,
) -> Trajectory:
    """Roll the policy out in a freshly spawned scene."""
    geometry = scene_geometry(scene_spec)
    camera = camera_from_spec(scene_spec)
    state = spawn_scene(scene_spec, scene_seed)
    runner = PolicyRunner(params, policy_cfg, instruction)
    states = [state]
    actions = []
    frames = []
    reason = "step_cap"
    for _ in range(cap):
        frames.append(render(state, camera, geometry))
        try:
            action = runner.action(frames)
        except EvalError:
            reason = "error"
            break
        actions.append(action)
        state = sim_step(state, action, period, geometry)
        states.append(state)
        if action.terminate:
            reason = "terminate"
            break
    return Trajectory(
        states=states,
        actions=actions,
        terminal_reason=reason,
        scene_spec=scene_spec,
        instruction=instruction,
        target_id=target_id,
    )


def closure_events(traj: Trajectory):
    """(step, gripper pose, opening_before, opening_after) for every step on
    which the gripper closed through some object's grasp width."""
    geometry = scene_geometry(traj.scene_spec)
    events = []
    for i in range(len(traj.actions)):
        before = traj.states[i].joints.gripper
        after = traj.states[i + 1].joints.gripper
        if after < before:
            pose = forward_kinematics(traj.states[i + 1].joints, geometry)
            events.append((i, pose, before, after))
    return events


def _closed_through(before, after, width):
    return before >= width > after


def classify_outcome(traj: Trajectory, target_id: str = None) -> Outcome:
    """Map a finished trajectory to exactly one outcome label."""
    target_id = target_id or traj.target_id
    final = traj.states[-1]
    target = final.object_by_id(target_id)
    if (
        final.attached_object == target_id
        and target.z - final.table_height >= LIFT_HEIGHT
    ):
        return Outcome(label=SUCCESS, target_object=target_id)

    events = closure_events(traj)
    target_misses = []
    any_object_near = False
    for i, pose, before, after in events:
        state = traj.states[i + 1]
        for obj in state.objects:
            if not _closed_through(before, after, obj.grasp_width):
                continue
            d = math.hypot(pose.x - obj.x, pose.y - obj.y)
            if obj.id == target_id:
                target_misses.append(d)
            if d <= NO_ATTEMPT_BAND:
                any_object_near = True
    if target_misses and min(target_misses) <= NEAR_MISS_BAND:
        miss = max(min(target_misses), 1e-9)  # NearMiss miss distance is > 0
        return Outcome(label=NEAR_MISS, target_object=target_id, min_horizontal_miss=miss)
    if not any_object_near:
        return Outcome(label=NO_ATTEMPT, target_object=target_id)
    return Outcome(label=FAILURE, target_object=target_id)


def evaluate(
    params,
    policy_cfg: PolicyConfig,
    scenarios: list,
    runs_per_scenario: int,
    seed: int,
    cap: int = 40,
    log_path=None,
):
    """Seeded evaluation sweep. Each scenario is a dict with scene_spec,
    instruction and target_id. Returns (ResultTable, per-run log rows)."""
    if runs_per_scenario < 1:
        raise EvalError("runs_per_scenario must be >= 1")
    labels = []
    log_rows = []
    for si, scenario in enumerate(scenarios):
        for run in range(runs_per_scenario):
            scene_seed = int(
                np.random.SeedSequence([seed, si, run]).generate_state(1)[0]
            )
            traj = run_episode(
                params,
                policy_cfg,
                scenario["scene_spec"],
                scenario["instruction"],
                scenario["target_id"],
                cap=cap,
                scene_seed=scene_seed,
            )
            outcome = classify_outcome(traj)
            labels.append(outcome.label)
            log_rows.append(
                {
                    "scenario": si,
                    "run": run,
                    "scene_seed": scene_seed,
                    "label": outcome.label,
                    "miss_distance": outcome.min_horizontal_miss,
                    "steps": len(traj),
                    "terminal_reason": traj.terminal_reason,
                }
            )
    table = make_result_table(labels)
    if log_path:
        with open(log_path, "w") as f:
            for row in log_rows:
                f.write(json.dumps(row) + "\n")
    return table, log_rows


@dataclass
class TraceRow:
    step: int
    predicted: ActionVector
    ground_truth: ActionVector
    predicted_bins: np.ndarray
    ground_truth_bins: np.ndarray


def validation_trace(params, policy_cfg: PolicyConfig, episode: Episode) -> list:
    """Teacher-forced predictions against the episode's recorded actions."""
    runner = PolicyRunner(params, policy_cfg, episode.instruction)
    rows = []
    frames = []
    for s in episode.steps:
        frames.append(s.frame)
        predicted = runner.action(frames)
        rows.append(
            TraceRow(
                step=s.index,
                predicted=predicted,
                ground_truth=s.action,
                predicted_bins=pol.discretize_action(predicted, policy_cfg.bins),
                ground_truth_bins=pol.discretize_action(s.action, policy_cfg.bins),
            )
        )
    return rows


def trace_bin_agreement(rows) -> np.ndarray:
    """Per-dimension fraction of steps whose predicted bin matches."""
    pred = np.stack([r.predicted_bins for r in rows])
    gt = np.stack([r.ground_truth_bins for r in rows])
    return (pred == gt).mean(axis=0)


def trace_to_csv(rows, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "dim", "predicted", "ground_truth"])
        names = pol.CONTINUOUS_DIM_NAMES + ("terminate",)
        for r in rows:
            pv = r.predicted.to_array()
            gv = r.ground_truth.to_array()
            for d, name in enumerate(names):
                w.writerow([r.step, name, repr(float(pv[d])), repr(float(gv[d]))])


def object_choice_report(
    params,
    policy_cfg: PolicyConfig,
    scene_spec: dict,
    instruction: str,
    target_id: str,
    runs: int,
    seed: int,
    cap: int = 40,
) -> dict:
    """Which of two objects each run's closure lands nearest (within 5 cm)."""
    probe = spawn_scene(scene_spec, 0)
    if len(probe.objects) != 2:
        raise EvalError(f"object_choice_report needs exactly 2 objects, got {len(probe.objects)}")
    counts = {"target_attempts": 0, "distractor_attempts": 0, "no_attempt": 0}
    for run in range(runs):
        scene_seed = int(np.random.SeedSequence([seed, run]).generate_state(1)[0])
        traj = run_episode(
            params, policy_cfg, scene_spec, instruction, target_id,
            cap=cap, scene_seed=scene_seed,
        )
        best = (math.inf, None)
        for i, pose, before, after in closure_events(traj):
            state = traj.states[i + 1]
            for obj in state.objects:
                if not _closed_through(before, after, obj.grasp_width):
                    continue
                d = math.hypot(pose.x - obj.x, pose.y - obj.y)
                if d < best[0]:
                    best = (d, obj.id)
        if best[0] <= NEAR_MISS_BAND:
            key = "target_attempts" if best[1] == target_id else "distractor_attempts"
        else:
            key = "no_attempt"
        counts[key] += 1
    return counts
