"""Outcome taxonomy: sharp label boundaries, totality, result tables."""
import math
from dataclasses import replace

import numpy as np
import pytest

from svla.evaluate import (
    FAILURE,
    LABELS,
    NEAR_MISS,
    NO_ATTEMPT,
    SUCCESS,
    Trajectory,
    classify_outcome,
    make_result_table,
)
from svla.policy import ActionVector
from svla.sim.geometry import Pose, RobotGeometry, inverse_kinematics
from svla.sim.world import ObjectState, SimState

from conftest import FIXED_SCENE, INSTRUCTION

G = RobotGeometry()
TARGET = ObjectState(id="banana", kind="banana", x=0.35, y=0.05, z=0.018)
DISTRACTOR = ObjectState(id="can", kind="coke_can", x=0.30, y=-0.12, z=0.058)


def joints_at(x, y, z=0.05, gripper=0.09):
    j = inverse_kinematics(Pose(x=x, y=y, z=z), G)
    return replace(j, gripper=gripper)


def closure_traj(offset, objects=(TARGET,), attached=None, lift_z=0.05):
    """Two-step trajectory closing the gripper `offset` metres from the target."""
    x, y = TARGET.x + offset, TARGET.y
    s0 = SimState(joints=joints_at(x, y, gripper=0.09), objects=tuple(objects))
    objects_after = tuple(
        replace(o, z=lift_z) if attached == o.id else o for o in objects
    )
    s1 = SimState(
        joints=joints_at(x, y, gripper=0.0),
        objects=objects_after,
        attached_object=attached,
    )
    return Trajectory(
        states=[s0, s1],
        actions=[ActionVector(gripper=-1.0, terminate=True)],
        terminal_reason="terminate",
        scene_spec=dict(FIXED_SCENE),
        instruction=INSTRUCTION,
        target_id="banana",
    )


def test_success_requires_attachment_and_lift():
    traj = closure_traj(0.0, attached="banana", lift_z=0.08)
    assert classify_outcome(traj).label == SUCCESS
    low = closure_traj(0.0, attached="banana", lift_z=0.03)  # below 5 cm
    assert classify_outcome(low).label != SUCCESS


def test_near_miss_boundary_sharp():
    assert classify_outcome(closure_traj(0.049)).label == NEAR_MISS
    assert classify_outcome(closure_traj(0.051)).label == FAILURE


def test_no_attempt_boundary_sharp():
    assert classify_outcome(closure_traj(0.099)).label == FAILURE
    assert classify_outcome(closure_traj(0.101)).label == NO_ATTEMPT


def test_near_miss_records_distance():
    out = classify_outcome(closure_traj(0.03))
    assert out.label == NEAR_MISS
    assert out.min_horizontal_miss == pytest.approx(0.03, abs=1e-6)


def test_no_closure_is_no_attempt():
    s0 = SimState(joints=joints_at(0.35, 0.05, gripper=0.09), objects=(TARGET,))
    s1 = SimState(joints=joints_at(0.33, 0.05, gripper=0.09), objects=(TARGET,))
    traj = Trajectory(
        states=[s0, s1],
        actions=[ActionVector(dx=-0.4, gripper=1.0)],
        terminal_reason="step_cap",
        scene_spec=dict(FIXED_SCENE),
        instruction=INSTRUCTION,
        target_id="banana",
    )
    assert classify_outcome(traj).label == NO_ATTEMPT


def test_closure_near_distractor_only_is_failure():
    """Grabbing at the wrong object: an attempt, but not at the target."""
    x, y = DISTRACTOR.x, DISTRACTOR.y
    s0 = SimState(joints=joints_at(x, y, gripper=0.09), objects=(TARGET, DISTRACTOR))
    s1 = SimState(joints=joints_at(x, y, gripper=0.0), objects=(TARGET, DISTRACTOR))
    traj = Trajectory(
        states=[s0, s1],
        actions=[ActionVector(gripper=-1.0, terminate=True)],
        terminal_reason="terminate",
        scene_spec=dict(FIXED_SCENE),
        instruction=INSTRUCTION,
        target_id="banana",
    )
    assert classify_outcome(traj).label == FAILURE


@pytest.mark.parametrize("offset", [0.0, 0.02, 0.049, 0.05, 0.051, 0.08, 0.099, 0.101, 0.15])
def test_classifier_total(offset):
    """Every trajectory maps to exactly one of the four labels."""
    out = classify_outcome(closure_traj(offset))
    assert out.label in LABELS


def test_result_table_rates_and_formats(tmp_path):
    table = make_result_table(
        [SUCCESS] * 3 + [NEAR_MISS] * 2 + [FAILURE] * 4 + [NO_ATTEMPT]
    )
    assert table.total == 10
    assert table.success_rate == pytest.approx(0.3)
    assert table.success_or_near_miss_rate == pytest.approx(0.5)
    text = table.to_text()
    for label in LABELS:
        assert label in text
    assert "Total" in text
    table.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "label,count"
    assert "Success,3" in lines


def test_empty_table():
    table = make_result_table([])
    assert table.success_rate == 0.0 and table.success_or_near_miss_rate == 0.0
