"""Kinematics, world stepping, grasping, scene spawning, rendering."""
import math

import numpy as np
import pytest
from PIL import Image

from svla.policy import ActionVector
from svla.sim.geometry import (
    JointLimitError,
    JointState,
    Pose,
    RobotGeometry,
    UnreachableError,
    elbow_position,
    forward_kinematics,
    inverse_kinematics,
    reachable,
)
from svla.sim.render import CameraSpec, frame_to_float, render
from svla.sim.world import (
    DEFAULT_HOME,
    ObjectState,
    SimError,
    SimState,
    make_state,
    scene_geometry,
    spawn_scene,
    step,
)

G = RobotGeometry()


def random_reachable_pose(rng, branch):
    """Rejection-sample a pose inside the kidney workspace."""
    while True:
        r = rng.uniform(G.r_min + 1e-4, G.r_max - 1e-4)
        th = rng.uniform(-math.pi, math.pi)
        x, y = r * math.cos(th), r * math.sin(th)
        if reachable(x, y, G, branch):
            return Pose(
                x=x,
                y=y,
                z=rng.uniform(G.z_min, G.z_max),
                yaw=rng.uniform(-G.wrist_yaw_limit, G.wrist_yaw_limit),
                pitch=rng.uniform(G.pitch_min, G.pitch_max),
                roll=rng.uniform(-G.roll_limit, G.roll_limit),
            )


@pytest.mark.parametrize("branch", ["elbow_up", "elbow_down"])
def test_fk_ik_roundtrip(branch):
    rng = np.random.default_rng(0 if branch == "elbow_up" else 1)
    worst = 0.0
    for _ in range(1000):
        target = random_reachable_pose(rng, branch)
        j = inverse_kinematics(target, G, branch)
        back = forward_kinematics(j, G)
        err = math.sqrt(
            (back.x - target.x) ** 2 + (back.y - target.y) ** 2 + (back.z - target.z) ** 2
        )
        worst = max(worst, err)
        assert back.yaw == target.yaw and back.pitch == target.pitch
    assert worst < 1e-9


def test_spindle_coupling_yaw_invariant_to_elbow():
    """World yaw stays fixed across a full elbow sweep (coupled spindle)."""
    yaw_cmd = 0.4
    drift = 0.0
    for elbow in np.linspace(-G.elbow_limit, G.elbow_limit, 500):
        j = JointState(shoulder=0.2, elbow=float(elbow), wrist_yaw_cmd=yaw_cmd, z=0.1)
        drift = max(drift, abs(forward_kinematics(j, G).yaw - yaw_cmd))
    assert drift < 1e-12


def test_fk_known_positions():
    straight = forward_kinematics(JointState(z=0.1), G)
    assert abs(straight.x - (G.l1 + G.l2)) < 1e-12 and abs(straight.y) < 1e-12
    bent = forward_kinematics(JointState(elbow=math.pi / 2, z=0.1), G)
    assert abs(bent.x - G.l1) < 1e-12 and abs(bent.y - G.l2) < 1e-12


def test_fk_enforces_limits():
    with pytest.raises(JointLimitError, match="elbow"):
        forward_kinematics(JointState(elbow=math.radians(151)), G)
    with pytest.raises(JointLimitError, match="z"):
        forward_kinematics(JointState(z=1.0), G)


def test_ik_annulus_errors():
    with pytest.raises(UnreachableError, match="kidney"):
        inverse_kinematics(Pose(x=0.6, y=0.0, z=0.1), G)
    with pytest.raises(UnreachableError, match="z"):
        inverse_kinematics(Pose(x=0.3, y=0.0, z=5.0), G)
    with pytest.raises(Exception, match="branch"):
        inverse_kinematics(Pose(x=0.3, y=0.0, z=0.1), G, branch="sideways")


def test_reachable_respects_joint_limits():
    # annulus-interior point excluded by the elbow limit (tight radius)
    assert not reachable(0.02, 0.0, G)
    assert reachable(0.35, 0.05, G)
    assert not reachable(0.6, 0.0, G)  # outside annulus
    # behind the base: shoulder limit cuts the kidney
    assert not reachable(-0.45, 0.0, G)


def test_elbow_position():
    x, y = elbow_position(JointState(shoulder=math.pi / 2), G)
    assert abs(x) < 1e-12 and abs(y - G.l1) < 1e-12


def test_geometry_roundtrip_and_validation():
    assert RobotGeometry.from_dict(G.to_dict()) == G
    with pytest.raises(Exception):
        RobotGeometry(l1=-1.0)
    with pytest.raises(Exception):
        RobotGeometry(z_min=1.0, z_max=0.5)


# -- world stepping ---------------------------------------------------------

def home_state(objects=()):
    return make_state(DEFAULT_HOME, objects)


def test_step_moves_by_denormalized_delta():
    s = home_state()
    before = forward_kinematics(s.joints, G)
    s2 = step(s, ActionVector(dx=-0.5, dy=0.2, gripper=1.0), 5.0, G)
    after = forward_kinematics(s2.joints, G)
    assert abs((after.x - before.x) - (-0.5 * 0.05)) < 1e-9
    assert abs((after.y - before.y) - (0.2 * 0.05)) < 1e-9
    assert s2.clock == 5.0
    assert not s2.last_step_clamped


def test_step_clamps_at_workspace_boundary():
    s = home_state()
    for _ in range(10):
        s = step(s, ActionVector(dx=1.0, gripper=1.0), 5.0, G)
    pose = forward_kinematics(s.joints, G)
    r = math.hypot(pose.x, pose.y)
    assert r <= G.r_max + 1e-6
    assert s.last_step_clamped


def test_step_preserves_elbow_branch():
    s = home_state()
    assert s.joints.elbow > 0
    for _ in range(8):
        s = step(s, ActionVector(dx=-0.4, dy=0.3, gripper=1.0), 5.0, G)
        assert s.joints.elbow >= 0


def test_step_rejects_nan_action():
    with pytest.raises(SimError, match="NaN"):
        step(home_state(), ActionVector(dx=float("nan")), 5.0, G)


def test_gripper_maps_normalized_to_opening():
    s = step(home_state(), ActionVector(gripper=-1.0), 5.0, G)
    assert abs(s.joints.gripper - 0.0) < 1e-12
    s = step(s, ActionVector(gripper=1.0), 5.0, G)
    assert abs(s.joints.gripper - 0.09) < 1e-12
    s = step(s, ActionVector(gripper=0.0), 5.0, G)
    assert abs(s.joints.gripper - 0.045) < 1e-12


def grasp_scene():
    pose = forward_kinematics(DEFAULT_HOME, G)
    obj = ObjectState(id="banana", kind="banana", x=pose.x, y=pose.y, z=0.0)
    return home_state([obj])


def test_grasp_attach_carry_release():
    s = grasp_scene()
    obj0 = s.object_by_id("banana")
    # descend to object height, then close
    for _ in range(3):
        s = step(s, ActionVector(dz=-1.0, gripper=1.0), 5.0, G)
    s = step(s, ActionVector(gripper=-1.0), 5.0, G)
    assert s.attached_object == "banana"
    # lift: object rides the gripper
    s = step(s, ActionVector(dz=1.0, gripper=-1.0), 5.0, G)
    assert s.object_by_id("banana").z > obj0.z + 0.02
    # translate: object follows horizontally
    x_before = s.object_by_id("banana").x
    s = step(s, ActionVector(dx=-0.5, gripper=-1.0), 5.0, G)
    assert abs((s.object_by_id("banana").x - x_before) - (-0.025)) < 1e-9
    # open: object drops back to rest height
    s = step(s, ActionVector(gripper=1.0), 5.0, G)
    assert s.attached_object is None
    assert abs(s.object_by_id("banana").z - obj0.z) < 1e-12


def test_grasp_requires_closing_transition():
    """An already-closed gripper moving over the object must not grab it."""
    s = grasp_scene()
    s = step(s, ActionVector(dx=-0.5, gripper=-1.0), 5.0, G)  # close far away
    for _ in range(3):
        s = step(s, ActionVector(dz=-1.0, gripper=-1.0), 5.0, G)
    s = step(s, ActionVector(dx=0.5, gripper=-1.0), 5.0, G)  # slide back over it
    assert s.attached_object is None


def test_grasp_requires_proximity():
    s = grasp_scene()
    s = step(s, ActionVector(dx=-1.0, gripper=1.0), 5.0, G)  # 5 cm away
    for _ in range(3):
        s = step(s, ActionVector(dz=-1.0, gripper=1.0), 5.0, G)
    s = step(s, ActionVector(gripper=-1.0), 5.0, G)
    assert s.attached_object is None


# -- scenes -----------------------------------------------------------------

def test_spawn_fixed_pose():
    spec = {"objects": [{"id": "a", "kind": "coke_can", "pose": [0.3, 0.1, 0.5]}]}
    s = spawn_scene(spec, seed=0)
    obj = s.object_by_id("a")
    assert (obj.x, obj.y, obj.yaw) == (0.3, 0.1, 0.5)
    assert abs(obj.z - 0.058) < 1e-12  # rests on table at half-height


def test_spawn_region_deterministic_and_reachable():
    spec = {
        "objects": [
            {"id": "a", "kind": "banana", "region": [0.30, 0.40, -0.05, 0.05]},
            {"id": "b", "kind": "coke_can", "region": [0.30, 0.40, -0.05, 0.05]},
        ]
    }
    s1 = spawn_scene(spec, seed=42)
    s2 = spawn_scene(spec, seed=42)
    assert s1.objects == s2.objects
    s3 = spawn_scene(spec, seed=43)
    assert s1.objects != s3.objects
    a, b = s1.objects
    assert reachable(a.x, a.y, G) and reachable(b.x, b.y, G)
    assert math.hypot(a.x - b.x, a.y - b.y) >= 0.08
    assert 0.30 <= a.x <= 0.40 and -0.05 <= a.y <= 0.05


def test_spawn_malformed_specs():
    with pytest.raises(SimError, match="malformed"):
        spawn_scene({"no_objects": []}, 0)
    with pytest.raises(SimError, match="duplicate"):
        spawn_scene(
            {"objects": [{"id": "a", "kind": "banana", "pose": [0.3, 0, 0]},
                          {"id": "a", "kind": "banana", "pose": [0.35, 0, 0]}]}, 0
        )
    with pytest.raises(SimError, match="neither pose nor region"):
        spawn_scene({"objects": [{"id": "a", "kind": "banana"}]}, 0)


def test_scene_geometry_override():
    assert scene_geometry({"objects": []}) == G
    g2 = scene_geometry({"objects": [], "geometry": {"l1": 0.3, "l2": 0.2}})
    assert g2.l1 == 0.3 and g2.l2 == 0.2


# -- rendering --------------------------------------------------------------

def test_render_deterministic_uint8():
    s = spawn_scene(
        {"objects": [{"id": "a", "kind": "banana", "pose": [0.35, 0.05, 0.3]}]}, 0
    )
    cam = CameraSpec(preset="side")
    f1 = render(s, cam, G)
    f2 = render(s, cam, G)
    assert f1.dtype == np.uint8 and f1.shape == (144, 144, 3)
    assert np.array_equal(f1, f2)


def test_render_png_roundtrip_exact(tmp_path):
    s = spawn_scene(
        {"objects": [{"id": "a", "kind": "coke_can", "pose": [0.3, -0.1, 0.0]}]}, 0
    )
    frame = render(s, CameraSpec(preset="top"), G)
    p = tmp_path / "f.png"
    Image.fromarray(frame).save(p)
    back = np.asarray(Image.open(p).convert("RGB"))
    assert np.array_equal(frame, back)


def test_render_depends_on_state():
    spec = {"objects": [{"id": "a", "kind": "banana", "pose": [0.35, 0.05, 0.3]}]}
    s = spawn_scene(spec, 0)
    cam = CameraSpec(preset="top")
    f1 = render(s, cam, G)
    s2 = step(s, ActionVector(dx=-1.0, gripper=1.0), 5.0, G)
    f2 = render(s2, cam, G)
    assert not np.array_equal(f1, f2)


def test_render_presets_and_camera_roundtrip():
    s = spawn_scene({"objects": []}, 0)
    frames = {p: render(s, CameraSpec(preset=p), G) for p in ("side", "top", "front")}
    assert not np.array_equal(frames["side"], frames["top"])
    cam = CameraSpec(preset="front", resolution=64)
    assert CameraSpec.from_dict(cam.to_dict()) == cam
    assert render(s, cam, G).shape == (64, 64, 3)


def test_frame_to_float_range():
    u8 = np.array([[[0, 128, 255]]], dtype=np.uint8)
    f = frame_to_float(u8)
    assert f.dtype == np.float32
    assert abs(f[0, 0, 0] - 0.0) < 1e-7
    assert abs(f[0, 0, 2] - 1.0) < 1e-7
