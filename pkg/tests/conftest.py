import numpy as np
import pytest

from svla.policy import PolicyConfig


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# One fixed-pose object so oracle demos and rollouts are cheap and stable.
FIXED_SCENE = {
    "camera": "top",
    "objects": [
        {"id": "banana", "kind": "banana", "pose": [0.35, 0.05, 0.3]},
    ],
}

REGION_SCENE = {
    "camera": "top",
    "objects": [
        {"id": "banana", "kind": "banana", "region": [0.32, 0.38, 0.02, 0.08]},
    ],
}

INSTRUCTION = "pick up the banana"


@pytest.fixture
def fixed_scene():
    return {k: (list(v) if isinstance(v, list) else v) for k, v in FIXED_SCENE.items()}


@pytest.fixture
def region_scene():
    return {k: (list(v) if isinstance(v, list) else v) for k, v in REGION_SCENE.items()}


def tiny_config(**overrides):
    """A policy small enough for gradient checks and shape tests."""
    base = dict(
        image_size=24,
        stage_channels=(8, 16),
        stage_pads=(1, 1),
        history_len=2,
        tokens_per_frame=4,
        num_blocks=2,
        num_heads=2,
        mlp_ratio=2,
        bins=16,
    )
    base.update(overrides)
    return PolicyConfig(**base)


@pytest.fixture
def demo_episode(fixed_scene):
    from svla.oracle import run_oracle_episode

    return run_oracle_episode(
        fixed_scene,
        seed=11,
        instruction=INSTRUCTION,
        episode_id="ep-demo",
        target_id="banana",
    )
