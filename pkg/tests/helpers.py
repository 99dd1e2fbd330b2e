"""Shared scene builders for the test suite."""

from __future__ import annotations

import numpy as np

from humanscene.assembly import attach_humans
from humanscene.core import HumanAction, Layout, Scene, SceneObject


def obj(category, x, y, z=0.4, s=(0.4, 0.4, 0.4), yaw=0.0, action=HumanAction.NONE):
    return SceneObject(category, 0, action, Layout.from_yaw((x, y, z), s, yaw))


def scene_with_humans(objects, scene_type="livingroom") -> Scene:
    return attach_humans(Scene(scene_type, list(objects)))


def perturb(scene: Scene, rng: np.random.Generator, sigma: float = 0.35) -> Scene:
    """Jitter every object horizontally and re-seat the humans on their objects."""
    moved = []
    for o in scene.objects:
        dx, dy = rng.normal(0.0, sigma, 2)
        moved.append(SceneObject(o.category, o.feature_code, o.action, o.layout.moved(float(dx), float(dy)), o.asset_id))
    return attach_humans(Scene(scene.scene_type, moved, [], dict(scene.meta)))


# criterion id -> (passed, detail); printed by the terminal summary hook in conftest
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(passed), detail)
    assert passed, f"{criterion}: {detail}"
