"""Geometric relation rules, iRecall and scene-quality statistics."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (
    Layout,
    Predicate,
    Scene,
    boxes_intersect_3d,
    footprints_overlap,
)


@dataclass(frozen=True)
class RelationRuleConfig:
    d_close: float = 1.0
    epsilon: float = 0.05
    vertical_margin: float = 0.05

    def __post_init__(self):
        if min(self.d_close, self.epsilon, self.vertical_margin) <= 0:
            raise ValueError("relation thresholds must be positive")


DEFAULT_RULES = RelationRuleConfig()

_DIRECTIONAL = {
    # (axis, sign) -> (far, close)
    ("x", -1): (Predicate.LEFT_OF, Predicate.CLOSELY_LEFT_OF),
    ("x", 1): (Predicate.RIGHT_OF, Predicate.CLOSELY_RIGHT_OF),
    ("y", 1): (Predicate.IN_FRONT_OF, Predicate.CLOSELY_IN_FRONT_OF),
    ("y", -1): (Predicate.BEHIND, Predicate.CLOSELY_BEHIND),
}


def relation_between(a: Layout, b: Layout, cfg: RelationRuleConfig = DEFAULT_RULES) -> Predicate:
    """The single predicate p such that "b is p of a".

    Offsets are measured in the shared room frame, so swapping the arguments
    always yields the inverse predicate.
    """
    ta, tb = a.t, b.t
    box_a, box_b = a.box(), b.box()
    if footprints_overlap(box_a, box_b):
        a_lo, a_hi = box_a.z_range
        b_lo, b_hi = box_b.z_range
        if tb[2] > ta[2] and b_lo >= a_hi - cfg.vertical_margin:
            return Predicate.ABOVE
        if tb[2] < ta[2] and b_hi <= a_lo + cfg.vertical_margin:
            return Predicate.BELOW
    dx, dy = tb[0] - ta[0], tb[1] - ta[1]
    if abs(dx) >= abs(dy):
        axis, offset = "x", dx
    else:
        axis, offset = "y", dy
    if abs(offset) <= cfg.epsilon:
        return Predicate.NONE
    far, close = _DIRECTIONAL[(axis, 1 if offset > 0 else -1)]
    dist = math.dist(ta, tb)
    return close if dist < cfg.d_close else far


def check_relation(a: Layout, b: Layout, p: Predicate | int, cfg: RelationRuleConfig = DEFAULT_RULES) -> bool:
    return relation_between(a, b, cfg) == Predicate(p)


def relation_matrix(layouts: Sequence[Layout], cfg: RelationRuleConfig = DEFAULT_RULES) -> np.ndarray:
    """edges[i, j] = predicate such that object i is that predicate of object j."""
    n = len(layouts)
    edges = np.full((n, n), int(Predicate.NONE), dtype=np.int64)
    for i in range(n):
        for j in range(n):
            if i != j:
                edges[i, j] = int(relation_between(layouts[j], layouts[i], cfg))
    return edges


def triplet_satisfied(subject: str, predicate: Predicate, obj: str, scene: Scene, cfg=DEFAULT_RULES) -> bool:
    subs = [o for o in scene.objects if o.category == subject]
    objs = [o for o in scene.objects if o.category == obj]
    for s in subs:
        for o in objs:
            if s is o:
                continue
            if check_relation(o.layout, s.layout, predicate, cfg):
                return True
    return False


def irecall(triplets: Iterable, scene: Scene, cfg: RelationRuleConfig = DEFAULT_RULES) -> float:
    """Fraction of prompt triplets geometrically realised somewhere in the scene."""
    triplets = list(triplets)
    if not triplets:
        return 1.0
    hits = sum(triplet_satisfied(t.subject, t.predicate, t.object, scene, cfg) for t in triplets)
    return hits / len(triplets)


def scene_stats(scene: Scene) -> dict:
    objs = scene.objects
    boxes = [o.layout.box() for o in objs]
    collisions = 0
    for i in range(len(boxes)):
        for j in range(i + 1, len(boxes)):
            if boxes_intersect_3d(boxes[i], boxes[j]):
                collisions += 1
    violations = 0
    for h in scene.humans:
        hb = h.layout.box()
        for j, b in enumerate(boxes):
            if j != h.contact_object_index and boxes_intersect_3d(hb, b):
                violations += 1
    hist = Counter(o.category for o in objs)
    return {
        "collisions": collisions,
        "human_object_violations": violations,
        "category_histogram": dict(sorted(hist.items())),
    }


def format_table(rows: list[dict], columns: Sequence[str]) -> str:
    """Aligned plain-text table; floats shown with 4 decimals."""

    def cell(v):
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    cells = [[cell(r.get(c, "")) for c in columns] for r in rows]
    widths = [max([len(c)] + [len(row[i]) for row in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(row, widths)))
    return "\n".join(lines)
