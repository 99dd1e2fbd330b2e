"""Human-aware collision resolution.

For every placed human (in index order) and every other object (in index
order) whose box intersects the human's box:

* same category as the human's contact object: slide the object away along
  the horizontal ray from the human's centroid through the object's centroid;
* a functional-group partner of the contact object: slide it only when the
  footprint overlap reaches ``beta``, otherwise tolerate it;
* anything else: remove it, together with the human using it.

A human always travels with its contact object.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

from .core import (
    FunctionalGroups,
    Layout,
    OptimizerConfig,
    PlacedHuman,
    Scene,
    boxes_intersect_3d,
    footprint_overlap_area,
)

logger = logging.getLogger(__name__)

MOVED_SAME_CATEGORY = "MovedSameCategory"
MOVED_IN_GROUP = "MovedInGroup"
REMOVED = "Removed"
KEPT_BELOW_THRESHOLD = "KeptBelowThreshold"
RULES = (MOVED_SAME_CATEGORY, MOVED_IN_GROUP, REMOVED, KEPT_BELOW_THRESHOLD)


@dataclass(frozen=True)
class OptimizationEntry:
    human: int
    object: int
    rule: str
    displacement: tuple[float, float] = (0.0, 0.0)
    note: str = ""

    def to_dict(self) -> dict:
        d = {"human": self.human, "object": self.object, "rule": self.rule, "displacement": list(self.displacement)}
        if self.note:
            d["note"] = self.note
        return d


@dataclass
class OptimizationReport:
    """Entries refer to object / human indices of the scene handed to the pass."""

    entries: list[OptimizationEntry] = field(default_factory=list)
    passes: int = 0
    converged: bool = True

    @property
    def changes(self) -> list[OptimizationEntry]:
        return [e for e in self.entries if e.rule != KEPT_BELOW_THRESHOLD]

    @property
    def empty(self) -> bool:
        """True when the pass moved and removed nothing (tolerated overlaps do not count)."""
        return not self.changes

    @property
    def removed(self) -> list[int]:
        return [e.object for e in self.entries if e.rule == REMOVED]

    def to_dict(self) -> dict:
        return {"passes": self.passes, "converged": self.converged, "entries": [e.to_dict() for e in self.entries]}


def load_groups(path=None) -> FunctionalGroups:
    import json
    from importlib import resources
    from pathlib import Path

    text = Path(path).read_text() if path else resources.files("humanscene").joinpath("data", "functional_groups.json").read_text()
    return FunctionalGroups.from_pairs(json.loads(text)["pairs"])


def _direction(human: Layout, obj: Layout, rng: np.random.Generator) -> np.ndarray:
    d = np.array([obj.t[0] - human.t[0], obj.t[1] - human.t[1]])
    norm = float(np.hypot(*d))
    if norm < 1e-9:
        ang = rng.uniform(0.0, 2.0 * math.pi)
        return np.array([math.cos(ang), math.sin(ang)])
    return d / norm


def _slide(human: Layout, obj: Layout, cfg: OptimizerConfig, rng) -> tuple[float, float] | None:
    """Shortest displacement along the centroid ray that clears the human, or None."""
    d = _direction(human, obj, rng)
    hbox = human.box()

    def clear(dist):
        return not boxes_intersect_3d(hbox, obj.moved(d[0] * dist, d[1] * dist).box())

    k = 1
    while not clear(k * cfg.max_move_step):
        k += 1
        if k > cfg.max_attempts:
            return None
    lo, hi = (k - 1) * cfg.max_move_step, k * cfg.max_move_step
    while hi - lo > cfg.refine_tol:
        mid = 0.5 * (lo + hi)
        if clear(mid):
            hi = mid
        else:
            lo = mid
    return float(d[0] * hi), float(d[1] * hi)


def optimize_pass(
    scene: Scene,
    groups: FunctionalGroups,
    cfg: OptimizerConfig | None = None,
    pinned: Iterable[int] = (),
) -> tuple[Scene, OptimizationReport]:
    """One sweep of the nested human/object loops.

    ``pinned`` objects may never be moved or removed; when a pinned object
    would have to give way, the human's own (unpinned) contact object is
    removed instead. Humans whose contact object is pinned and whose
    intruder is pinned are left alone.
    """
    cfg = cfg or OptimizerConfig()
    rng = np.random.default_rng(cfg.seed)
    pinned = set(pinned)
    objects = list(scene.objects)
    layouts = [o.layout for o in objects]
    humans = list(scene.humans)
    h_layouts = [h.layout for h in humans]
    alive = [True] * len(objects)
    h_alive = [True] * len(humans)
    entries: list[OptimizationEntry] = []
    riders: dict[int, list[int]] = {}
    for k, h in enumerate(humans):
        riders.setdefault(h.contact_object_index, []).append(k)

    def remove(j: int, by_human: int, note: str = ""):
        alive[j] = False
        for k in riders.get(j, []):
            h_alive[k] = False
        # an object removed later in the pass is reported only as removed
        entries[:] = [e for e in entries if e.object != j]
        entries.append(OptimizationEntry(by_human, j, REMOVED, (0.0, 0.0), note))

    for hi, h in enumerate(humans):
        if not h_alive[hi]:
            continue
        c = h.contact_object_index
        c_cat = objects[c].category
        for j in range(len(objects)):
            if not h_alive[hi]:
                break
            if j == c or not alive[j]:
                continue
            hbox = h_layouts[hi].box()
            if not boxes_intersect_3d(hbox, layouts[j].box()):
                continue
            same = objects[j].category == c_cat
            in_group = not same and groups.contains(c_cat, objects[j].category)
            if in_group and footprint_overlap_area(hbox, layouts[j].box()) < cfg.beta:
                entries.append(OptimizationEntry(hi, j, KEPT_BELOW_THRESHOLD))
                continue
            if j in pinned:
                if c not in pinned:
                    remove(c, hi, f"contact object yields to pinned object {j}")
                continue
            if same or in_group:
                disp = _slide(h_layouts[hi], layouts[j], cfg, rng)
                if disp is None:
                    remove(j, hi, "no clearing move within the attempt limit")
                    continue
                layouts[j] = layouts[j].moved(*disp)
                for k in riders.get(j, []):
                    h_layouts[k] = h_layouts[k].moved(*disp)
                rule = MOVED_SAME_CATEGORY if same else MOVED_IN_GROUP
                entries.append(OptimizationEntry(hi, j, rule, disp))
            else:
                remove(j, hi)

    new_index = {}
    out_objects = []
    for j, o in enumerate(objects):
        if alive[j]:
            new_index[j] = len(out_objects)
            out_objects.append(o if layouts[j] is o.layout else replace(o, layout=layouts[j]))
    out_humans = []
    for k, h in enumerate(humans):
        if h_alive[k] and h.contact_object_index in new_index:
            out_humans.append(PlacedHuman(h.pose_id, new_index[h.contact_object_index], h_layouts[k]))
    out = Scene(scene.scene_type, out_objects, out_humans, dict(scene.meta))
    return out, OptimizationReport(entries, 1, True)


def optimize_scene(
    scene: Scene,
    groups: FunctionalGroups | None = None,
    cfg: OptimizerConfig | None = None,
    pinned: Iterable[int] = (),
) -> tuple[Scene, OptimizationReport]:
    """Repeat passes until one changes nothing or ``cfg.max_passes`` is reached.

    Entries from later passes are translated back to the input scene's object
    indices so the merged report is auditable against the input.
    """
    cfg = cfg or OptimizerConfig()
    groups = groups if groups is not None else load_groups()
    ids = list(range(len(scene.objects)))  # current position -> input index
    pinned_now = set(pinned)
    merged: list[OptimizationEntry] = []
    current = scene
    converged = False
    passes = 0
    for passes in range(1, cfg.max_passes + 1):
        h_ids = [ids[h.contact_object_index] for h in current.humans]
        current_next, rep = optimize_pass(current, groups, cfg, pinned_now)
        for e in rep.entries:
            merged.append(OptimizationEntry(h_ids[e.human], ids[e.object], e.rule, e.displacement, e.note))
        removed = set(rep.removed)
        ids = [i for pos, i in enumerate(ids) if pos not in removed]
        pinned_now = {p for p in (ids.index(i) if i in ids else None for i in pinned) if p is not None}
        current = current_next
        if rep.empty:
            converged = True
            break
    if not converged:
        logger.warning("optimisation did not settle within %d passes", cfg.max_passes)
    merged = _dedupe_kept(merged)
    return current, OptimizationReport(merged, passes, converged)


def _dedupe_kept(entries: list[OptimizationEntry]) -> list[OptimizationEntry]:
    seen = set()
    out = []
    for e in entries:
        if e.rule == KEPT_BELOW_THRESHOLD:
            key = (e.human, e.object)
            if key in seen:
                continue
            seen.add(key)
        out.append(e)
    return out


def postcondition_violations(scene: Scene, groups: FunctionalGroups, cfg: OptimizerConfig | None = None, pinned: Iterable[int] = ()) -> list[str]:
    """Every human/object pair that breaks one of the three rules, described in words."""
    cfg = cfg or OptimizerConfig()
    pinned = set(pinned)
    problems = []
    for k, h in enumerate(scene.humans):
        c = h.contact_object_index
        c_cat = scene.objects[c].category
        hbox = h.layout.box()
        for j, o in enumerate(scene.objects):
            if j == c or (j in pinned and c in pinned):
                continue
            obox = o.layout.box()
            if not boxes_intersect_3d(hbox, obox):
                continue
            if o.category == c_cat:
                problems.append(f"human {k} intersects same-category object {j}")
            elif groups.contains(c_cat, o.category):
                area = footprint_overlap_area(hbox, obox)
                if area >= cfg.beta:
                    problems.append(f"human {k} overlaps group partner {j} by {area:.3f} m^2")
            else:
                problems.append(f"human {k} intersects unrelated object {j}")
    return problems
