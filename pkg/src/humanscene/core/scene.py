"""Scene graphs, assembled scenes and the canonical scene JSON format."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .geometry import UNIT_TOL, Layout
from .vocab import (
    ACTION_MASK,
    INVERSE_TABLE,
    RELATION_MASK,
    HumanAction,
    Predicate,
    SceneType,
    get_scene_type,
)


@dataclass(frozen=True)
class ObjectNode:
    category: int
    feature_code: int
    action: int


@dataclass(eq=False)
class SceneGraph:
    """Nodes {category, feature code, action} plus an n x n relation matrix.

    Masked attributes hold the sentinel index one past the last real value
    (N for categories, K for feature codes, 4 for actions, 11 for relations).
    ``edges[i, j] = p`` reads "node i is p of node j".
    """

    categories: np.ndarray
    features: np.ndarray
    actions: np.ndarray
    edges: np.ndarray
    num_categories: int
    num_features: int

    def __post_init__(self):
        self.categories = np.asarray(self.categories, dtype=np.int64).reshape(-1)
        self.features = np.asarray(self.features, dtype=np.int64).reshape(-1)
        self.actions = np.asarray(self.actions, dtype=np.int64).reshape(-1)
        n = len(self.categories)
        self.edges = np.asarray(self.edges, dtype=np.int64).reshape(n, n)
        if len(self.features) != n or len(self.actions) != n:
            raise ValueError("node attribute arrays disagree in length")
        if n and (
            self.categories.min() < 0
            or self.categories.max() > self.num_categories
            or self.features.min() < 0
            or self.features.max() > self.num_features
            or self.actions.min() < 0
            or self.actions.max() > ACTION_MASK
            or self.edges.min() < 0
            or self.edges.max() > RELATION_MASK
        ):
            raise ValueError("scene graph index out of range")

    @property
    def n(self) -> int:
        return len(self.categories)

    @property
    def nodes(self) -> list[ObjectNode]:
        return [ObjectNode(int(c), int(f), int(a)) for c, f, a in zip(self.categories, self.features, self.actions)]

    def is_clean(self) -> bool:
        return not (
            (self.categories == self.num_categories).any()
            or (self.features == self.num_features).any()
            or (self.actions == ACTION_MASK).any()
            or (self.edges == RELATION_MASK).any()
        )

    def is_symmetric(self) -> bool:
        inv = np.asarray(INVERSE_TABLE)
        n = self.n
        if n == 0:
            return True
        if not (np.diag(self.edges) == int(Predicate.NONE)).all():
            return False
        if (self.edges == RELATION_MASK).any():
            return False
        return bool((self.edges == inv[self.edges.T]).all())

    def copy(self) -> SceneGraph:
        return SceneGraph(
            self.categories.copy(), self.features.copy(), self.actions.copy(), self.edges.copy(),
            self.num_categories, self.num_features,
        )

    def permuted(self, perm) -> SceneGraph:
        perm = np.asarray(perm)
        return SceneGraph(
            self.categories[perm], self.features[perm], self.actions[perm], self.edges[np.ix_(perm, perm)],
            self.num_categories, self.num_features,
        )

    def same_as(self, other: SceneGraph) -> bool:
        return (
            self.n == other.n
            and np.array_equal(self.categories, other.categories)
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.actions, other.actions)
            and np.array_equal(self.edges, other.edges)
        )


@dataclass(frozen=True)
class SceneObject:
    category: str
    feature_code: int
    action: HumanAction
    layout: Layout
    asset_id: str | None = None


@dataclass(frozen=True)
class PlacedHuman:
    pose_id: str
    contact_object_index: int
    layout: Layout


@dataclass
class Scene:
    scene_type: str
    objects: list[SceneObject] = field(default_factory=list)
    humans: list[PlacedHuman] = field(default_factory=list)
    meta: dict[str, Any] = field(default_factory=dict)

    def type_info(self) -> SceneType:
        return get_scene_type(self.scene_type)

    def copy(self) -> Scene:
        return Scene(self.scene_type, list(self.objects), list(self.humans), json.loads(json.dumps(self.meta)))

    def with_objects(self, objects, humans=None) -> Scene:
        return replace(self, objects=list(objects), humans=list(self.humans if humans is None else humans))

    def to_dict(self) -> dict:
        return {
            "scene_type": self.scene_type,
            "objects": [
                _object_dict(o) for o in self.objects
            ],
            "humans": [
                {"pose_id": h.pose_id, "contact_object_index": h.contact_object_index, "layout": layout_to_dict(h.layout)}
                for h in self.humans
            ],
            "meta": self.meta,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return dumps_fixed(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, d: dict) -> Scene:
        objects = []
        for o in d.get("objects", []):
            objects.append(
                SceneObject(
                    category=o["category"],
                    feature_code=int(o["feature_code"]),
                    action=HumanAction.parse(o["action"]) if isinstance(o["action"], str) else HumanAction(o["action"]),
                    layout=layout_from_dict(o["layout"]),
                    asset_id=o.get("asset_id"),
                )
            )
        humans = [
            PlacedHuman(h["pose_id"], int(h["contact_object_index"]), layout_from_dict(h["layout"]))
            for h in d.get("humans", [])
        ]
        return cls(d["scene_type"], objects, humans, dict(d.get("meta", {})))

    @classmethod
    def from_json(cls, text: str) -> Scene:
        return cls.from_dict(json.loads(text))


def _object_dict(o: SceneObject) -> dict:
    d = {
        "category": o.category,
        "feature_code": int(o.feature_code),
        "action": action_name(o.action),
        "layout": layout_to_dict(o.layout),
    }
    if o.asset_id is not None:
        d["asset_id"] = o.asset_id
    return d


def action_name(a: HumanAction | int) -> str:
    return HumanAction(a).name.lower()


def layout_to_dict(layout: Layout) -> dict:
    return {"t": list(layout.t), "s": list(layout.s), "rot": list(layout.rot)}


def layout_from_dict(d: dict) -> Layout:
    # 6-decimal rotation pairs are unit only to ~1e-6; keep them verbatim so
    # that load -> dump reproduces the text, renormalise anything worse
    c, s = (float(v) for v in d["rot"])
    if abs(c * c + s * s - 1.0) <= UNIT_TOL:
        return Layout(tuple(d["t"]), tuple(d["s"]), (c, s))
    return Layout.from_vector([*d["t"], *d["s"], c, s])


def _fmt_float(x: float) -> str:
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite float {x}")
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def dumps_fixed(obj: Any, indent: int | None = 2) -> str:
    """JSON with insertion-ordered keys and every float at 6 decimals."""
    out: list[str] = []

    def emit(o, level):
        pad = "" if indent is None else "\n" + " " * (indent * (level + 1))
        end = "" if indent is None else "\n" + " " * (indent * level)
        sep = ", " if indent is None else ","
        if isinstance(o, bool) or o is None:
            out.append(json.dumps(o))
        elif isinstance(o, (int, np.integer)):
            out.append(str(int(o)))
        elif isinstance(o, (float, np.floating)):
            out.append(_fmt_float(float(o)))
        elif isinstance(o, str):
            out.append(json.dumps(o, ensure_ascii=False))
        elif isinstance(o, dict):
            if not o:
                out.append("{}")
                return
            out.append("{")
            for i, (k, v) in enumerate(o.items()):
                if i:
                    out.append(sep)
                out.append(pad + json.dumps(str(k)) + ": ")
                emit(v, level + 1)
            out.append(end + "}")
        elif isinstance(o, (list, tuple, np.ndarray)):
            seq = list(o)
            if not seq:
                out.append("[]")
                return
            if all(isinstance(v, (int, float, np.integer, np.floating)) and not isinstance(v, bool) for v in seq):
                out.append("[" + ", ".join(_fmt_float(float(v)) if isinstance(v, (float, np.floating)) else str(int(v)) for v in seq) + "]")
                return
            out.append("[")
            for i, v in enumerate(seq):
                if i:
                    out.append(sep)
                out.append(pad)
                emit(v, level + 1)
            out.append(end + "]")
        else:
            raise TypeError(f"cannot serialise {type(o).__name__}")

    emit(obj, 0)
    return "".join(out)
