"""Asset catalog, feature codebook, retrieval, human pose proxies and scene assembly."""

from __future__ import annotations

import difflib
import hashlib
import json
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    HumanAction,
    Layout,
    OrientedBox,
    PlacedHuman,
    Scene,
    SceneGraph,
    SceneObject,
    all_categories,
    get_scene_type,
    normalize_category,
)

logger = logging.getLogger(__name__)

FEATURE_DIM = 32
CODEBOOK_SIZE = 64
STYLE_WORDS = ("white", "black", "gray", "brown", "wooden", "modern", "vintage", "minimalist")


class InsufficientData(ValueError):
    pass


class EmptyCategory(LookupError):
    pass


def _data_path(name: str):
    return resources.files("humanscene").joinpath("data", name)


def _unit(v: np.ndarray) -> np.ndarray:
    n = float(np.linalg.norm(v))
    if n == 0.0:
        raise ValueError("cannot normalise a zero vector")
    return v / n


def _word_vector(word: str, dim: int = FEATURE_DIM) -> np.ndarray:
    seed = int.from_bytes(hashlib.blake2b(word.encode("utf-8"), digest_size=8).digest(), "little")
    return _unit(np.random.default_rng(seed).normal(size=dim))


def style_vector(words: Sequence[str], dim: int = FEATURE_DIM) -> np.ndarray:
    """Unit vector for a set of style adjectives (sum of per-word hash vectors)."""
    words = [w.lower() for w in words if w]
    if not words:
        raise ValueError("no style words")
    return _unit(sum(_word_vector("style:" + w, dim) for w in words))


# ---------------------------------------------------------------- catalog


@dataclass(frozen=True)
class Asset:
    id: str
    category: str
    feature: np.ndarray
    size: np.ndarray
    mesh_ref: str | None = None
    style: str | None = None

    def __post_init__(self):
        feat = np.asarray(self.feature, dtype=np.float64).reshape(-1)
        size = np.asarray(self.size, dtype=np.float64).reshape(3)
        if abs(float(np.linalg.norm(feat)) - 1.0) > 1e-6:
            raise ValueError(f"asset {self.id}: feature must be unit length")
        if (size <= 0).any():
            raise ValueError(f"asset {self.id}: size must be positive")
        object.__setattr__(self, "feature", feat)
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "category", normalize_category(self.category))

    def to_dict(self) -> dict:
        d = {"id": self.id, "category": self.category, "feature": [float(x) for x in self.feature], "size": [float(x) for x in self.size]}
        if self.mesh_ref is not None:
            d["mesh"] = self.mesh_ref
        if self.style is not None:
            d["style"] = self.style
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Asset:
        return cls(d["id"], d["category"], np.asarray(d["feature"], dtype=np.float64), np.asarray(d["size"]), d.get("mesh"), d.get("style"))


class AssetCatalog:
    def __init__(self, assets: Sequence[Asset]):
        self.assets = tuple(assets)
        ids = [a.id for a in self.assets]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate asset ids in catalog")
        self._by_category: dict[str, list[Asset]] = {}
        for a in self.assets:
            self._by_category.setdefault(a.category, []).append(a)

    def __len__(self) -> int:
        return len(self.assets)

    @property
    def categories(self) -> list[str]:
        return sorted(self._by_category)

    def in_category(self, category: str) -> list[Asset]:
        return list(self._by_category.get(normalize_category(category), []))

    def by_id(self, asset_id: str) -> Asset:
        for a in self.assets:
            if a.id == asset_id:
                return a
        raise KeyError(asset_id)

    def features(self) -> np.ndarray:
        return np.stack([a.feature for a in self.assets])

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps([a.to_dict() for a in self.assets], indent=1))

    @classmethod
    def load(cls, path: str | Path) -> AssetCatalog:
        return cls([Asset.from_dict(d) for d in json.loads(Path(path).read_text())])


@lru_cache(maxsize=None)
def category_table() -> dict[str, dict]:
    raw = json.loads(_data_path("category_sizes.json").read_text())
    return {normalize_category(k): v for k, v in raw.items() if not k.startswith("_")}


def generate_catalog(seed: int = 0, variants: int = 2, styles: Sequence[str] = STYLE_WORDS, size_jitter: float = 0.15) -> AssetCatalog:
    """Procedural stand-in for a furniture model database.

    Each asset's feature is dominated by its style word with a weaker
    category component and a little noise, so style adjectives in a prompt
    steer retrieval while assets of one category remain distinguishable.
    """
    rng = np.random.default_rng(seed)
    table = category_table()
    assets = []
    for cat in all_categories():
        base = np.asarray(table[cat]["size"], dtype=np.float64)
        cat_vec = _word_vector("category:" + cat)
        for style in styles:
            for v in range(variants):
                noise = rng.normal(size=FEATURE_DIM) * 0.08
                feat = _unit(style_vector([style]) + 0.35 * cat_vec + noise)
                size = np.round(base * (1.0 + rng.uniform(-size_jitter, size_jitter, 3)), 3)
                aid = f"{cat.replace(' ', '_')}-{style}-{v}"
                assets.append(Asset(aid, cat, feat, size, None, style))
    return AssetCatalog(assets)


def ingest_3dfuture(model_info_path: str | Path, alias: dict[str, str] | None = None, seed: int = 0) -> AssetCatalog:
    """Build a catalog from a 3D-FUTURE style ``model_info.json``.

    Records need ``model_id`` and ``category``; optional ``size`` holds full
    extents in meters (defaults to the category's typical size) and
    ``style``/``theme`` drives the feature vector. Unmapped categories are
    skipped with a warning.
    """
    path = Path(model_info_path)
    if not path.exists():
        raise FileNotFoundError(f"3D-FUTURE model info not found: {path}")
    alias = {normalize_category(k): normalize_category(v) for k, v in (alias or {}).items()}
    known = set(all_categories())
    table = category_table()
    rng = np.random.default_rng(seed)
    assets = []
    for rec in json.loads(path.read_text()):
        raw = normalize_category(str(rec.get("category") or ""))
        cat = alias.get(raw, raw)
        if cat not in known:
            logger.warning("skipping model %s: unmapped category %r", rec.get("model_id"), rec.get("category"))
            continue
        style = str(rec.get("style") or rec.get("theme") or "modern").lower()
        feat = _unit(style_vector(style.split()) + 0.35 * _word_vector("category:" + cat) + rng.normal(size=FEATURE_DIM) * 0.08)
        size = np.asarray(rec["size"], dtype=np.float64) / 2.0 if rec.get("size") else np.asarray(table[cat]["size"])
        assets.append(Asset(str(rec["model_id"]), cat, feat, size, rec.get("mesh"), style))
    return AssetCatalog(assets)


# ---------------------------------------------------------------- codebook


@dataclass(frozen=True)
class FeatureCodebook:
    Z: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=np.float64)
        if Z.ndim != 2 or len(Z) == 0:
            raise ValueError("codebook must be a non-empty 2-d array")
        object.__setattr__(self, "Z", Z)

    @property
    def K(self) -> int:
        return len(self.Z)

    @property
    def dim(self) -> int:
        return self.Z.shape[1]

    def quantize(self, v) -> int:
        return quantize_feature(v, self.Z)

    def to_list(self) -> list:
        return [[float(x) for x in row] for row in self.Z]


def _sq_dists(X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    return ((X[:, None, :] - Z[None, :, :]) ** 2).sum(-1)


def fit_codebook(features, K: int = CODEBOOK_SIZE, seed: int = 0, iterations: int = 50) -> FeatureCodebook:
    """k-means (k-means++ seeding, Lloyd iterations) with empty-cluster re-seeding."""
    X = np.asarray(features, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError("features must be a 2-d array")
    if len(X) < K:
        raise InsufficientData(f"need at least {K} feature vectors, got {len(X)}")
    if len(np.unique(X, axis=0)) < K:
        raise InsufficientData(f"need at least {K} distinct feature vectors")
    rng = np.random.default_rng(seed)

    # k-means++ seeding over distinct points
    Z = [X[rng.integers(len(X))]]
    d2 = ((X - Z[0]) ** 2).sum(-1)
    for _ in range(1, K):
        total = d2.sum()
        idx = int(rng.choice(len(X), p=d2 / total)) if total > 0 else int(np.argmax(d2))
        Z.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(-1))
    Z = np.array(Z)

    def assign(Z):
        return np.argmin(_sq_dists(X, Z), axis=1)

    for _ in range(iterations):
        labels = assign(Z)
        Z = _update(X, Z, labels)
    labels = assign(Z)
    Z = _update(X, Z, labels)
    return FeatureCodebook(Z)


def _update(X: np.ndarray, Z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    K = len(Z)
    counts = np.bincount(labels, minlength=K)
    Z = np.array(Z)
    for k in range(K):
        if counts[k]:
            Z[k] = X[labels == k].mean(axis=0)
    empty = np.flatnonzero(counts == 0)
    if len(empty):
        # re-seed each empty code with the point worst served by the current codes
        taken: set[int] = set()
        err = _sq_dists(X, Z).min(axis=1)
        for k in empty:
            order = np.argsort(-err, kind="stable")
            pick = next(int(i) for i in order if int(i) not in taken)
            taken.add(pick)
            Z[k] = X[pick]
            err[pick] = 0.0
    return Z


def quantize_feature(v, Z) -> int:
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if not np.isfinite(v).all():
        raise ValueError("feature vector must be finite")
    d = ((np.asarray(Z) - v) ** 2).sum(-1)
    return int(np.argmin(d))  # argmin returns the first minimum


# ---------------------------------------------------------------- retrieval


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(np.dot(a, b) / (na * nb))


def nearest_category(category: str, candidates: Sequence[str]) -> str:
    if not candidates:
        raise EmptyCategory("catalog is empty")
    category = normalize_category(category)
    scored = sorted(candidates, key=lambda c: (-difflib.SequenceMatcher(None, category, c).ratio(), c))
    return scored[0]


def retrieve_object(category: str, f_code: int, s, catalog: AssetCatalog, codebook: FeatureCodebook, k_top: int = 5) -> Asset:
    if len(catalog) == 0:
        raise EmptyCategory("catalog is empty")
    if k_top < 1:
        raise ValueError("k_top must be at least 1")
    pool = catalog.in_category(category)
    if not pool:
        fallback = nearest_category(category, catalog.categories)
        logger.warning("no assets for category %r; falling back to %r", category, fallback)
        pool = catalog.in_category(fallback)
    target = codebook.Z[int(f_code)]
    ranked = sorted(pool, key=lambda a: (-_cosine(a.feature, target), a.id))[:k_top]
    s = np.asarray(s, dtype=np.float64)
    return min(ranked, key=lambda a: (float(np.linalg.norm(a.size - s)), a.id))


# ---------------------------------------------------------------- humans


@dataclass(frozen=True)
class HumanPoseAsset:
    pose_id: str
    action: HumanAction
    half_extents: tuple[float, float, float]

    def footprint(self) -> OrientedBox:
        """Pose box in its own frame (centered at the origin, facing +y)."""
        return OrientedBox(np.zeros(3), np.asarray(self.half_extents, dtype=float), 0.0)


@dataclass(frozen=True)
class PoseLibrary:
    poses: dict[str, HumanPoseAsset]
    dispatch: dict[str, dict] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.poses) != 5:
            raise ValueError(f"pose library must hold exactly five poses, got {len(self.poses)}")

    @classmethod
    def from_dict(cls, d: dict) -> PoseLibrary:
        poses = {
            p["pose_id"]: HumanPoseAsset(p["pose_id"], HumanAction.parse(p["action"]), tuple(float(x) for x in p["half_extents"]))
            for p in d["poses"]
        }
        dispatch = {}
        for action, rule in d["dispatch"].items():
            by_cat = {normalize_category(k): v for k, v in rule.get("by_category", {}).items()}
            dispatch[action] = {"default": rule["default"], "by_category": by_cat}
            for pid in [rule["default"], *by_cat.values()]:
                if pid not in poses:
                    raise ValueError(f"dispatch refers to unknown pose {pid!r}")
        return cls(poses, dispatch)

    @classmethod
    def load(cls, path: str | Path | None = None) -> PoseLibrary:
        text = Path(path).read_text() if path is not None else _data_path("poses.json").read_text()
        return cls.from_dict(json.loads(text))

    def pose_for(self, category: str, action: HumanAction) -> HumanPoseAsset | None:
        action = HumanAction(action)
        if action == HumanAction.NONE:
            return None
        rule = self.dispatch[action.name.lower()]
        pid = rule["by_category"].get(normalize_category(category), rule["default"])
        return self.poses[pid]


@lru_cache(maxsize=None)
def default_poses() -> PoseLibrary:
    return PoseLibrary.load()


def human_layout(pose: HumanPoseAsset, contact: Layout) -> Layout:
    s = np.asarray(pose.half_extents, dtype=float)
    if pose.action != HumanAction.TOUCHING:
        return Layout(contact.t, s, contact.rot)
    c, sn = contact.rot
    fwd = np.array([-sn, c])
    dist = contact.s[1] + s[1]
    t = (contact.t[0] + fwd[0] * dist, contact.t[1] + fwd[1] * dist, contact.t[2])
    return Layout(t, s, (-c, -sn))


def place_human(category: str, action, layout: Layout, contact_index: int = 0, poses: PoseLibrary | None = None) -> PlacedHuman | None:
    poses = poses or default_poses()
    pose = poses.pose_for(category, HumanAction(action))
    if pose is None:
        return None
    return PlacedHuman(pose.pose_id, contact_index, human_layout(pose, layout))


# ---------------------------------------------------------------- assembly


def assemble_scene(
    graph: SceneGraph,
    layouts: Sequence[Layout],
    scene_type: str,
    catalog: AssetCatalog,
    codebook: FeatureCodebook,
    poses: PoseLibrary | None = None,
    k_top: int = 5,
    meta: dict | None = None,
) -> Scene:
    if len(layouts) != graph.n:
        raise ValueError(f"{len(layouts)} layouts for {graph.n} nodes")
    if not graph.is_clean():
        raise ValueError("cannot assemble a graph with masked attributes")
    vocab = get_scene_type(scene_type).vocabulary
    objects, humans = [], []
    for i, (node, lay) in enumerate(zip(graph.nodes, layouts)):
        cat = vocab[node.category]
        asset = retrieve_object(cat, node.feature_code, lay.s, catalog, codebook, k_top)
        action = HumanAction(node.action)
        objects.append(SceneObject(cat, node.feature_code, action, lay, asset.id))
        h = place_human(cat, action, lay, i, poses)
        if h is not None:
            humans.append(h)
    return Scene(get_scene_type(scene_type).name, objects, humans, dict(meta or {}))


def attach_humans(scene: Scene, poses: PoseLibrary | None = None) -> Scene:
    """Recompute every human from the objects' actions and layouts."""
    humans = []
    for i, o in enumerate(scene.objects):
        h = place_human(o.category, o.action, o.layout, i, poses)
        if h is not None:
            humans.append(h)
    return scene.with_objects(scene.objects, humans)

