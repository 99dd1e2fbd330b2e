"""Procedural scene corpus: templated rooms, captions, persistence and 3D-FRONT ingestion."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .assembly import (
    CODEBOOK_SIZE,
    AssetCatalog,
    FeatureCodebook,
    category_table,
    fit_codebook,
    generate_catalog,
    place_human,
)
from .core import (
    HumanAction,
    Layout,
    OrientedBox,
    Predicate,
    Scene,
    SceneGraph,
    SceneObject,
    boxes_intersect_3d,
    dumps_fixed,
    get_scene_type,
    normalize_category,
)
from .evaluation import DEFAULT_RULES, RelationRuleConfig, relation_between, relation_matrix
from .prompt import Triplet, default_action_table, parse_prompt, render_triplet

logger = logging.getLogger(__name__)

FORMAT_NAME = "humanscene-corpus"
FORMAT_VERSION = 1

# exact (cos, sin) for quarter turns so layouts survive 6-decimal serialisation
_QUARTER_ROT = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))
_WALL_TURN = {"front": 0, "right": 1, "back": 2, "left": 3}
_OPPOSITE = {"front": "back", "back": "front", "left": "right", "right": "left"}


class CorpusFormatError(ValueError):
    def __init__(self, path, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


class MissingDataset(FileNotFoundError):
    pass


# ---------------------------------------------------------------- records


@dataclass
class SceneRecord:
    id: str
    split: str
    scene: Scene
    edges: np.ndarray
    caption: str
    triplets: list[Triplet] = field(default_factory=list)

    @property
    def scene_type(self) -> str:
        return self.scene.scene_type

    @property
    def layouts(self) -> list[Layout]:
        return [o.layout for o in self.scene.objects]

    def graph(self, num_features: int = CODEBOOK_SIZE) -> SceneGraph:
        vocab = get_scene_type(self.scene_type).vocabulary
        return SceneGraph(
            [vocab.index(o.category) for o in self.scene.objects],
            [o.feature_code for o in self.scene.objects],
            [int(o.action) for o in self.scene.objects],
            self.edges,
            vocab.N,
            num_features,
        )

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "split": self.split,
            "caption": self.caption,
            "triplets": [[t.subject, t.predicate.name.lower(), t.object] for t in self.triplets],
            "edges": [[int(x) for x in row] for row in self.edges],
            "scene": self.scene.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> SceneRecord:
        scene = Scene.from_dict(d["scene"])
        n = len(scene.objects)
        edges = np.asarray(d["edges"], dtype=np.int64).reshape(n, n)
        triplets = [Triplet(s, Predicate[p.upper()], o) for s, p, o in d["triplets"]]
        if d["split"] not in ("train", "test"):
            raise ValueError(f"bad split tag {d['split']!r}")
        return cls(d["id"], d["split"], scene, edges, d["caption"], triplets)

    def same_as(self, other: SceneRecord) -> bool:
        return dumps_fixed(self.to_dict(), None) == dumps_fixed(other.to_dict(), None)


@dataclass
class Corpus:
    records: list[SceneRecord]
    scene_type: str | None = None
    codebook: FeatureCodebook | None = None
    config: dict = field(default_factory=dict)

    def split(self, name: str) -> list[SceneRecord]:
        return [r for r in self.records if r.split == name]

    @property
    def num_features(self) -> int:
        return self.codebook.K if self.codebook is not None else CODEBOOK_SIZE

    def header(self) -> dict:
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "scene_type": self.scene_type,
            "config": self.config,
            "config_hash": config_hash(self.config),
            "count": len(self.records),
            "codebook": None if self.codebook is None else self.codebook.Z.tolist(),
        }


def config_hash(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode("utf-8")).hexdigest()[:16]


def save_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(corpus.header(), sort_keys=True) + "\n")
        for r in corpus.records:
            fh.write(dumps_fixed(r.to_dict(), indent=None) + "\n")


def load_corpus(path: str | Path) -> Corpus:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus file not found: {path}")
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise CorpusFormatError(path, 1, "missing header line")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(path, 1, f"header is not JSON: {exc.msg}") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise CorpusFormatError(path, 1, "not a corpus file")
    if header.get("version") != FORMAT_VERSION:
        raise CorpusFormatError(path, 1, f"unsupported corpus version {header.get('version')}")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            records.append(SceneRecord.from_dict(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise CorpusFormatError(path, lineno, f"invalid JSON at column {exc.colno}: {exc.msg}") from None
        except (KeyError, ValueError, TypeError) as exc:
            raise CorpusFormatError(path, lineno, f"malformed record: {exc!r}") from None
    if header.get("count") is not None and header["count"] != len(records):
        raise CorpusFormatError(path, len(lines), f"header promises {header['count']} records, found {len(records)}")
    cb = header.get("codebook")
    return Corpus(records, header.get("scene_type"), FeatureCodebook(np.asarray(cb)) if cb else None, header.get("config", {}))


# ---------------------------------------------------------------- generator


@dataclass(frozen=True)
class GeneratorConfig:
    scene_type: str = "bedroom"
    seed: int = 0
    test_fraction: float = 0.1
    adjective_prob: float = 0.3
    two_triplet_prob: float = 0.5
    robust_shift: float = 0.08
    collision_margin: float = 0.03
    dominant_style_prob: float = 0.6
    catalog_seed: int = 0
    template: str | None = None
    room: dict | None = None

    def __post_init__(self):
        get_scene_type(self.scene_type)
        if not 0.0 <= self.test_fraction <= 1.0:
            raise ValueError("test_fraction must lie in [0, 1]")

    def to_dict(self) -> dict:
        return asdict(self)


@lru_cache(maxsize=4)
def default_assets(catalog_seed: int = 0) -> tuple[AssetCatalog, FeatureCodebook]:
    catalog = generate_catalog(catalog_seed)
    return catalog, fit_codebook(catalog.features(), CODEBOOK_SIZE, seed=catalog_seed)


def load_template(scene_type: str, path: str | Path | None = None) -> dict:
    if path is not None:
        return json.loads(Path(path).read_text())
    name = get_scene_type(scene_type).name + ".json"
    return json.loads(resources.files("humanscene").joinpath("data", "templates", name).read_text())


def split_for(record_id: str, test_fraction: float) -> str:
    h = int.from_bytes(hashlib.blake2b(record_id.encode("utf-8"), digest_size=8).digest(), "little")
    return "test" if (h % 10_000) < round(test_fraction * 10_000) else "train"


def _pick(rng: np.random.Generator, weights: dict):
    keys = list(weights)
    p = np.asarray([float(weights[k]) for k in keys])
    return keys[int(rng.choice(len(keys), p=p / p.sum()))]


def _uniform(rng, bounds) -> float:
    lo, hi = bounds
    return float(rng.uniform(lo, hi))


def _local_to_world(k: int, lx: float, ly: float) -> tuple[float, float]:
    return ((lx, ly), (-ly, lx), (-lx, -ly), (ly, -lx))[k % 4]


def _extents_in(k: int, s) -> tuple[float, float]:
    """Half extents along the x/y axes of a frame rotated k quarter turns from the object."""
    return (s[0], s[1]) if k % 2 == 0 else (s[1], s[0])


@dataclass
class _Placed:
    category: str
    asset_id: str
    style: str
    feature_code: int
    action: HumanAction
    layout: Layout
    turn: int
    group: str


class _RoomBuilder:
    def __init__(self, template, cfg, rng, catalog, codebook, scene_type):
        self.t = template
        self.cfg = cfg
        self.rng = rng
        self.catalog = catalog
        self.codebook = codebook
        self.st = get_scene_type(scene_type)
        self.sizes = category_table()
        self.actions = default_action_table()
        room = dict(template["room"])
        room.update(cfg.room or {})
        self.W = round(_uniform(rng, room["width"]), 2)
        self.D = round(_uniform(rng, room["depth"]), 2)
        self.H = round(_uniform(rng, room["height"]), 2)
        styles = sorted({a.style for a in catalog.assets if a.style})
        self.styles = styles
        self.main_style = styles[int(rng.integers(len(styles)))]
        self.placed: list[_Placed] = []
        self.boxes: list[OrientedBox] = []
        self.humans: list[OrientedBox] = []
        self.group_walls: dict[str, str] = {}

    # -- bookkeeping
    @property
    def full(self) -> bool:
        return len(self.placed) >= self.st.n_max

    def _asset(self, category: str):
        style = self.main_style if self.rng.random() < self.cfg.dominant_style_prob else self.styles[int(self.rng.integers(len(self.styles)))]
        pool = [a for a in self.catalog.in_category(category) if a.style == style] or self.catalog.in_category(category)
        return pool[int(self.rng.integers(len(pool)))]

    def _layout(self, x, y, z, size, turn) -> Layout:
        return Layout((round(x, 3), round(y, 3), round(z, 3)), tuple(float(v) for v in size), _QUARTER_ROT[turn % 4])

    def _fits(self, layout: Layout, category: str, action: HumanAction) -> bool:
        m = self.cfg.collision_margin
        box = layout.box()
        lim_x, lim_y = self.W / 2 + 1e-9, self.D / 2 + 1e-9
        fp = box.footprint()
        if (np.abs(fp[:, 0]) > lim_x).any() or (np.abs(fp[:, 1]) > lim_y).any():
            return False
        lo, hi = box.z_range
        if lo < -1e-9 or hi > self.H + 1e-9:
            return False
        grown = OrientedBox(box.center, box.half_extents + np.array([m, m, 0.0]), box.yaw)
        if any(boxes_intersect_3d(grown, b) for b in self.boxes):
            return False
        if any(boxes_intersect_3d(box, h) for h in self.humans):
            return False
        h = place_human(category, action, layout)
        if h is not None:
            hb = h.layout.box()
            hfp = hb.footprint()
            if (np.abs(hfp[:, 0]) > lim_x).any() or (np.abs(hfp[:, 1]) > lim_y).any():
                return False
            if any(boxes_intersect_3d(hb, b) for b in self.boxes):
                return False
        return True

    def _commit(self, category, asset, layout, turn, group) -> _Placed:
        action = self.actions.lookup(self.st.name, category)
        p = _Placed(category, asset.id, asset.style or "", self.codebook.quantize(asset.feature), action, layout, turn, group)
        self.placed.append(p)
        self.boxes.append(layout.box())
        h = place_human(category, action, layout)
        if h is not None:
            self.humans.append(h.layout.box())
        return p

    def _try(self, category, group, propose, attempts: int = 20):
        """propose(asset) -> (layout, turn) or None; first fitting proposal wins."""
        if self.full or category not in self.st.vocabulary:
            return None
        asset = self._asset(category)
        action = self.actions.lookup(self.st.name, category)
        for _ in range(attempts):
            got = propose(asset)
            if got is None:
                continue
            layout, turn = got
            if self._fits(layout, category, action):
                return self._commit(category, asset, layout, turn, group)
        return None

    def _z(self, category, size, hang=None):
        mount = self.sizes[category]["mount"]
        if mount == "ceiling":
            return self.H - size[2]
        if mount == "pendant":
            return self.H - (_uniform(self.rng, hang) if hang else 0.45) - size[2]
        return size[2]

    # -- anchor placements
    def place_anchor(self, category, spec, group):
        kind = spec["type"]
        rng = self.rng
        if kind == "wall":
            walls = dict(spec["walls"])
            ref = spec.get("opposite_of")
            if ref and ref in self.group_walls:
                walls = {_OPPOSITE[self.group_walls[ref]]: 1.0}
            wall = _pick(rng, walls)

            def propose(asset):
                s = asset.size
                turn = _WALL_TURN[wall]
                length = self.W if wall in ("front", "back") else self.D
                free = length / 2 - s[0]
                if free < 0:
                    return None
                u = _uniform(rng, spec.get("along", (-1.0, 1.0))) * free
                inward = (self.D / 2 if wall in ("front", "back") else self.W / 2) - s[1] - _uniform(rng, self.t.get("wall_gap", (0.0, 0.0)))
                x, y = {"front": (u, -inward), "back": (-u, inward), "left": (-inward, -u), "right": (inward, u)}[wall]
                return self._layout(x, y, self._z(category, s), s, turn), turn

            placed = self._try(category, group, propose)
            if placed is not None:
                self.group_walls.setdefault(group, wall)
            return placed
        if kind == "ceiling":
            jit = spec.get("jitter", 0.3)

            def propose(asset):
                s = asset.size
                x = _uniform(rng, (-jit, jit)) * (self.W / 2 - s[0])
                y = _uniform(rng, (-jit, jit)) * (self.D / 2 - s[1])
                return self._layout(x, y, self._z(category, s, spec.get("hang")), s, 0), 0

            return self._try(category, group, propose)
        if kind == "free":
            clear = spec.get("wall_clearance", 0.6)

            def propose(asset):
                s = asset.size
                turn = int(rng.integers(4))
                ex, ey = _extents_in(turn, s)
                fx, fy = self.W / 2 - clear - ex, self.D / 2 - clear - ey
                if fx < 0 or fy < 0:
                    return None
                return self._layout(_uniform(rng, (-fx, fx)), _uniform(rng, (-fy, fy)), self._z(category, s), s, turn), turn

            return self._try(category, group, propose)
        raise ValueError(f"unknown anchor placement {kind!r}")

    # -- satellites
    def place_satellite(self, spec, anchor: _Placed, members: list[_Placed], group):
        rng = self.rng
        if "prob" in spec and rng.random() >= spec["prob"]:
            return
        category = spec.get("category") or _pick(rng, spec["choices"])
        ref = anchor
        if spec.get("relative_to"):
            matches = [m for m in members if m.category == spec["relative_to"]]
            if not matches:
                return
            ref = matches[-1]
        a = ref.layout
        ax, ay = a.s[0], a.s[1]
        place = spec["place"]

        def put(lx, ly, rel_turn, asset, z=None):
            dx, dy = _local_to_world(ref.turn, lx, ly)
            turn = (ref.turn + rel_turn) % 4
            s = asset.size
            return self._layout(a.t[0] + dx, a.t[1] + dy, self._z(category, s) if z is None else z, s, turn), turn

        if place == "front":
            rel = 2 if spec.get("facing") == "anchor" else 0

            def propose(asset):
                _, ey = _extents_in(rel, asset.size)
                return put(0.0, ay + _uniform(rng, spec["gap"]) + ey, rel, asset)

            members.append(self._try(category, group, propose))
        elif place == "flank":
            side_choice = _pick(rng, spec["sides"])
            sides = {"both": (-1, 1), "left": (-1,), "right": (1,), "none": ()}[side_choice]
            for side in sides:
                rel = (1 if side > 0 else 3) if spec.get("facing") == "inward" else 0

                def propose(asset, side=side, rel=rel):
                    ex, ey = _extents_in(rel, asset.size)
                    ly = -(ay - ey) if spec.get("align") == "back" else 0.0
                    return put(side * (ax + _uniform(rng, spec["gap"]) + ex), ly, rel, asset)

                members.append(self._try(category, group, propose))
        elif place == "ring":
            count = int(rng.integers(spec["count"][0], spec["count"][1] + 1))
            slots = self._ring_slots(ax, ay, count)
            for lx, side_y, side_x in slots:
                def propose(asset, lx=lx, side_y=side_y, side_x=side_x):
                    gap = _uniform(rng, spec["gap"])
                    if side_x:
                        rel = 1 if side_x > 0 else 3
                        ex, _ = _extents_in(rel, asset.size)
                        return put(side_x * (ax + gap + ex), 0.0, rel, asset)
                    rel = 2 if side_y > 0 else 0
                    _, ey = _extents_in(rel, asset.size)
                    return put(lx, side_y * (ay + gap + ey), rel, asset)

                members.append(self._try(category, group, propose, attempts=4))
        elif place == "above":
            def propose(asset):
                s = asset.size
                z = self.H - _uniform(rng, spec.get("hang", (0.5, 0.8))) - s[2]
                return put(0.0, 0.0, 0, asset, z=z)

            members.append(self._try(category, group, propose))
        else:
            raise ValueError(f"unknown satellite placement {place!r}")

    @staticmethod
    def _ring_slots(ax, ay, count, spacing=0.62):
        per_side = max(1, int((2 * ax) // spacing))
        slots = []
        sides = [1, -1]
        counts = {1: 0, -1: 0}
        for i in range(min(count, 2 * per_side)):
            counts[sides[i % 2]] += 1
        for sy in sides:
            k = counts[sy]
            for i in range(k):
                slots.append(((i - (k - 1) / 2) * spacing, sy, 0))
        extra = count - len(slots)
        if extra > 0 and 2 * ay >= 0.5:
            for sx in (1, -1)[:extra]:
                slots.append((0.0, 0, sx))
        return slots

    def build(self):
        for g in self.t["groups"]:
            if self.rng.random() >= g.get("prob", 1.0):
                continue
            lo, hi = g.get("repeat", (1, 1))
            for _ in range(int(self.rng.integers(lo, hi + 1))):
                category = _pick(self.rng, g["anchor"]["choices"])
                anchor = self.place_anchor(category, g["anchor"]["place"], g["name"])
                if anchor is None:
                    continue
                members = [anchor]
                for sat in g.get("satellites", []):
                    self.place_satellite(sat, anchor, members, g["name"])
                    members = [m for m in members if m is not None]
        return self.placed


def _robust_relation(a: Layout, b: Layout, shift: float, cfg: RelationRuleConfig) -> Predicate:
    """Relation of b w.r.t. a if it survives nudging b by ``shift`` in any direction, else NONE."""
    p = relation_between(a, b, cfg)
    if p == Predicate.NONE:
        return p
    for ang in np.arange(8) * (math.pi / 4):
        for dz in (-0.05, 0.0, 0.05):
            t = (b.t[0] + shift * math.cos(ang), b.t[1] + shift * math.sin(ang), b.t[2] + dz)
            if relation_between(a, Layout(t, b.s, b.rot), cfg) != p:
                return Predicate.NONE
    return p


def make_caption(placed: Sequence, rng: np.random.Generator, cfg: GeneratorConfig, rules: RelationRuleConfig = DEFAULT_RULES):
    """One or two templated sentences about relations that are far from any rule threshold."""
    n = len(placed)
    pairs = [(i, j) for i in range(n) for j in range(n) if i != j]
    want = 2 if rng.random() < cfg.two_triplet_prob else 1
    order = rng.permutation(len(pairs))
    chosen: list = []
    sentences: list[str] = []
    adjs: dict[int, tuple] = {}

    def adj(k):
        if k not in adjs:
            style = placed[k].style
            adjs[k] = (style,) if style and rng.random() < cfg.adjective_prob else ()
        return adjs[k]

    for idx in order:
        i, j = pairs[idx]
        if any({i, j} == {c[0], c[1]} for c in chosen):
            continue
        p = _robust_relation(placed[j].layout, placed[i].layout, cfg.robust_shift, rules)
        if p == Predicate.NONE:
            continue
        t = Triplet(placed[i].category, p, placed[j].category)
        sentence = render_triplet(t, subject_adjs=adj(i), object_adjs=adj(j))
        trial = " ".join([*sentences, sentence])
        _, parsed = parse_prompt(trial, cfg.scene_type)
        if [x.as_tuple() for x in parsed] != [x.as_tuple() for x in [*(c[3] for c in chosen), t]]:
            continue
        chosen.append((i, j, p, t))
        sentences.append(sentence)
        if len(chosen) == want:
            break
    return " ".join(sentences), [c[3] for c in chosen]


def _placed_to_scene(placed: Sequence[_Placed], scene_type: str, meta: dict) -> Scene:
    objects, humans = [], []
    for i, p in enumerate(placed):
        objects.append(SceneObject(p.category, p.feature_code, p.action, p.layout, p.asset_id))
        h = place_human(p.category, p.action, p.layout, i)
        if h is not None:
            lay = h.layout
            h = type(h)(h.pose_id, i, Layout(tuple(round(v, 6) for v in lay.t), lay.s, lay.rot))
            humans.append(h)
    return Scene(get_scene_type(scene_type).name, objects, humans, meta)


def generate_record(cfg: GeneratorConfig, index: int, template=None, assets=None, max_tries: int = 50) -> SceneRecord:
    template = template or load_template(cfg.scene_type, cfg.template)
    catalog, codebook = assets or default_assets(cfg.catalog_seed)
    st = get_scene_type(cfg.scene_type)
    rng = np.random.default_rng([cfg.seed, index])
    rid = f"{st.name}-{cfg.seed}-{index:06d}"
    for _ in range(max_tries):
        placed = _RoomBuilder(template, cfg, rng, catalog, codebook, st.name).build()
        lo, hi = st.count_range
        if not lo <= len(placed) <= hi:
            continue
        if all(p.action == HumanAction.NONE for p in placed):
            continue
        caption, triplets = make_caption(placed, rng, cfg)
        if not triplets:
            continue
        scene = _placed_to_scene(placed, st.name, {"seed": cfg.seed, "prompt": caption})
        edges = relation_matrix([p.layout for p in placed])
        return SceneRecord(rid, split_for(rid, cfg.test_fraction), scene, edges, caption, triplets)
    raise RuntimeError(f"template for {st.name} failed to yield a valid room after {max_tries} tries")


def generate_corpus(cfg: GeneratorConfig, count: int) -> Corpus:
    if count < 1:
        raise ValueError("count must be at least 1")
    template = load_template(cfg.scene_type, cfg.template)
    assets = default_assets(cfg.catalog_seed)
    records = [generate_record(cfg, i, template, assets) for i in range(count)]
    return Corpus(records, get_scene_type(cfg.scene_type).name, assets[1], cfg.to_dict())


def count_histogram(records: Iterable[SceneRecord], n_max: int) -> np.ndarray:
    hist = np.zeros(n_max + 1, dtype=np.int64)
    for r in records:
        hist[min(len(r.scene.objects), n_max)] += 1
    return hist


# ---------------------------------------------------------------- 3D-FRONT


@lru_cache(maxsize=None)
def default_aliases() -> dict:
    return json.loads(resources.files("humanscene").joinpath("data", "front_aliases.json").read_text())


_ROOM_TYPES = {
    "bedroom": ("bedroom", "masterbedroom", "secondbedroom", "kidsroom"),
    "livingroom": ("livingroom", "livingdiningroom"),
    "diningroom": ("diningroom", "livingdiningroom"),
}


def _yaw_from_quaternion(q) -> float:
    # rotation about the vertical (y) axis of the source frame; q = (x, y, z, w)
    qx, qy, qz, qw = (float(v) for v in q)
    theta = 2.0 * math.atan2(qy, qw)
    return theta + math.pi  # source local +z forward maps to our local +y


def ingest_3dfront(
    path: str | Path,
    scene_type: str = "bedroom",
    aliases: dict | None = None,
    cfg: GeneratorConfig | None = None,
    assets=None,
) -> Corpus:
    """Read 3D-FRONT style house files into scene records.

    Expected layout under ``path``::

        3D-FRONT/*.json               house files ("furniture", "scene" -> "room")
        3D-FUTURE-model/model_info.json  [{"model_id", "category", "size"?, "style"?}]
        splits.csv (optional)         "room_id,train|test" lines

    The source frame is y-up; positions map to (x, -z, y). Object sizes come
    from ``size`` (full extents, meters) times the instance scale, or the
    category's typical size. Unmappable categories are skipped with a warning.
    """
    root = Path(path)
    front_dir = root / "3D-FRONT"
    info_path = root / "3D-FUTURE-model" / "model_info.json"
    if not root.exists() or not front_dir.is_dir() or not info_path.exists():
        raise MissingDataset(
            f"3D-FRONT data not found under {root} (need 3D-FRONT/*.json and 3D-FUTURE-model/model_info.json)"
        )
    st = get_scene_type(scene_type)
    cfg = cfg or GeneratorConfig(scene_type=st.name)
    catalog, codebook = assets or default_assets(cfg.catalog_seed)
    table = aliases or default_aliases()
    alias = {normalize_category(k): normalize_category(v) for k, v in table.get("default", {}).items()}
    alias.update({normalize_category(k): normalize_category(v) for k, v in table.get(st.name, {}).items()})
    info = {str(r["model_id"]): r for r in json.loads(info_path.read_text())}
    splits = {}
    split_file = root / "splits.csv"
    if split_file.exists():
        for line in split_file.read_text().splitlines():
            parts = [p.strip() for p in line.split(",")]
            if len(parts) == 2 and parts[1] in ("train", "test"):
                splits[parts[0]] = parts[1]
    sizes = category_table()
    actions = default_action_table()
    rng = np.random.default_rng(cfg.seed)
    records = []
    for house_file in sorted(front_dir.glob("*.json")):
        house = json.loads(house_file.read_text())
        furniture = {f["uid"]: f for f in house.get("furniture", [])}
        for room in house.get("scene", {}).get("room", []):
            rtype = normalize_category(str(room.get("type", ""))).replace(" ", "")
            if rtype not in _ROOM_TYPES.get(st.name, (st.name,)):
                continue
            placed = []
            for child in room.get("children", []):
                f = furniture.get(child.get("ref"))
                if f is None:
                    continue
                rec = info.get(str(f.get("jid")))
                raw = normalize_category(str((rec or {}).get("category") or f.get("category") or ""))
                cat = alias.get(raw, raw)
                if cat not in st.vocabulary:
                    logger.warning("%s: skipping %r (no category mapping)", house_file.name, raw or f.get("jid"))
                    continue
                scale = np.asarray(child.get("scale", (1.0, 1.0, 1.0)), dtype=float)
                if rec and rec.get("size"):
                    full = np.asarray(rec["size"], dtype=float) * scale
                    s = (full[0] / 2, full[2] / 2, full[1] / 2)
                else:
                    s = tuple(sizes[cat]["size"])
                px, py, pz = (float(v) for v in child.get("pos", (0.0, 0.0, 0.0)))
                yaw = _yaw_from_quaternion(child.get("rot", (0.0, 0.0, 0.0, 1.0)))
                layout = Layout.from_yaw((round(px, 6), round(-pz, 6), round(py + s[2], 6)), tuple(round(v, 6) for v in s), yaw)
                asset = min(catalog.in_category(cat), key=lambda a: (float(np.linalg.norm(a.size - np.asarray(s))), a.id))
                placed.append(
                    _Placed(cat, asset.id, asset.style or "", codebook.quantize(asset.feature), actions.lookup(st.name, cat), layout, 0, "")
                )
            if not placed:
                continue
            if len(placed) > st.n_max:
                logger.warning("room %s has %d objects; keeping the first %d", room.get("instanceid"), len(placed), st.n_max)
                placed = placed[: st.n_max]
            rid = f"{house_file.stem}/{room.get('instanceid', len(records))}"
            caption, triplets = make_caption(placed, rng, cfg)
            scene = _placed_to_scene(placed, st.name, {"seed": cfg.seed, "prompt": caption})
            edges = relation_matrix([p.layout for p in placed])
            split = splits.get(str(room.get("instanceid")), splits.get(rid, split_for(rid, cfg.test_fraction)))
            records.append(SceneRecord(rid, split, scene, edges, caption, triplets))
    return Corpus(records, st.name, codebook, {"source": "3d-front", **cfg.to_dict()})
