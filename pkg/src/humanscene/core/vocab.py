"""Scene types, category vocabularies, relation predicates and human actions."""

from __future__ import annotations

import enum
from dataclasses import dataclass


class Predicate(enum.IntEnum):
    LEFT_OF = 0
    RIGHT_OF = 1
    IN_FRONT_OF = 2
    BEHIND = 3
    CLOSELY_LEFT_OF = 4
    CLOSELY_RIGHT_OF = 5
    CLOSELY_IN_FRONT_OF = 6
    CLOSELY_BEHIND = 7
    ABOVE = 8
    BELOW = 9
    NONE = 10


NUM_PREDICATES = len(Predicate)  # 11
RELATION_MASK = NUM_PREDICATES  # extra token index used by the graph diffusion

_INVERSE = {
    Predicate.LEFT_OF: Predicate.RIGHT_OF,
    Predicate.RIGHT_OF: Predicate.LEFT_OF,
    Predicate.IN_FRONT_OF: Predicate.BEHIND,
    Predicate.BEHIND: Predicate.IN_FRONT_OF,
    Predicate.CLOSELY_LEFT_OF: Predicate.CLOSELY_RIGHT_OF,
    Predicate.CLOSELY_RIGHT_OF: Predicate.CLOSELY_LEFT_OF,
    Predicate.CLOSELY_IN_FRONT_OF: Predicate.CLOSELY_BEHIND,
    Predicate.CLOSELY_BEHIND: Predicate.CLOSELY_IN_FRONT_OF,
    Predicate.ABOVE: Predicate.BELOW,
    Predicate.BELOW: Predicate.ABOVE,
    Predicate.NONE: Predicate.NONE,
}

# index -> index lookup, usable for vectorised edge symmetrisation
INVERSE_TABLE = tuple(int(_INVERSE[Predicate(i)]) for i in range(NUM_PREDICATES))


def inverse_predicate(p: Predicate | int) -> Predicate:
    return _INVERSE[Predicate(p)]


PREDICATE_WORDS = {
    Predicate.LEFT_OF: "left of",
    Predicate.RIGHT_OF: "right of",
    Predicate.IN_FRONT_OF: "in front of",
    Predicate.BEHIND: "behind",
    Predicate.CLOSELY_LEFT_OF: "closely left of",
    Predicate.CLOSELY_RIGHT_OF: "closely right of",
    Predicate.CLOSELY_IN_FRONT_OF: "closely in front of",
    Predicate.CLOSELY_BEHIND: "closely behind",
    Predicate.ABOVE: "above",
    Predicate.BELOW: "below",
    Predicate.NONE: "none",
}


class HumanAction(enum.IntEnum):
    SITTING = 0
    LYING = 1
    TOUCHING = 2
    NONE = 3

    @classmethod
    def parse(cls, text: str) -> HumanAction:
        key = text.strip().lower().replace("-", "").replace("_", "")
        for member in cls:
            if member.name.lower() == key or (member is cls.NONE and key in ("none", "noneaction")):
                return member
        raise ValueError(f"not a human action: {text!r}")


NUM_ACTIONS = len(HumanAction)  # 4
ACTION_MASK = NUM_ACTIONS

BEDROOM_CATEGORIES = (
    "armchair", "bookshelf", "cabinet", "ceiling lamp", "chair", "children cabinet",
    "coffee table", "desk", "double bed", "dressing chair", "dressing table", "kids bed",
    "nightstand", "pendant lamp", "shelf", "single bed", "sofa", "stool", "table",
    "tv stand", "wardrobe",
)

LIVINGROOM_CATEGORIES = (
    "armchair", "bookshelf", "cabinet", "ceiling lamp", "chaise longue sofa", "chinese chair",
    "coffee table", "console table", "corner side table", "desk", "dining chair",
    "dining table", "l-shaped sofa", "lazy sofa", "lounge chair", "loveseat sofa",
    "multi-seat sofa", "pendant lamp", "round end table", "shelf", "stool", "tv stand",
    "wardrobe", "wine cabinet",
)

DININGROOM_CATEGORIES = LIVINGROOM_CATEGORIES


@dataclass(frozen=True)
class CategoryVocabulary:
    scene_type: str
    categories: tuple[str, ...]

    def __post_init__(self):
        if not self.categories:
            raise ValueError("empty vocabulary")
        if len(set(self.categories)) != len(self.categories):
            raise ValueError(f"duplicate category names in {self.scene_type} vocabulary")

    @property
    def N(self) -> int:
        return len(self.categories)

    def index(self, name: str) -> int:
        try:
            return self.categories.index(normalize_category(name))
        except ValueError:
            raise KeyError(f"{name!r} is not a {self.scene_type} category") from None

    def __contains__(self, name: str) -> bool:
        return normalize_category(name) in self.categories

    def __getitem__(self, idx: int) -> str:
        return self.categories[idx]

    def __len__(self) -> int:
        return len(self.categories)


@dataclass(frozen=True)
class SceneType:
    name: str
    vocabulary: CategoryVocabulary
    count_range: tuple[int, int]

    @property
    def n_max(self) -> int:
        return self.count_range[1]


def normalize_category(name: str) -> str:
    return " ".join(name.strip().lower().replace("_", " ").split())


_REGISTRY: dict[str, SceneType] = {}


def register_scene_type(name: str, categories, count_range: tuple[int, int]) -> SceneType:
    lo, hi = count_range
    if not 1 <= lo <= hi:
        raise ValueError(f"bad object-count range {count_range}")
    st = SceneType(name, CategoryVocabulary(name, tuple(normalize_category(c) for c in categories)), (lo, hi))
    _REGISTRY[name] = st
    return st


def get_scene_type(name: str) -> SceneType:
    key = name.strip().lower().replace("_", "").replace(" ", "").replace("-", "")
    if key in _REGISTRY:
        return _REGISTRY[key]
    raise KeyError(f"unknown scene type {name!r}; registered: {sorted(_REGISTRY)}")


def registered_scene_types() -> list[str]:
    return sorted(_REGISTRY)


register_scene_type("bedroom", BEDROOM_CATEGORIES, (3, 12))
register_scene_type("livingroom", LIVINGROOM_CATEGORIES, (3, 21))
register_scene_type("diningroom", DININGROOM_CATEGORIES, (3, 21))


def all_categories() -> list[str]:
    seen: dict[str, None] = {}
    for st in _REGISTRY.values():
        for c in st.vocabulary.categories:
            seen.setdefault(c, None)
    return sorted(seen)
