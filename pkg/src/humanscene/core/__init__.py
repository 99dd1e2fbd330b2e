from .geometry import (
    FunctionalGroups,
    Layout,
    OptimizerConfig,
    OrientedBox,
    boxes_intersect_3d,
    footprint_overlap_area,
    footprints_overlap,
)
from .scene import ObjectNode, PlacedHuman, Scene, SceneGraph, SceneObject, dumps_fixed
from .vocab import (
    ACTION_MASK,
    INVERSE_TABLE,
    NUM_ACTIONS,
    NUM_PREDICATES,
    RELATION_MASK,
    CategoryVocabulary,
    HumanAction,
    Predicate,
    SceneType,
    all_categories,
    get_scene_type,
    inverse_predicate,
    normalize_category,
    register_scene_type,
    registered_scene_types,
)

__all__ = [
    "ACTION_MASK",
    "INVERSE_TABLE",
    "NUM_ACTIONS",
    "NUM_PREDICATES",
    "RELATION_MASK",
    "CategoryVocabulary",
    "FunctionalGroups",
    "HumanAction",
    "Layout",
    "ObjectNode",
    "OptimizerConfig",
    "OrientedBox",
    "PlacedHuman",
    "Predicate",
    "Scene",
    "SceneGraph",
    "SceneObject",
    "SceneType",
    "all_categories",
    "boxes_intersect_3d",
    "dumps_fixed",
    "footprint_overlap_area",
    "footprints_overlap",
    "get_scene_type",
    "inverse_predicate",
    "normalize_category",
    "register_scene_type",
    "registered_scene_types",
]
