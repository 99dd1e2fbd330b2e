from __future__ import annotations

import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from humanscene.core import HumanAction, Layout, PlacedHuman, Predicate, Scene, SceneObject, boxes_intersect_3d, inverse_predicate
from humanscene.evaluation import (
    DEFAULT_RULES,
    RelationRuleConfig,
    check_relation,
    format_table,
    irecall,
    relation_between,
    relation_matrix,
    scene_stats,
)
from humanscene.prompt import Triplet

DIRECTIONAL_PAIRS = [
    (Predicate.LEFT_OF, Predicate.RIGHT_OF),
    (Predicate.IN_FRONT_OF, Predicate.BEHIND),
    (Predicate.CLOSELY_LEFT_OF, Predicate.CLOSELY_RIGHT_OF),
    (Predicate.CLOSELY_IN_FRONT_OF, Predicate.CLOSELY_BEHIND),
    (Predicate.ABOVE, Predicate.BELOW),
]


def box(x, y, z=0.5, s=(0.4, 0.4, 0.5), yaw=0.0):
    return Layout.from_yaw((x, y, z), s, yaw)


@st.composite
def layouts(draw):
    f = st.floats(-4, 4, allow_nan=False)
    h = st.floats(0.05, 1.2, allow_nan=False)
    return Layout.from_yaw(
        (draw(f), draw(f), draw(st.floats(0, 3))), (draw(h), draw(h), draw(h)), draw(st.floats(-math.pi, math.pi))
    )


def test_left_of_example():
    a = box(0, 0)
    assert check_relation(a, box(-2, 0), Predicate.LEFT_OF)
    assert not check_relation(a, box(-2, 0), Predicate.RIGHT_OF)
    assert check_relation(a, box(-0.7, 0), Predicate.CLOSELY_LEFT_OF)
    assert check_relation(a, box(0, 2), Predicate.IN_FRONT_OF)
    assert check_relation(a, box(0, -0.6), Predicate.CLOSELY_BEHIND)


def test_lamp_above_table():
    table = box(0, 0, 0.4, (0.6, 0.6, 0.4))
    lamp = box(0.1, 0.0, 1.9, (0.2, 0.2, 0.1))
    assert check_relation(table, lamp, Predicate.ABOVE)
    assert not check_relation(table, lamp, Predicate.BELOW)
    assert check_relation(lamp, table, Predicate.BELOW)


def test_coincident_centres_are_none():
    assert relation_between(box(0, 0), box(0.01, 0.02)) is Predicate.NONE


def test_rule_config_validation():
    with pytest.raises(ValueError):
        RelationRuleConfig(d_close=0)


@settings(max_examples=1000, deadline=None)
@given(layouts(), layouts())
def test_inverse_pair_consistency(a, b):
    p = relation_between(a, b)
    assert relation_between(b, a) is inverse_predicate(p)
    for q in Predicate:
        assert check_relation(a, b, q) == check_relation(b, a, inverse_predicate(q))


@settings(max_examples=300, deadline=None)
@given(layouts(), layouts())
def test_at_most_one_of_each_inverse_pair(a, b):
    for p, q in DIRECTIONAL_PAIRS:
        assert not (check_relation(a, b, p) and check_relation(a, b, q))
    assert sum(check_relation(a, b, p) for p in Predicate) == 1


def test_relation_matrix_is_symmetric_under_inverse():
    rng = np.random.default_rng(0)
    lays = [box(*rng.uniform(-3, 3, 2), z=rng.uniform(0.2, 2)) for _ in range(7)]
    m = relation_matrix(lays)
    inv = np.array([int(inverse_predicate(p)) for p in Predicate])
    assert (np.diag(m) == int(Predicate.NONE)).all()
    assert (m == inv[m.T]).all()
    assert m[1, 0] == int(relation_between(lays[0], lays[1]))


def _scene(items):
    return Scene("bedroom", [SceneObject(c, 0, HumanAction.NONE, lay) for c, lay in items])


def test_irecall_examples():
    scene = _scene([("double bed", box(0, 0)), ("nightstand", box(-1.5, 0)), ("wardrobe", box(0, 3))])
    hit = Triplet("nightstand", Predicate.LEFT_OF, "double bed")
    miss = Triplet("nightstand", Predicate.RIGHT_OF, "double bed")
    absent = Triplet("desk", Predicate.LEFT_OF, "double bed")
    assert irecall([], scene) == 1.0
    assert irecall([hit], scene) == 1.0
    assert irecall([miss, absent], scene) == 0.0
    assert irecall([hit, miss], scene) == 0.5
    # adding a satisfied triplet never lowers the score
    assert irecall([hit, miss, hit], scene) >= irecall([hit, miss], scene)


def test_irecall_matches_any_instance():
    scene = _scene([("double bed", box(0, 0)), ("nightstand", box(2, 0)), ("nightstand", box(-2, 0))])
    assert irecall([Triplet("nightstand", Predicate.LEFT_OF, "double bed")], scene) == 1.0
    assert irecall([Triplet("nightstand", Predicate.RIGHT_OF, "double bed")], scene) == 1.0


def test_scene_stats_examples():
    empty = scene_stats(Scene("bedroom"))
    assert empty == {"collisions": 0, "human_object_violations": 0, "category_histogram": {}}
    same = _scene([("cabinet", box(0, 0)), ("cabinet", box(0, 0))])
    assert scene_stats(same)["collisions"] == 1


def test_scene_stats_matches_brute_force():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(2, 9))
        lays = [box(*rng.uniform(-2, 2, 2), s=tuple(rng.uniform(0.1, 0.8, 3)), yaw=rng.uniform(-3, 3)) for _ in range(n)]
        scene = _scene([("cabinet", lay) for lay in lays])
        scene.humans.append(PlacedHuman("StandTouch", 0, box(*rng.uniform(-2, 2, 2))))
        pairs = sum(boxes_intersect_3d(a.box(), b.box()) for a, b in itertools.combinations(lays, 2))
        viol = sum(boxes_intersect_3d(scene.humans[0].layout.box(), lay.box()) for lay in lays[1:])
        stats = scene_stats(scene)
        assert stats["collisions"] == pairs
        assert stats["human_object_violations"] == viol
        assert stats["category_histogram"] == {"cabinet": n}


def test_format_table():
    text = format_table([{"a": 1, "b": 0.5}, {"a": 22, "b": 1.0}], ["a", "b"])
    lines = text.splitlines()
    assert lines[0].split() == ["a", "b"]
    assert lines[2].split() == ["1", "0.5000"]
    assert len({len(line.rstrip()) <= len(lines[1]) for line in lines}) == 1


def test_default_rules():
    assert DEFAULT_RULES.d_close == 1.0 and DEFAULT_RULES.epsilon == 0.05 and DEFAULT_RULES.vertical_margin == 0.05
