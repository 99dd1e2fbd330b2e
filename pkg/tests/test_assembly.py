from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from humanscene.assembly import (
    Asset,
    AssetCatalog,
    EmptyCategory,
    FeatureCodebook,
    InsufficientData,
    PoseLibrary,
    assemble_scene,
    attach_humans,
    default_poses,
    fit_codebook,
    generate_catalog,
    ingest_3dfuture,
    place_human,
    quantize_feature,
    retrieve_object,
)
from humanscene.core import HumanAction, Layout, Predicate, SceneGraph, boxes_intersect_3d


def inertia(X, Z):
    return ((X[:, None] - Z[None]) ** 2).sum(-1).min(1).sum()


def test_codebook_single_code_is_the_mean():
    X = np.random.default_rng(0).normal(size=(30, 4))
    cb = fit_codebook(X, K=1)
    assert np.allclose(cb.Z[0], X.mean(0))


def test_codebook_on_one_hots_recovers_every_point():
    X = np.eye(6)[np.random.default_rng(1).permutation(6)]
    cb = fit_codebook(X, K=6)
    assert sorted(map(tuple, cb.Z)) == sorted(map(tuple, np.eye(6)))


def test_codebook_needs_enough_distinct_points():
    with pytest.raises(InsufficientData):
        fit_codebook(np.zeros((3, 2)), K=4)
    with pytest.raises(InsufficientData):
        fit_codebook(np.zeros((10, 2)), K=2)


def test_codebook_is_close_to_restart_oracle():
    from sklearn.cluster import KMeans

    X = generate_catalog(0).features()
    cb = fit_codebook(X, K=16, seed=0)
    best = KMeans(16, n_init=10, random_state=0).fit(X)
    assert inertia(X, cb.Z) <= 1.05 * best.inertia_


def test_quantize_matches_linear_scan_and_breaks_ties_low():
    rng = np.random.default_rng(2)
    Z = rng.normal(size=(20, 5))
    for v in rng.normal(size=(200, 5)):
        d = [float(((z - v) ** 2).sum()) for z in Z]
        assert quantize_feature(v, Z) == d.index(min(d))
    Zt = np.array([[1.0, 0], [-1.0, 0], [1.0, 0]])
    assert quantize_feature([0.0, 0.0], Zt) == 0
    assert quantize_feature([1.0, 0.0], Zt) == 0
    with pytest.raises(ValueError):
        quantize_feature([np.nan, 0], Zt)


def oracle_retrieve(category, f_code, s, assets, Z, k_top):
    """Exhaustive two-stage selection written independently of the library."""
    pool = [a for a in assets if a.category == category]
    z = Z[f_code]

    def cos(a):
        return float(a.feature @ z / (np.linalg.norm(a.feature) * np.linalg.norm(z)))

    top = []
    for a in pool:
        better = sum(1 for b in pool if cos(b) > cos(a) or (cos(b) == cos(a) and b.id < a.id))
        if better < k_top:
            top.append(a)
    best = None
    for a in top:
        key = (float(np.linalg.norm(a.size - s)), a.id)
        if best is None or key < best[0]:
            best = (key, a)
    return best[1]


def test_retrieval_matches_oracle_on_random_instances():
    catalog = generate_catalog(3, variants=3)
    cb = fit_codebook(catalog.features(), K=32, seed=1)
    rng = np.random.default_rng(4)
    cats = catalog.categories
    for _ in range(300):
        cat = cats[rng.integers(len(cats))]
        f, k = int(rng.integers(cb.K)), int(rng.integers(1, 8))
        s = rng.uniform(0.05, 1.5, 3)
        got = retrieve_object(cat, f, s, catalog, cb, k)
        assert got.id == oracle_retrieve(cat, f, s, catalog.assets, cb.Z, k).id


def test_retrieval_ignores_catalog_order():
    catalog = generate_catalog(5)
    cb = fit_codebook(catalog.features(), K=16)
    shuffled = AssetCatalog([catalog.assets[i] for i in np.random.default_rng(0).permutation(len(catalog))])
    for cat in catalog.categories[:10]:
        for f in range(0, 16, 5):
            assert retrieve_object(cat, f, (0.4, 0.4, 0.4), catalog, cb).id == retrieve_object(cat, f, (0.4, 0.4, 0.4), shuffled, cb).id


def test_retrieval_with_k_one_picks_the_most_similar():
    feats = np.eye(3)
    assets = [Asset(f"a{i}", "desk", feats[i], np.full(3, 0.1 + i)) for i in range(3)]
    catalog = AssetCatalog(assets)
    cb = FeatureCodebook(feats)
    assert retrieve_object("desk", 2, (0.1, 0.1, 0.1), catalog, cb, k_top=1).id == "a2"
    assert retrieve_object("desk", 2, (0.1, 0.1, 0.1), catalog, cb, k_top=3).id == "a0"


def test_retrieval_fallback_and_errors():
    catalog = AssetCatalog([Asset("d", "desk", np.ones(3) / math.sqrt(3), np.ones(3))])
    cb = FeatureCodebook(np.ones((1, 3)))
    assert retrieve_object("desks", 0, (1, 1, 1), catalog, cb).id == "d"
    with pytest.raises(EmptyCategory):
        retrieve_object("desk", 0, (1, 1, 1), AssetCatalog([]), cb)
    with pytest.raises(ValueError):
        retrieve_object("desk", 0, (1, 1, 1), catalog, cb, k_top=0)


def test_catalog_save_load(tmp_path):
    catalog = generate_catalog(0)
    catalog.save(tmp_path / "c.json")
    again = AssetCatalog.load(tmp_path / "c.json")
    assert len(again) == len(catalog)
    for a in catalog.assets:
        b = again.by_id(a.id)
        assert np.array_equal(a.feature, b.feature) and np.array_equal(a.size, b.size) and a.category == b.category
    with pytest.raises(ValueError):
        Asset("x", "desk", np.ones(3), np.ones(3))


def test_ingest_3dfuture(tmp_path):
    info = [
        {"model_id": "m1", "category": "Double Bed", "size": [2.0, 2.2, 0.8], "style": "Modern"},
        {"model_id": "m2", "category": "Spaceship"},
        {"model_id": "m3", "category": "bedside table"},
    ]
    p = tmp_path / "model_info.json"
    p.write_text(json.dumps(info))
    catalog = ingest_3dfuture(p, alias={"bedside table": "nightstand"})
    assert sorted(a.id for a in catalog.assets) == ["m1", "m3"]
    assert np.allclose(catalog.by_id("m1").size, [1.0, 1.1, 0.4])
    assert catalog.by_id("m3").category == "nightstand"
    with pytest.raises(FileNotFoundError):
        ingest_3dfuture(tmp_path / "missing.json")


# ---------------------------------------------------------------- humans


def test_pose_dispatch():
    poses = default_poses()
    assert poses.pose_for("chair", HumanAction.SITTING).pose_id == "SitArmsOnTable"
    assert poses.pose_for("stool", HumanAction.SITTING).pose_id == "SitHandsAtSides"
    assert poses.pose_for("sofa", HumanAction.LYING).pose_id == "HalfLie"
    assert poses.pose_for("double bed", HumanAction.LYING).pose_id == "LieHandsBehindHead"
    assert poses.pose_for("wardrobe", HumanAction.NONE) is None
    with pytest.raises(ValueError):
        PoseLibrary({}, {})


def test_sit_and_lie_share_the_contact_frame():
    bed = Layout.from_yaw((1.0, 2.0, 0.3), (1.0, 1.1, 0.3), 0.7)
    h = place_human("double bed", HumanAction.LYING, bed, 4)
    assert h.contact_object_index == 4 and h.pose_id == "LieHandsBehindHead"
    assert h.layout.t == bed.t and h.layout.rot == bed.rot
    assert place_human("wardrobe", HumanAction.NONE, bed) is None


@settings(max_examples=100, deadline=None)
@given(st.floats(-math.pi, math.pi), st.floats(0.1, 1.0), st.floats(0.1, 1.0))
def test_standing_human_faces_the_object_without_touching_it(yaw, sx, sy):
    obj = Layout.from_yaw((0.5, -1.0, 0.9), (sx, sy, 0.9), yaw)
    h = place_human("wardrobe", HumanAction.TOUCHING, obj)
    fwd = np.array([-math.sin(yaw), math.cos(yaw)])
    d = np.array(h.layout.t[:2]) - np.array(obj.t[:2])
    assert np.dot(d, fwd) == pytest.approx(sy + 0.15)
    assert np.allclose(h.layout.rot, (-math.cos(yaw), -math.sin(yaw)), atol=1e-9)
    shrunk = Layout(h.layout.t, np.array(h.layout.s) - 1e-6, h.layout.rot)
    assert not boxes_intersect_3d(shrunk.box(), obj.box())


def test_assemble_scene_places_one_human_per_interactive_object(assets):
    catalog, cb = assets
    n = 4
    edges = np.full((n, n), int(Predicate.NONE))
    acts = [HumanAction.LYING, HumanAction.NONE, HumanAction.SITTING, HumanAction.TOUCHING]
    g = SceneGraph([0, 1, 2, 3], [0, 1, 2, 3], [int(a) for a in acts], edges, 21, 64)
    lays = [Layout.from_yaw((i * 2.0, 0, 0.5), (0.4, 0.4, 0.5), 0) for i in range(n)]
    scene = assemble_scene(g, lays, "bedroom", catalog, cb, meta={"seed": 1})
    assert len(scene.objects) == n and len(scene.humans) == 3
    assert [h.contact_object_index for h in scene.humans] == [0, 2, 3]
    assert all(o.asset_id and catalog.by_id(o.asset_id).category == o.category for o in scene.objects)
    assert attach_humans(scene).humans == scene.humans
    with pytest.raises(ValueError):
        assemble_scene(g, lays[:2], "bedroom", catalog, cb)
