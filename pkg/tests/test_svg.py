from __future__ import annotations

import xml.etree.ElementTree as ET

from helpers import obj, scene_with_humans

from humanscene.core import HumanAction, Scene
from humanscene.svg import export_svg

NS = "{http://www.w3.org/2000/svg}"


def test_svg_draws_every_object_and_human():
    scene = scene_with_humans([
        obj("multi-seat sofa", 0, 0, s=(1.0, 0.45, 0.4), action=HumanAction.LYING),
        obj("tv stand", 0, 2.5, yaw=3.14159),
        obj("corner/side <table> & co", -2, 0),
    ])
    text = export_svg(scene)
    root = ET.fromstring(text.encode())
    polys = root.findall(f".//{NS}polygon")
    assert [p.get("id") for p in polys] == ["object-0", "object-1", "object-2"]
    assert len(root.findall(f".//{NS}circle")) == 1
    labels = [t.text for t in root.findall(f".//{NS}text")]
    assert "corner/side <table> & co" in labels
    # the sofa's 2 m x 0.9 m footprint at 100 px/m
    xs = [float(p.split(",")[0]) for p in polys[0].get("points").split()]
    assert max(xs) - min(xs) == 200.0


def test_svg_is_deterministic_and_handles_empty_scenes():
    scene = scene_with_humans([obj("armchair", 0.3, -0.2, action=HumanAction.SITTING)])
    assert export_svg(scene) == export_svg(scene)
    empty = ET.fromstring(export_svg(Scene("bedroom")).encode())
    assert empty.get("width") == "200.00" and empty.findall(f".//{NS}polygon") == []
    assert "-0.00" not in export_svg(scene)
