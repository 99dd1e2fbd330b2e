"""Top-down schematic of a scene as SVG.

Objects are drawn as their rotated footprints with a category label, humans as
a circle with a tick pointing along their facing direction, over a 1 m grid.
"""

from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np

from .core import Scene

PX_PER_M = 100.0
MARGIN_M = 0.5


def _f(x: float) -> str:
    s = f"{x:.2f}"
    return "0.00" if s == "-0.00" else s


def export_svg(scene: Scene, px_per_m: float = PX_PER_M) -> str:
    pts = [o.layout.box().footprint() for o in scene.objects]
    pts += [h.layout.box().footprint() for h in scene.humans]
    if pts:
        allp = np.concatenate(pts)
        lo = np.floor(allp.min(axis=0) - MARGIN_M)
        hi = np.ceil(allp.max(axis=0) + MARGIN_M)
    else:
        lo, hi = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
    w_m, h_m = hi - lo

    def X(x):
        return (x - lo[0]) * px_per_m

    def Y(y):
        return (hi[1] - y) * px_per_m  # svg y grows downwards

    W, H = w_m * px_per_m, h_m * px_per_m
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(W)}" height="{_f(H)}" viewBox="0 0 {_f(W)} {_f(H)}">',
        f'<title>{escape(scene.scene_type)}</title>',
        '<g class="grid" stroke="#dddddd" stroke-width="1">',
    ]
    for gx in range(int(lo[0]), int(hi[0]) + 1):
        out.append(f'<line x1="{_f(X(gx))}" y1="0.00" x2="{_f(X(gx))}" y2="{_f(H)}"/>')
    for gy in range(int(lo[1]), int(hi[1]) + 1):
        out.append(f'<line x1="0.00" y1="{_f(Y(gy))}" x2="{_f(W)}" y2="{_f(Y(gy))}"/>')
    out.append("</g>")
    out.append('<g class="objects" fill="#c8d7e8" fill-opacity="0.7" stroke="#345" stroke-width="1.5">')
    for i, o in enumerate(scene.objects):
        fp = o.layout.box().footprint()
        poly = " ".join(f"{_f(X(x))},{_f(Y(y))}" for x, y in fp)
        out.append(f'<polygon id="object-{i}" points="{poly}"/>')
    out.append("</g>")
    out.append('<g class="labels" font-family="sans-serif" font-size="11" text-anchor="middle" fill="#123">')
    for i, o in enumerate(scene.objects):
        x, y = o.layout.t[0], o.layout.t[1]
        out.append(f'<text x="{_f(X(x))}" y="{_f(Y(y))}">{escape(o.category)}</text>')
    out.append("</g>")
    out.append('<g class="humans" fill="#e07a3f" stroke="#7a2f0b" stroke-width="2">')
    for k, h in enumerate(scene.humans):
        x, y = h.layout.t[0], h.layout.t[1]
        c, s = h.layout.rot
        fx, fy = -s, c  # local +y in world coordinates
        r = 0.12
        out.append(f'<circle id="human-{k}" cx="{_f(X(x))}" cy="{_f(Y(y))}" r="{_f(r * px_per_m)}"/>')
        out.append(
            f'<line x1="{_f(X(x))}" y1="{_f(Y(y))}" x2="{_f(X(x + 2 * r * fx))}" y2="{_f(Y(y + 2 * r * fy))}"/>'
        )
    out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"

