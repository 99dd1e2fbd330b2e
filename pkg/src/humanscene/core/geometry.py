"""Layouts, oriented boxes and the footprint / volume tests built on them.

Conventions: z is up, the ground plane is x-y. An object's local +y axis is
its facing direction, so yaw 0 faces world +y. Sizes are half-extents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MIN_HALF_EXTENT = 1e-3
UNIT_TOL = 1e-5  # slack on |rot| = 1, enough for values printed at 6 decimals
_EPS = 1e-9


@dataclass(frozen=True)
class Layout:
    t: tuple[float, float, float]
    s: tuple[float, float, float]
    rot: tuple[float, float]  # (cos r, sin r)

    def __post_init__(self):
        t = tuple(float(v) for v in self.t)
        s = tuple(max(float(v), MIN_HALF_EXTENT) for v in self.s)
        c, sn = (float(v) for v in self.rot)
        if len(t) != 3 or len(s) != 3:
            raise ValueError("layout needs 3-vector translation and size")
        if not all(math.isfinite(v) for v in (*t, *s, c, sn)):
            raise ValueError("layout contains non-finite values")
        if abs(c * c + sn * sn - 1.0) > UNIT_TOL:
            raise ValueError(f"rotation ({c}, {sn}) is not a unit pair")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "rot", (c, sn))

    @classmethod
    def from_yaw(cls, t, s, yaw: float) -> Layout:
        return cls(tuple(t), tuple(s), (math.cos(yaw), math.sin(yaw)))

    @classmethod
    def from_vector(cls, v) -> Layout:
        """Build from the 8-parameter form, renormalising the rotation pair."""
        v = [float(x) for x in v]
        c, sn = v[6], v[7]
        norm = math.hypot(c, sn)
        if norm < 1e-12:
            c, sn = 1.0, 0.0
        else:
            c, sn = c / norm, sn / norm
        return cls(tuple(v[0:3]), tuple(v[3:6]), (c, sn))

    @property
    def yaw(self) -> float:
        return math.atan2(self.rot[1], self.rot[0])

    def to_vector(self) -> np.ndarray:
        return np.array([*self.t, *self.s, *self.rot], dtype=np.float64)

    def box(self) -> OrientedBox:
        return OrientedBox(np.array(self.t), np.array(self.s), self.yaw)

    def moved(self, dx: float, dy: float) -> Layout:
        return Layout((self.t[0] + dx, self.t[1] + dy, self.t[2]), self.s, self.rot)


@dataclass(frozen=True, eq=False)
class OrientedBox:
    center: np.ndarray
    half_extents: np.ndarray
    yaw: float

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, dtype=np.float64).reshape(3))
        he = np.maximum(np.asarray(self.half_extents, dtype=np.float64).reshape(3), MIN_HALF_EXTENT)
        object.__setattr__(self, "half_extents", he)
        object.__setattr__(self, "yaw", float(self.yaw))

    def axes(self) -> np.ndarray:
        """Unit local x and y axes in world coordinates (rows)."""
        c, s = math.cos(self.yaw), math.sin(self.yaw)
        return np.array([[c, s], [-s, c]])

    def footprint(self) -> np.ndarray:
        """Counter-clockwise ground-plane corners, shape (4, 2)."""
        ax, ay = self.axes()
        hx, hy = self.half_extents[0], self.half_extents[1]
        c = self.center[:2]
        return np.array([c - hx * ax - hy * ay, c + hx * ax - hy * ay, c + hx * ax + hy * ay, c - hx * ax + hy * ay])

    def footprint_area(self) -> float:
        return 4.0 * float(self.half_extents[0] * self.half_extents[1])

    def volume(self) -> float:
        return 8.0 * float(np.prod(self.half_extents))

    @property
    def z_range(self) -> tuple[float, float]:
        return float(self.center[2] - self.half_extents[2]), float(self.center[2] + self.half_extents[2])

    def contains(self, points: np.ndarray) -> np.ndarray:
        """Boolean mask of (m, 3) points inside the closed box."""
        d = np.asarray(points, dtype=np.float64) - self.center
        ax = self.axes()
        lx = d[:, :2] @ ax[0]
        ly = d[:, :2] @ ax[1]
        he = self.half_extents
        return (np.abs(lx) <= he[0]) & (np.abs(ly) <= he[1]) & (np.abs(d[:, 2]) <= he[2])


def _polygon_area(poly: np.ndarray) -> float:
    if len(poly) < 3:
        return 0.0
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1))))


def _clip(subject: list, a: np.ndarray, b: np.ndarray) -> list:
    """One Sutherland-Hodgman pass: keep the part left of the directed edge a->b."""
    out = []
    ex, ey = b - a

    def side(p):
        return ex * (p[1] - a[1]) - ey * (p[0] - a[0])

    n = len(subject)
    for i in range(n):
        cur, nxt = subject[i], subject[(i + 1) % n]
        sc, sn = side(cur), side(nxt)
        if sc >= 0:
            out.append(cur)
        if (sc >= 0) != (sn >= 0):
            t = sc / (sc - sn)
            out.append(cur + t * (nxt - cur))
    return out


def convex_intersection(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Intersection polygon of two counter-clockwise convex polygons."""
    poly = [np.asarray(v, dtype=np.float64) for v in p]
    m = len(q)
    for i in range(m):
        if not poly:
            break
        poly = _clip(poly, q[i], q[(i + 1) % m])
    return np.array(poly).reshape(-1, 2)


def _sat_separated_2d(a: OrientedBox, b: OrientedBox) -> bool:
    # projected half-widths instead of corner lists; this runs in every hot loop
    ca, sa = math.cos(a.yaw), math.sin(a.yaw)
    cb, sb = math.cos(b.yaw), math.sin(b.yaw)
    ha, hb = a.half_extents, b.half_extents
    dx, dy = float(b.center[0] - a.center[0]), float(b.center[1] - a.center[1])
    for ux, uy in ((ca, sa), (-sa, ca), (cb, sb), (-sb, cb)):
        ra = ha[0] * abs(ca * ux + sa * uy) + ha[1] * abs(-sa * ux + ca * uy)
        rb = hb[0] * abs(cb * ux + sb * uy) + hb[1] * abs(-sb * ux + cb * uy)
        d = dx * ux + dy * uy
        if ra <= d - rb + _EPS or d + rb <= -ra + _EPS:
            return True
    return False


def footprint_overlap_area(a: OrientedBox, b: OrientedBox) -> float:
    """Area (m^2) of the intersection of the two ground-plane footprints."""
    if _sat_separated_2d(a, b):
        return 0.0
    area = _polygon_area(convex_intersection(a.footprint(), b.footprint()))
    return min(area, a.footprint_area(), b.footprint_area())


def footprints_overlap(a: OrientedBox, b: OrientedBox) -> bool:
    return not _sat_separated_2d(a, b)


def boxes_intersect_3d(a: OrientedBox, b: OrientedBox) -> bool:
    """Separating-axis test for two yaw-only boxes; touching faces do not count."""
    za, zb = a.z_range, b.z_range
    if za[1] <= zb[0] + _EPS or zb[1] <= za[0] + _EPS:
        return False
    return not _sat_separated_2d(a, b)


@dataclass(frozen=True)
class FunctionalGroups:
    """Unordered category pairs whose members are expected to sit close together."""

    pairs: frozenset

    @classmethod
    def from_pairs(cls, pairs) -> FunctionalGroups:
        return cls(frozenset(frozenset((a, b)) if a != b else frozenset((a,)) for a, b in pairs))

    def contains(self, c1: str, c2: str) -> bool:
        key = frozenset((c1, c2)) if c1 != c2 else frozenset((c1,))
        return key in self.pairs

    __call__ = contains

    def as_list(self) -> list[list[str]]:
        return sorted(sorted(p) if len(p) == 2 else [next(iter(p))] * 2 for p in self.pairs)


@dataclass(frozen=True)
class OptimizerConfig:
    beta: float = 0.05
    max_move_step: float = 0.1
    seed: int = 0
    max_attempts: int = 100
    refine_tol: float = 0.01
    max_passes: int = 3

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.max_move_step <= 0:
            raise ValueError("max_move_step must be positive")
