"""Seeded area-uniform samplers for simple analytic surfaces."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .geom import PointCloud, normalize_unit_sphere

SHAPES = ("plane", "sphere", "cylinder", "cone", "torus", "cube")

TORUS_MAJOR = 1.0
TORUS_MINOR = 0.35
CONE_HEIGHT = 2.0


def _plane(rng, n):
    uv = rng.uniform(-1.0, 1.0, (n, 2))
    return np.c_[uv, np.zeros(n)]


def _sphere(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _disk(rng, n, z):
    r = np.sqrt(rng.uniform(0.0, 1.0, n))
    t = rng.uniform(0.0, 2 * np.pi, n)
    return np.c_[r * np.cos(t), r * np.sin(t), np.full(n, z)]


def _cylinder(rng, n):
    # radius 1, height 2, closed: side area 4*pi, caps pi each
    part = rng.choice(3, size=n, p=[4 / 6, 1 / 6, 1 / 6])
    out = np.empty((n, 3))
    side = part == 0
    t = rng.uniform(0.0, 2 * np.pi, side.sum())
    out[side] = np.c_[np.cos(t), np.sin(t), rng.uniform(-1.0, 1.0, side.sum())]
    for cap, z in ((1, 1.0), (2, -1.0)):
        sel = part == cap
        out[sel] = _disk(rng, sel.sum(), z)
    return out


def _cone(rng, n):
    # apex at z = CONE_HEIGHT, unit base disk at z = 0
    slant = np.hypot(1.0, CONE_HEIGHT)
    side_area, base_area = np.pi * slant, np.pi
    on_side = rng.uniform(size=n) < side_area / (side_area + base_area)
    out = np.empty((n, 3))
    m = on_side.sum()
    s = np.sqrt(rng.uniform(0.0, 1.0, m))  # radius fraction, area grows with s^2
    t = rng.uniform(0.0, 2 * np.pi, m)
    out[on_side] = np.c_[s * np.cos(t), s * np.sin(t), CONE_HEIGHT * (1.0 - s)]
    out[~on_side] = _disk(rng, n - m, 0.0)
    return out


def torus_angles(rng, n, major=TORUS_MAJOR, minor=TORUS_MINOR):
    """Rejection-sample tube angles with density proportional to the area element."""
    out = np.empty(0)
    while out.size < n:
        v = rng.uniform(0.0, 2 * np.pi, 2 * n)
        keep = rng.uniform(0.0, major + minor, 2 * n) < major + minor * np.cos(v)
        out = np.concatenate([out, v[keep]])
    return out[:n], rng.uniform(0.0, 2 * np.pi, n)


def _torus(rng, n):
    v, u = torus_angles(rng, n)
    ring = TORUS_MAJOR + TORUS_MINOR * np.cos(v)
    return np.c_[ring * np.cos(u), ring * np.sin(u), TORUS_MINOR * np.sin(v)]


def _cube(rng, n):
    face = rng.integers(0, 6, n)
    uv = rng.uniform(-1.0, 1.0, (n, 2))
    axis, sign = face // 2, np.where(face % 2 == 0, 1.0, -1.0)
    out = np.empty((n, 3))
    for a in range(3):
        others = [b for b in range(3) if b != a]
        sel = axis == a
        out[sel, a] = sign[sel]
        out[np.ix_(sel, others)] = uv[sel]
    return out


_SAMPLERS = {
    "plane": _plane, "sphere": _sphere, "cylinder": _cylinder,
    "cone": _cone, "torus": _torus, "cube": _cube,
}


def gen_shape(kind: str, n: int, seed: int = 0, normalize: bool = True) -> PointCloud:
    """Sample ``n`` points uniformly by area from a unit-scale analytic surface.

    With ``normalize`` the result is centered and scaled into the unit sphere.
    """
    if kind not in _SAMPLERS:
        raise InvalidArgumentError(f"unknown shape {kind!r}; choose from {', '.join(SHAPES)}")
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    rng = np.random.default_rng(seed)
    pc = PointCloud(_SAMPLERS[kind](rng, n))
    if normalize:
        pc = normalize_unit_sphere(pc)[0]
    return pc
