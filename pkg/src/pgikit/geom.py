"""Point-set primitives: containers, normalization, sampling, neighbors, distances."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, InvalidInputError, EmptyInputError

EMD_SIZE_CAP = 512


@dataclass
class PointCloud:
    points: np.ndarray
    attrs: np.ndarray | None = None
    source_ids: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidInputError(f"points must have shape (N, 3), got {pts.shape}")
        if pts.shape[0] == 0:
            raise EmptyInputError("point cloud is empty")
        if not np.all(np.isfinite(pts)):
            raise InvalidInputError("point coordinates must be finite")
        self.points = pts
        n = pts.shape[0]
        if self.attrs is not None:
            attrs = np.asarray(self.attrs, dtype=np.float64)
            if attrs.ndim == 1:
                attrs = attrs[:, None]
            if attrs.shape[0] != n:
                raise InvalidInputError("attrs length differs from point count")
            self.attrs = attrs
        if self.source_ids is None:
            self.source_ids = np.arange(n, dtype=np.int64)
        else:
            ids = np.asarray(self.source_ids, dtype=np.int64).reshape(-1)
            if ids.shape[0] != n:
                raise InvalidInputError("source_ids length differs from point count")
            if np.unique(ids).shape[0] != n:
                raise InvalidInputError("source_ids must be unique")
            self.source_ids = ids

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, index) -> "PointCloud":
        index = np.asarray(index, dtype=np.int64)
        attrs = None if self.attrs is None else self.attrs[index]
        return PointCloud(self.points[index], attrs, self.source_ids[index])

    def with_points(self, points: np.ndarray) -> "PointCloud":
        return PointCloud(points, self.attrs, self.source_ids)


@dataclass
class PlanarEmbedding:
    coords: np.ndarray
    source_ids: np.ndarray | None = None

    def __post_init__(self):
        uv = np.asarray(self.coords, dtype=np.float64)
        if uv.ndim != 2 or uv.shape[1] != 2:
            raise InvalidInputError(f"coords must have shape (N, 2), got {uv.shape}")
        if not np.all(np.isfinite(uv)):
            raise InvalidInputError("embedding coordinates must be finite")
        if np.any(uv < 0.0) or np.any(uv > 1.0):
            raise InvalidInputError("embedding coordinates must lie in [0, 1]^2")
        self.coords = uv
        if self.source_ids is None:
            self.source_ids = np.arange(uv.shape[0], dtype=np.int64)
        else:
            self.source_ids = np.asarray(self.source_ids, dtype=np.int64).reshape(-1)
            if self.source_ids.shape[0] != uv.shape[0]:
                raise InvalidInputError("source_ids length differs from coordinate count")

    def __len__(self) -> int:
        return self.coords.shape[0]


@dataclass(frozen=True)
class Lattice:
    side: int
    coords: np.ndarray = field(repr=False)

    @classmethod
    def square(cls, side: int) -> "Lattice":
        """Row-major ``side x side`` grid over the unit square; entry ``r*side + c`` is ``(u, v) = (c, r) / (side - 1)``."""
        if side < 1:
            raise InvalidArgumentError("lattice side must be >= 1")
        if side == 1:
            return cls(1, np.array([[0.5, 0.5]]))
        ticks = np.arange(side, dtype=np.float64) / (side - 1)
        rows, cols = np.meshgrid(ticks, ticks, indexing="ij")
        coords = np.stack([cols.ravel(), rows.ravel()], axis=1)
        return cls(side, coords)

    @property
    def spacing(self) -> float:
        return 1.0 / (self.side - 1) if self.side > 1 else 1.0


@dataclass
class GuidanceDecomposition:
    guidance: PointCloud
    contexts: list[PointCloud]
    guidance_index_of: np.ndarray
    context_index: list[np.ndarray] = field(default_factory=list)


def _exact_centroid(points: np.ndarray) -> np.ndarray:
    # fsum is correctly rounded, so the centroid does not depend on point order
    n = points.shape[0]
    return np.array([math.fsum(points[:, d]) / n for d in range(points.shape[1])])


def _invertible_scale(points: np.ndarray, center: np.ndarray, scale: float) -> np.ndarray:
    """Return ``y ~ (x - center) / scale`` nudged by a few ulps so ``y * scale + center == x``."""
    y = (points - center) / scale
    bad = (y * scale + center) != points
    if not bad.any():
        return y
    for step in range(1, 5):
        for direction in (np.inf, -np.inf):
            cand = y.copy()
            for _ in range(step):
                cand = np.nextafter(cand, direction)
            fixed = bad & ((cand * scale + center) == points)
            y = np.where(fixed, cand, y)
            bad &= ~fixed
            if not bad.any():
                return y
    return y


def normalize_unit_sphere(pc: PointCloud) -> tuple[PointCloud, np.ndarray, float]:
    """Center a cloud on its centroid and scale it into the unit ball.

    Returns the normalized cloud together with ``(center, scale)``. Normalized
    values are nudged by a few ulps so that ``normalized * scale + center``
    reproduces the input bit for bit wherever binary64 allows it; elsewhere
    (typically coordinates near zero under a distant center) the error stays
    within two ulps of ``|x| + |center|``. A cloud whose points all coincide
    keeps ``scale = 1``.
    """
    pts = pc.points
    if not np.all(np.isfinite(pts)):
        raise InvalidInputError("point coordinates must be finite")
    center = _exact_centroid(pts)
    radius = float(np.sqrt(((pts - center) ** 2).sum(axis=1)).max())
    scale = radius if radius > 0.0 else 1.0
    return pc.with_points(_invertible_scale(pts, center, scale)), center, scale


def _sqdist_to(points: np.ndarray, q: np.ndarray) -> np.ndarray:
    d = points - q
    return (d * d).sum(axis=1)


def pairwise_sqdist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = a[:, None, :] - b[None, :, :]
    return (d * d).sum(axis=2)


def fps(pc: PointCloud | np.ndarray, count: int, start_index: int = 0) -> np.ndarray:
    """Greedy farthest point sampling; ties go to the lowest index."""
    pts = pc.points if isinstance(pc, PointCloud) else np.asarray(pc, dtype=np.float64)
    n = pts.shape[0]
    if not 1 <= count <= n:
        raise InvalidArgumentError(f"fps count must be in [1, {n}], got {count}")
    if not 0 <= start_index < n:
        raise InvalidArgumentError(f"fps start_index must be in [0, {n}), got {start_index}")
    chosen = np.empty(count, dtype=np.int64)
    chosen[0] = start_index
    mind = _sqdist_to(pts, pts[start_index])
    for i in range(1, count):
        nxt = int(np.argmax(mind))
        chosen[i] = nxt
        np.minimum(mind, _sqdist_to(pts, pts[nxt]), out=mind)
    return chosen


def knn(pc: PointCloud | np.ndarray, query, k: int) -> np.ndarray:
    """Indices of the ``k`` points nearest to ``query``, closest first, ties by index."""
    pts = pc.points if isinstance(pc, PointCloud) else np.asarray(pc, dtype=np.float64)
    n = pts.shape[0]
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"knn k must be in [1, {n}], got {k}")
    d = _sqdist_to(pts, np.asarray(query, dtype=np.float64))
    return np.argsort(d, kind="stable")[:k]


def decompose(pc: PointCloud, n_g: int, n_c: int) -> GuidanceDecomposition:
    """Split a cloud into ``n_g**2`` FPS centroids and their ``n_c``-point k-NN patches."""
    n_guid = n_g * n_g
    if n_guid > len(pc):
        raise InvalidArgumentError(f"n_G^2 = {n_guid} exceeds point count {len(pc)}")
    if n_c > len(pc):
        raise InvalidArgumentError(f"N_C = {n_c} exceeds point count {len(pc)}")
    g_idx = fps(pc, n_guid, 0)
    ctx_idx = [knn(pc, pc.points[i], n_c) for i in g_idx]
    contexts = [pc.subset(idx) for idx in ctx_idx]
    return GuidanceDecomposition(pc.subset(g_idx), contexts, g_idx, ctx_idx)


def _as_points(x) -> np.ndarray:
    pts = x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise InvalidArgumentError("point sets must be non-empty (N, D) arrays")
    return pts


def chamfer(a, b) -> float:
    """Symmetric Chamfer distance: sum of the two directional mean squared NN distances."""
    pa, pb = _as_points(a), _as_points(b)
    d = pairwise_sqdist(pa, pb)
    return float(d.min(axis=1).mean() + d.min(axis=0).mean())


def emd_exact(a, b, cap: int = EMD_SIZE_CAP, eps_final: float | None = None) -> float:
    """Mean matched squared distance of the optimal bijection between two equal-size sets."""
    from .assignment import auction_assign

    pa, pb = _as_points(a), _as_points(b)
    if pa.shape[0] != pb.shape[0]:
        raise InvalidArgumentError("EMD needs equally sized sets")
    n = pa.shape[0]
    if n > cap:
        raise InvalidArgumentError(f"EMD set size {n} exceeds cap {cap}")
    cost = pairwise_sqdist(pa, pb)
    if eps_final is None:
        eps_final = max(float(cost.max()), 1e-300) * 1e-9 / n
    res = auction_assign(cost, eps_final)
    return res.total_cost / n
