"""Grid resampling: snap planar embeddings onto lattice cells and assemble PGIs."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .assignment import AssignmentResult, auction_assign, auction_assign_batch
from .errors import InvalidArgumentError
from .geom import Lattice, PlanarEmbedding, PointCloud, pairwise_sqdist

DEFAULT_EPS = 1e-7


@dataclass
class Block:
    pixels: np.ndarray  # (k, k, 3)
    source_id: np.ndarray  # (k, k)
    is_duplicate: np.ndarray  # (k, k) bool
    assignment: AssignmentResult | None = None

    @property
    def k(self) -> int:
        return self.pixels.shape[0]


@dataclass
class Pgi:
    """Block-structured point geometry image of side ``m = n_g * k``.

    ``block_of[R, C]`` holds the source id of the guidance centroid whose patch
    fills block ``(R, C)``; ``transform`` is the optional ``(center, scale)`` of
    the unit-sphere normalization used while flattening.
    """

    n_g: int
    k: int
    pixels: np.ndarray
    source_id: np.ndarray
    is_duplicate: np.ndarray
    block_of: np.ndarray | None = None
    transform: tuple[np.ndarray, float] | None = None

    def __post_init__(self):
        m = self.n_g * self.k
        self.pixels = np.asarray(self.pixels, dtype=np.float64)
        self.source_id = np.asarray(self.source_id, dtype=np.int64)
        self.is_duplicate = np.asarray(self.is_duplicate, dtype=bool)
        if self.pixels.shape != (m, m, 3):
            raise InvalidArgumentError(f"pixels must be ({m}, {m}, 3), got {self.pixels.shape}")
        if self.source_id.shape != (m, m) or self.is_duplicate.shape != (m, m):
            raise InvalidArgumentError("provenance arrays must be m x m")
        if self.block_of is not None:
            self.block_of = np.asarray(self.block_of, dtype=np.int64).reshape(self.n_g, self.n_g)

    @property
    def m(self) -> int:
        return self.n_g * self.k

    def block(self, row: int, col: int) -> np.ndarray:
        k = self.k
        return self.pixels[row * k:(row + 1) * k, col * k:(col + 1) * k]

    def blocks(self) -> np.ndarray:
        """All blocks as an ``(n_g, n_g, k, k, 3)`` view."""
        n, k = self.n_g, self.k
        return self.pixels.reshape(n, k, n, k, 3).transpose(0, 2, 1, 3, 4)


def worker_count() -> int:
    raw = os.environ.get("PGIKIT_THREADS", "").strip()
    n = int(raw) if raw else 0
    return n if n > 0 else (os.cpu_count() or 1)


def resample_guidance(f_g: PlanarEmbedding, lattice: Lattice,
                      eps_final: float = DEFAULT_EPS) -> AssignmentResult:
    """Bijectively assign guidance embeddings to lattice cells (squared-distance cost)."""
    if len(f_g) != lattice.side ** 2:
        raise InvalidArgumentError(
            f"{len(f_g)} guidance embeddings for a {lattice.side}x{lattice.side} lattice"
        )
    return auction_assign(pairwise_sqdist(f_g.coords, lattice.coords), eps_final)


def _check_patch(f_c: PlanarEmbedding, context: PointCloud, k: int) -> None:
    if len(f_c) != len(context):
        raise InvalidArgumentError("embedding and context sizes differ")
    if len(f_c) > k * k:
        raise InvalidArgumentError(f"N_C = {len(f_c)} exceeds the k*k = {k * k} block cells")


def _fill_block(cost: np.ndarray, res: AssignmentResult, context: PointCloud, k: int) -> Block:
    owner = np.full(k * k, -1, dtype=np.int64)
    owner[res.match] = np.arange(cost.shape[0])
    dup = owner < 0
    # column-wise argmin picks the lowest point index on ties
    owner[dup] = cost[:, dup].argmin(axis=0)
    return Block(
        pixels=context.points[owner].reshape(k, k, 3),
        source_id=context.source_ids[owner].reshape(k, k),
        is_duplicate=dup.reshape(k, k),
        assignment=res,
    )


def resample_context(f_c: PlanarEmbedding, context: PointCloud, k: int,
                     eps_final: float = DEFAULT_EPS) -> Block:
    """Place a patch on a redundant ``k x k`` lattice.

    Points are matched one-to-one to cells; every left-over cell copies the
    patch point whose embedding lies closest to that cell and is flagged as a
    duplicate.
    """
    _check_patch(f_c, context, k)
    cost = pairwise_sqdist(f_c.coords, Lattice.square(k).coords)
    return _fill_block(cost, auction_assign(cost, eps_final), context, k)


def _resample_chunk(jobs, k: int, eps_final: float) -> list[Block]:
    cells = Lattice.square(k).coords
    costs = np.stack([pairwise_sqdist(f.coords, cells) for f, _ in jobs])
    results = auction_assign_batch(costs, eps_final)
    return [_fill_block(cost, res, c, k) for cost, res, (_, c) in zip(costs, results, jobs)]


def resample_contexts(embeddings: list[PlanarEmbedding], contexts: list[PointCloud], k: int,
                      eps_final: float = DEFAULT_EPS) -> list[Block]:
    """Resample equally sized patches as one batched assignment.

    Output matches :func:`resample_context` patch by patch and comes back in
    input order; with several workers the batch is split into ordered chunks.
    """
    if len(embeddings) != len(contexts):
        raise InvalidArgumentError("need one embedding per context patch")
    if not contexts:
        return []
    for f, c in zip(embeddings, contexts):
        _check_patch(f, c, k)
    if len({len(c) for c in contexts}) != 1:
        return [resample_context(f, c, k, eps_final) for f, c in zip(embeddings, contexts)]
    jobs = list(zip(embeddings, contexts))
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return _resample_chunk(jobs, k, eps_final)
    size = -(-len(jobs) // workers)
    chunks = [jobs[i:i + size] for i in range(0, len(jobs), size)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda ch: _resample_chunk(ch, k, eps_final), chunks))
    return [b for part in parts for b in part]


def assemble_pgi(guidance_assign: AssignmentResult, blocks: list[Block], n_g: int, k: int,
                 block_of=None, transform=None) -> Pgi:
    """Put block ``i`` at the block-grid cell assigned to guidance embedding ``i``.

    ``block_of``, when given, lists the guidance source id of each block in
    block order and is scattered to grid positions alongside the pixels.
    """
    n_blocks = n_g * n_g
    if len(blocks) != n_blocks:
        raise InvalidArgumentError(f"expected {n_blocks} blocks, got {len(blocks)}")
    match = np.asarray(guidance_assign.match, dtype=np.int64)
    if match.shape[0] != n_blocks or np.unique(match).shape[0] != n_blocks:
        raise InvalidArgumentError("guidance assignment must be a bijection onto the block grid")
    if match.min() < 0 or match.max() >= n_blocks:
        raise InvalidArgumentError("guidance assignment points outside the block grid")
    if any(b.k != k for b in blocks):
        raise InvalidArgumentError(f"every block must be {k}x{k}")

    m = n_g * k
    pixels = np.empty((n_g, n_g, k, k, 3))
    ids = np.empty((n_g, n_g, k, k), dtype=np.int64)
    dup = np.empty((n_g, n_g, k, k), dtype=bool)
    rows, cols = np.divmod(match, n_g)
    for i, b in enumerate(blocks):
        pixels[rows[i], cols[i]] = b.pixels
        ids[rows[i], cols[i]] = b.source_id
        dup[rows[i], cols[i]] = b.is_duplicate
    grid_of = None
    if block_of is not None:
        block_of = np.asarray(block_of, dtype=np.int64)
        grid_of = np.empty((n_g, n_g), dtype=np.int64)
        grid_of[rows, cols] = block_of

    def flat(a):
        return a.swapaxes(1, 2).reshape((m, m) + a.shape[4:])

    return Pgi(n_g, k, flat(pixels), flat(ids), flat(dup), grid_of, transform)


def pgi_to_points(pgi: Pgi, dedupe: bool = False) -> PointCloud:
    """Read a PGI back as points.

    Without ``dedupe`` every pixel becomes a point (ids are pixel indices);
    with it, one point per distinct source id, ordered by id.
    """
    pts = pgi.pixels.reshape(-1, 3)
    if not dedupe:
        return PointCloud(pts.copy())
    ids = pgi.source_id.reshape(-1)
    uniq, first = np.unique(ids, return_index=True)
    return PointCloud(pts[first].copy(), source_ids=uniq)
