import numpy as np
import pytest

from pgikit.assignment import AssignmentResult
from pgikit.errors import InvalidArgumentError
from pgikit.geom import Lattice, PlanarEmbedding, PointCloud
from pgikit.resample import (Block, Pgi, assemble_pgi, pgi_to_points, resample_context,
                             resample_contexts, resample_guidance)


def test_guidance_identity():
    lat = Lattice.square(4)
    res = resample_guidance(PlanarEmbedding(lat.coords), lat)
    assert res.match.tolist() == list(range(16)) and res.total_cost == 0.0


def test_guidance_permutation_recovered():
    lat = Lattice.square(4)
    perm = np.random.default_rng(0).permutation(16)
    res = resample_guidance(PlanarEmbedding(lat.coords[perm]), lat)
    assert np.array_equal(res.match, perm)
    assert res.total_cost == 0.0


def test_guidance_jittered_lattice():
    lat = Lattice.square(8)
    jitter = np.random.default_rng(1).uniform(-0.2, 0.2, size=(64, 2)) * lat.spacing
    uv = np.clip(lat.coords + jitter, 0, 1)
    assert resample_guidance(PlanarEmbedding(uv), lat).match.tolist() == list(range(64))


def test_guidance_size_mismatch():
    with pytest.raises(InvalidArgumentError):
        resample_guidance(PlanarEmbedding(np.zeros((5, 2))), Lattice.square(2))


def _patch(n, seed=0):
    rng = np.random.default_rng(seed)
    return PointCloud(rng.normal(size=(n, 3)), source_ids=100 + rng.permutation(n))


def test_context_full_lattice_no_duplicates():
    lat = Lattice.square(3)
    ctx = _patch(9)
    block = resample_context(PlanarEmbedding(lat.coords), ctx, 3)
    assert not block.is_duplicate.any()
    assert block.assignment.total_cost == 0.0
    assert np.array_equal(block.pixels.reshape(-1, 3), ctx.points)
    assert np.array_equal(block.source_id.reshape(-1), ctx.source_ids)


def test_context_single_point_fills_block():
    ctx = _patch(1)
    block = resample_context(PlanarEmbedding([[0.5, 0.5]]), ctx, 4)
    assert (block.source_id == ctx.source_ids[0]).all()
    assert (~block.is_duplicate).sum() == 1
    assert np.array_equal(block.pixels, np.broadcast_to(ctx.points[0], (4, 4, 3)))


def test_context_duplicate_counts_and_fill_rule():
    ctx = _patch(12, seed=3)
    uv = np.random.default_rng(4).uniform(size=(12, 2))
    block = resample_context(PlanarEmbedding(uv), ctx, 5)
    assert (~block.is_duplicate).sum() == 12
    assert block.is_duplicate.sum() == 13
    # every matched point appears exactly once among non-duplicate cells
    assert sorted(block.source_id[~block.is_duplicate].tolist()) == sorted(ctx.source_ids.tolist())
    # duplicates copy the point whose embedding is nearest to the cell
    cells = Lattice.square(5).coords
    for cell in np.flatnonzero(block.is_duplicate.reshape(-1)):
        d = ((uv - cells[cell]) ** 2).sum(axis=1)
        assert block.source_id.reshape(-1)[cell] == ctx.source_ids[np.argmin(d)]


def test_context_too_many_points():
    with pytest.raises(InvalidArgumentError):
        resample_context(PlanarEmbedding(np.zeros((10, 2))), _patch(10), 3)


def test_batched_contexts_match_single(monkeypatch):
    rng = np.random.default_rng(5)
    ctxs = [_patch(12, seed=s) for s in range(9)]
    embs = [PlanarEmbedding(rng.uniform(size=(12, 2))) for _ in ctxs]
    singles = [resample_context(e, c, 5) for e, c in zip(embs, ctxs)]
    for threads in ("1", "3"):
        monkeypatch.setenv("PGIKIT_THREADS", threads)
        for a, b in zip(singles, resample_contexts(embs, ctxs, 5)):
            assert np.array_equal(a.source_id, b.source_id)
            assert np.array_equal(a.is_duplicate, b.is_duplicate)


def _blocks(n_blocks, k):
    out = []
    for i in range(n_blocks):
        pix = np.full((k, k, 3), float(i))
        out.append(Block(pix, np.full((k, k), i), np.zeros((k, k), bool)))
    return out


def test_assemble_identity_layout():
    n_g, k = 3, 2
    res = AssignmentResult(np.arange(9), 0.0, 0.0)
    pgi = assemble_pgi(res, _blocks(9, k), n_g, k, block_of=np.arange(9) * 10)
    assert pgi.m == 6
    for i in range(9):
        r, c = divmod(i, n_g)
        assert (pgi.block(r, c) == i).all()
    assert pgi.block_of.tolist() == [[0, 10, 20], [30, 40, 50], [60, 70, 80]]


def test_assemble_pixel_formula():
    n_g, k = 2, 3
    rng = np.random.default_rng(0)
    blocks = [Block(rng.normal(size=(k, k, 3)), rng.integers(0, 99, (k, k)), rng.uniform(size=(k, k)) < 0.5)
              for _ in range(4)]
    match = np.array([2, 0, 3, 1])
    pgi = assemble_pgi(AssignmentResult(match, 0.0, 0.0), blocks, n_g, k)
    for i, b in enumerate(blocks):
        R, C = divmod(match[i], n_g)
        for r in range(k):
            for c in range(k):
                assert np.array_equal(pgi.pixels[R * k + r, C * k + c], b.pixels[r, c])
                assert pgi.source_id[R * k + r, C * k + c] == b.source_id[r, c]
                assert pgi.is_duplicate[R * k + r, C * k + c] == b.is_duplicate[r, c]
    # grid cell (1, 0) is block index 2, which match assigns to blocks[0]
    assert np.array_equal(pgi.blocks()[1, 0], blocks[0].pixels)


def test_assemble_rejects_non_bijection():
    with pytest.raises(InvalidArgumentError):
        assemble_pgi(AssignmentResult(np.array([0, 0, 1, 2]), 0.0, 0.0), _blocks(4, 2), 2, 2)


def test_pipeline_pgi_shape_and_membership(small_run):
    pc, out = small_run
    pgi = out.pgi
    assert pgi.pixels.shape == (80, 80, 3)
    rows = {tuple(p): i for i, p in zip(pc.source_ids, pc.points)}
    for p, sid in zip(pgi.pixels.reshape(-1, 3), pgi.source_id.reshape(-1)):
        assert rows[tuple(p)] == sid


def test_pgi_to_points(small_run):
    pc, out = small_run
    pgi = out.pgi
    every = pgi_to_points(pgi)
    assert len(every) == pgi.m ** 2
    # multiset of points equals the assembled pixels
    assert np.array_equal(np.sort(every.points, axis=0), np.sort(pgi.pixels.reshape(-1, 3), axis=0))
    uniq = pgi_to_points(pgi, dedupe=True)
    idx = np.searchsorted(pc.source_ids, uniq.source_ids)
    assert np.array_equal(pc.points[idx], uniq.points)
    assert len(uniq) == np.unique(pgi.source_id).size


def test_pgi_validation():
    with pytest.raises(InvalidArgumentError):
        Pgi(2, 2, np.zeros((3, 3, 3)), np.zeros((4, 4)), np.zeros((4, 4), bool))
