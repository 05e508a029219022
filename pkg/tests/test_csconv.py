import math

import numpy as np
import pytest

from pgikit.csconv import (CsconvParams, FeatureScaler, csconv_block, global_feature, init_head,
                           partition_concentric, regional_embedding, ring_index, toy_classify,
                           train_head)
from pgikit.errors import InvalidArgumentError
from pgikit.nn import MlpStack, read_checkpoint, write_checkpoint
from pgikit.resample import Pgi


@pytest.fixture(scope="module")
def params():
    return CsconvParams.init(0)


def _pgi(n_g=3, k=5, seed=0):
    m = n_g * k
    rng = np.random.default_rng(seed)
    return Pgi(n_g, k, rng.normal(size=(m, m, 3)), np.arange(m * m).reshape(m, m),
               np.zeros((m, m), bool))


def test_partition_k5():
    part = partition_concentric(5)
    assert [s.size for s in part.squares] == [1, 8, 16]
    assert part.inner.tolist() == [12]


@pytest.mark.parametrize("k", [3, 4])
def test_partition_two_rings_reuses_outer(k):
    part = partition_concentric(k)
    assert np.array_equal(part.inter, part.outer)
    assert part.inner.size + part.inter.size == k * k


@pytest.mark.parametrize("k", [5, 6, 7, 8, 10, 15])
def test_partition_covers_disjointly(k):
    part = partition_concentric(k)
    allpix = np.concatenate(part.squares)
    assert sorted(allpix.tolist()) == list(range(k * k))
    rings = ring_index(k)
    # every square is a union of whole rings, ordered center outwards
    for sq in part.squares:
        ring_set = set(rings[sq].tolist())
        assert sq.size == sum((rings == r).sum() for r in ring_set)
    assert rings[part.inner].max() < rings[part.inter].min() <= rings[part.inter].max() < rings[part.outer].min()


def test_partition_band_sizes_k10():
    # five rings split 3 / 1 / 1 with the inner band taking the remainder
    rings = ring_index(10)
    part = partition_concentric(10)
    assert sorted(set(rings[part.inner].tolist())) == [0, 1, 2]
    assert set(rings[part.outer].tolist()) == {4}


def test_partition_rejects_small_k():
    with pytest.raises(InvalidArgumentError):
        partition_concentric(2)


def _oracle(params: CsconvParams, block: np.ndarray) -> list[float]:
    """Straight-line reimplementation of the block embedding."""
    k = block.shape[0]
    px = [tuple(map(float, block[i // k, i % k])) for i in range(k * k)]

    def dense(stack: MlpStack, x):
        for layer in stack.layers:
            y = []
            for o in range(layer.out_dim):
                s = float(layer.bias[o]) + math.fsum(float(layer.weight[o, j]) * x[j] for j in range(len(x)))
                y.append(max(s, 0.0) if layer.activation == "relu" else s)
            x = y
        return x

    def pool(stack, pts):
        feats = [dense(stack, list(p)) for p in pts]
        return [max(f[c] for f in feats) for c in range(len(feats[0]))]

    codes = []
    for sq in partition_concentric(k).squares:
        pts = [px[i] for i in sq]
        c = [sum(p[d] for p in pts) / len(pts) for d in range(3)]
        cen = [[p[d] - c[d] for d in range(3)] for p in pts]
        r = max(math.sqrt(sum(v * v for v in p)) for p in cen) or 1.0
        codes += pool(params.square_mlp, [[v / r for v in p] for p in cen])
    v_r = dense(params.fuse_fc, codes)
    v_a = pool(params.pos_mlp, px)
    return dense(params.out_fuse, v_r + v_a)


def test_block_matches_scalar_oracle(params):
    block = np.random.default_rng(1).normal(size=(5, 5, 3))
    assert np.allclose(csconv_block(params, block), _oracle(params, block), rtol=1e-9, atol=1e-12)


def test_within_square_permutation_bit_identical(params):
    rng = np.random.default_rng(2)
    part = partition_concentric(5)
    for trial in range(10):
        block = rng.normal(size=(5, 5, 3))
        v = csconv_block(params, block)
        flat = block.reshape(25, 3).copy()
        for sq in part.squares:
            flat[sq] = flat[rng.permutation(sq)]
        assert np.array_equal(csconv_block(params, flat.reshape(5, 5, 3)), v)


def test_constant_block_uses_only_position(params):
    zero_pos = CsconvParams(params.square_mlp, params.fuse_fc,
                            MlpStack([l for l in params.pos_mlp.layers]), params.out_fuse)
    zero_pos.pos_mlp.layers[0] = type(params.pos_mlp.layers[0])(
        np.zeros_like(params.pos_mlp.layers[0].weight), np.zeros(64), "relu")
    a = csconv_block(zero_pos, np.broadcast_to([1.0, 2.0, 3.0], (5, 5, 3)))
    b = csconv_block(zero_pos, np.broadcast_to([-4.0, 0.5, 9.0], (5, 5, 3)))
    assert np.array_equal(a, b)
    # with the positional path in place the two constants are told apart
    assert not np.array_equal(csconv_block(params, np.broadcast_to([1.0, 2.0, 3.0], (5, 5, 3))),
                              csconv_block(params, np.broadcast_to([-4.0, 0.5, 9.0], (5, 5, 3))))


def test_translation_structural_vs_positional(params):
    block = np.random.default_rng(3).normal(size=(5, 5, 3))
    moved = block + np.array([0.5, -0.25, 2.0])
    assert not np.allclose(csconv_block(params, block), csconv_block(params, moved))
    no_pos = CsconvParams(params.square_mlp, params.fuse_fc, params.pos_mlp,
                          MlpStack([type(params.out_fuse.layers[0])(
                              np.hstack([params.out_fuse.layers[0].weight[:, :64], np.zeros((128, 64))]),
                              params.out_fuse.layers[0].bias, "identity")]))
    assert np.allclose(csconv_block(no_pos, block), csconv_block(no_pos, moved), rtol=1e-12, atol=1e-12)


def test_regional_embedding_shape_and_cells(params):
    pgi = _pgi(3, 5)
    fmap = regional_embedding(params, pgi)
    assert fmap.shape == (128, 3, 3)
    for r in range(3):
        for c in range(3):
            # batched and single-block matmuls may sum in a different order
            assert np.allclose(fmap[:, r, c], csconv_block(params, pgi.block(r, c)),
                               rtol=1e-12, atol=1e-12)


def test_regional_embedding_is_local(params):
    pgi = _pgi(4, 5)
    base = regional_embedding(params, pgi)
    pgi.pixels[5:10, 10:15] += 0.3
    changed = np.any(regional_embedding(params, pgi) != base, axis=0)
    assert changed.tolist() == [[False] * 4, [False, False, True, False], [False] * 4, [False] * 4]


def test_regional_embedding_needs_k3(params):
    with pytest.raises(InvalidArgumentError):
        regional_embedding(params, _pgi(2, 2))


def test_zero_head_gives_zero_scores(params):
    head = init_head(4)
    for layer in head.layers:
        layer.weight[:] = 0
        layer.bias[:] = 0
    assert np.array_equal(toy_classify(params, head, _pgi()), np.zeros(4))
    with pytest.raises(InvalidArgumentError):
        toy_classify(params, init_head(4, d_v=32), _pgi())


def test_scores_invariant_to_square_permutations(params):
    pgi = _pgi(2, 5, seed=4)
    head = init_head(3, seed=1)
    s = toy_classify(params, head, pgi)
    part = partition_concentric(5)
    rng = np.random.default_rng(0)
    for R in range(2):
        for C in range(2):
            blk = pgi.block(R, C).reshape(25, 3)
            for sq in part.squares:
                blk[sq] = blk[rng.permutation(sq)]
            pgi.pixels[R * 5:(R + 1) * 5, C * 5:(C + 1) * 5] = blk.reshape(5, 5, 3)
    assert np.array_equal(toy_classify(params, head, pgi), s)


def test_head_training_separates_features(params):
    rng = np.random.default_rng(0)
    feats = np.r_[rng.normal(-1, 0.3, (20, 128)), rng.normal(1, 0.3, (20, 128))]
    labels = np.r_[np.zeros(20, int), np.ones(20, int)]
    scaler = FeatureScaler.fit(feats)
    head = init_head(2)
    trace = train_head(head, scaler(feats), labels, steps=100)
    assert trace[-1] < trace[0]
    pgi = _pgi()
    assert toy_classify(params, head, pgi, scaler).shape == (2,)
    assert global_feature(params, pgi).shape == (128,)


def test_params_checkpoint_round_trip(params, tmp_path):
    write_checkpoint(tmp_path / "p.ckpt", params.stacks())
    back = CsconvParams.from_stacks(read_checkpoint(tmp_path / "p.ckpt"))
    assert back.d_v == 128
    with pytest.raises(InvalidArgumentError):
        CsconvParams.from_stacks(back.stacks()[:3])
