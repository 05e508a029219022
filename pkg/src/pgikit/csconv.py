"""Concentric-square regional embedding of PGI blocks and a toy shape classifier."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .nn import Momentum, MlpStack, mlp_backward, mlp_forward, mlp_forward_cached
from .resample import Pgi

EMBED_DIM = 128


@dataclass(frozen=True)
class ConcentricPartition:
    """Flat (row-major) pixel indices of the innermost, intermediate and outermost squares."""

    k: int
    inner: np.ndarray
    inter: np.ndarray
    outer: np.ndarray

    @property
    def squares(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.inner, self.inter, self.outer


def ring_index(k: int) -> np.ndarray:
    """Chebyshev ring number of each pixel of a ``k x k`` block, 0 at the center."""
    c = (k - 1) / 2.0
    r = np.arange(k)
    cheb = np.maximum(np.abs(r[:, None] - c), np.abs(r[None, :] - c))
    # even k has a half-integer center; shift so the innermost ring is 0
    return np.floor(cheb).astype(np.int64).ravel() if k % 2 else (cheb - 0.5).astype(np.int64).ravel()


def partition_concentric(k: int) -> ConcentricPartition:
    """Group the ``ceil(k/2)`` rings into three contiguous bands, center outwards.

    Outer bands get ``R // 3`` rings each and the innermost band the rest. With
    only two rings (k = 3, 4) the outermost square reuses the outer ring.
    """
    if k < 3:
        raise InvalidArgumentError(f"concentric partition needs k >= 3, got {k}")
    rings = ring_index(k)
    n_rings = (k + 1) // 2
    if n_rings >= 3:
        width = n_rings // 3
        cut_outer = n_rings - width
        cut_inter = n_rings - 2 * width
        bands = (rings < cut_inter, (rings >= cut_inter) & (rings < cut_outer), rings >= cut_outer)
    else:
        bands = (rings == 0, rings == 1, rings == 1)
    return ConcentricPartition(k, *(np.flatnonzero(b) for b in bands))


@dataclass
class CsconvParams:
    square_mlp: MlpStack
    fuse_fc: MlpStack
    pos_mlp: MlpStack
    out_fuse: MlpStack

    @classmethod
    def init(cls, seed: int = 0, d_v: int = EMBED_DIM) -> "CsconvParams":
        rng = np.random.default_rng(seed)
        return cls(
            square_mlp=MlpStack.build((3, 64, 128), ("relu", "relu"), rng),
            fuse_fc=MlpStack.build((384, 64), ("identity",), rng),
            pos_mlp=MlpStack.build((3, 64), ("relu",), rng),
            out_fuse=MlpStack.build((128, d_v), ("identity",), rng),
        )

    @property
    def d_v(self) -> int:
        return self.out_fuse.out_dim

    def stacks(self) -> list[MlpStack]:
        return [self.square_mlp, self.fuse_fc, self.pos_mlp, self.out_fuse]

    @classmethod
    def from_stacks(cls, stacks: list[MlpStack]) -> "CsconvParams":
        if len(stacks) != 4:
            raise InvalidArgumentError("a CSConv checkpoint holds exactly 4 stacks")
        params = cls(*stacks)
        if params.square_mlp.in_dim != 3 or params.pos_mlp.in_dim != 3:
            raise InvalidArgumentError("CSConv point maps must consume 3D coordinates")
        if params.fuse_fc.in_dim != 3 * params.square_mlp.out_dim:
            raise InvalidArgumentError("inter-square fusion width does not match the square codewords")
        if params.out_fuse.in_dim != params.fuse_fc.out_dim + params.pos_mlp.out_dim:
            raise InvalidArgumentError("output fusion width does not match the two codewords")
        return params


def _canonical(sets: np.ndarray) -> np.ndarray:
    """Sort the points of every set in ``(B, n, 3)`` lexicographically by (x, y, z)."""
    b, n, _ = sets.shape
    flat = sets.reshape(-1, 3)
    owner = np.repeat(np.arange(b), n)
    order = np.lexsort((flat[:, 2], flat[:, 1], flat[:, 0], owner))
    return flat[order].reshape(b, n, 3)


def _unit_sphere(sets: np.ndarray) -> np.ndarray:
    centered = sets - sets.mean(axis=1, keepdims=True)
    radius = np.sqrt((centered ** 2).sum(axis=2)).max(axis=1)
    radius[radius == 0] = 1.0
    return centered / radius[:, None, None]


def _pooled(net: MlpStack, sets: np.ndarray) -> np.ndarray:
    b, n, _ = sets.shape
    return mlp_forward(net, sets.reshape(b * n, 3)).reshape(b, n, -1).max(axis=1)


def csconv_blocks(params: CsconvParams, blocks: np.ndarray,
                  partition: ConcentricPartition | None = None) -> np.ndarray:
    """Embed a batch of ``(B, k, k, 3)`` blocks into ``(B, d_v)`` vectors."""
    blocks = np.asarray(blocks, dtype=np.float64)
    if blocks.ndim != 4 or blocks.shape[1] != blocks.shape[2] or blocks.shape[3] != 3:
        raise InvalidArgumentError(f"blocks must be (B, k, k, 3), got {blocks.shape}")
    b, k = blocks.shape[0], blocks.shape[1]
    if partition is None:
        partition = partition_concentric(k)
    pix = blocks.reshape(b, k * k, 3)

    codes = []
    width = params.square_mlp.out_dim
    for square in partition.squares:
        if square.size == 0:
            codes.append(np.zeros((b, width)))
            continue
        pts = _unit_sphere(_canonical(pix[:, square]))
        codes.append(_pooled(params.square_mlp, pts))
    v_r = mlp_forward(params.fuse_fc, np.concatenate(codes, axis=1))
    v_a = _pooled(params.pos_mlp, _canonical(pix))
    return mlp_forward(params.out_fuse, np.concatenate([v_r, v_a], axis=1))


def csconv_block(params: CsconvParams, block: np.ndarray,
                 partition: ConcentricPartition | None = None) -> np.ndarray:
    """Regional embedding of one ``k x k x 3`` block.

    Each concentric square is centered and scaled to the unit sphere, lifted by
    the shared square MLP and max-pooled; the three codewords are fused into a
    structural code, which is joined with a max-pooled embedding of the raw
    pixel coordinates and fused to ``d_v`` channels.
    """
    return csconv_blocks(params, np.asarray(block)[None], partition)[0]


def regional_embedding(params: CsconvParams, pgi: Pgi) -> np.ndarray:
    """``(d_v, n_g, n_g)`` feature map with one regional vector per PGI block."""
    n, k = pgi.n_g, pgi.k
    if k < 3:
        raise InvalidArgumentError(f"CSConv needs blocks of side >= 3, got k={k}")
    vecs = csconv_blocks(params, pgi.blocks().reshape(n * n, k, k, 3))
    return vecs.T.reshape(params.d_v, n, n)


def init_head(n_classes: int, seed: int = 0, d_v: int = EMBED_DIM, hidden: int = 64) -> MlpStack:
    rng = np.random.default_rng(seed)
    return MlpStack.build((d_v, hidden, n_classes), ("relu", "identity"), rng)


def global_feature(params: CsconvParams, pgi: Pgi) -> np.ndarray:
    fmap = regional_embedding(params, pgi)
    return fmap.reshape(fmap.shape[0], -1).max(axis=1)


@dataclass
class FeatureScaler:
    """Per-channel standardization fitted on training features."""
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "FeatureScaler":
        x = np.asarray(features, dtype=np.float64)
        std = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(std > 0, std, 1.0))

    def __call__(self, features: np.ndarray) -> np.ndarray:
        return (np.asarray(features, dtype=np.float64) - self.mean) / self.std


def toy_classify(params: CsconvParams, head: MlpStack, pgi: Pgi,
                 scaler: FeatureScaler | None = None) -> np.ndarray:
    """Class scores from the global channel-wise max of the regional feature map."""
    if head.in_dim != params.d_v:
        raise InvalidArgumentError(f"head expects {head.in_dim} inputs, feature map has {params.d_v}")
    feat = global_feature(params, pgi)
    if scaler is not None:
        feat = scaler(feat)
    return mlp_forward(head, feat)[0]


def _softmax_xent(scores: np.ndarray, labels: np.ndarray):
    shifted = scores - scores.max(axis=1, keepdims=True)
    logp = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = labels.shape[0]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n


def train_head(head: MlpStack, features: np.ndarray, labels, steps: int = 500,
               learning_rate: float = 0.05, momentum: float = 0.9) -> list[float]:
    """Full-batch softmax cross-entropy training of ``head`` on precomputed global features."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    opt = Momentum(head.parameters(), learning_rate, momentum)
    trace = []
    for _ in range(steps):
        out, cache = mlp_forward_cached(head, x)
        loss, grad = _softmax_xent(out, y)
        if not math.isfinite(loss):
            raise InvalidArgumentError("head training produced a non-finite loss")
        trace.append(loss)
        grads, _ = mlp_backward(head, x, grad, cache)
        opt.step(grads)
    return trace
