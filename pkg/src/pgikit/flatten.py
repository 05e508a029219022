"""Learned flattening of point sets onto the unit square.

A grid-deforming teacher reconstructs the guidance points from a lattice; its
lattice coordinates are transferred to the guidance points by optimal
assignment and distilled into a point-to-plane student, which is then
fine-tuned with a nearest-neighbor repulsion hinge. Context patches are
flattened by one shared point-to-plane network under the same hinge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .assignment import auction_assign
from .errors import InvalidArgumentError, TrainingDivergedError
from .geom import Lattice, PlanarEmbedding, PointCloud, normalize_unit_sphere, pairwise_sqdist
from .nn import Momentum, MlpStack, mlp_backward, mlp_forward, mlp_forward_cached

CODE_DIM = 128


@dataclass
class TrainConfig:
    learning_rate: float = 1e-3
    steps: int = 500
    seed: int = 0
    epsilon: float | None = None
    momentum: float = 0.9
    # global gradient-norm clip and cosine learning-rate decay (off by default)
    clip_norm: float | None = None
    cosine: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise InvalidArgumentError("learning_rate must be positive")
        if self.steps < 1:
            raise InvalidArgumentError("steps must be >= 1")
        if self.epsilon is not None and not 0 < self.epsilon < 1:
            raise InvalidArgumentError("epsilon must lie in (0, 1)")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise InvalidArgumentError("clip_norm must be positive")

    def lr_at(self, step: int) -> float:
        if not self.cosine:
            return self.learning_rate
        return self.learning_rate * 0.5 * (1.0 + math.cos(math.pi * step / self.steps))

    def clip(self, grads: list[np.ndarray]) -> list[np.ndarray]:
        if self.clip_norm is None:
            return grads
        norm = math.sqrt(sum(float((g * g).sum()) for g in grads))
        if norm <= self.clip_norm:
            return grads
        return [g * (self.clip_norm / norm) for g in grads]


@dataclass
class FlattenModel:
    encoder: MlpStack
    teacher: tuple[MlpStack, MlpStack]
    student: MlpStack
    context: MlpStack

    @classmethod
    def init(cls, seed: int = 0, code_dim: int = CODE_DIM) -> "FlattenModel":
        rng = np.random.default_rng(seed)
        relu3 = ("relu", "relu", "relu")
        head = ("relu", "relu", "identity")
        squash = ("relu", "relu", "sigmoid")
        teacher = (
            MlpStack.build((2 + code_dim, 256, 128, 3), head, rng),
            MlpStack.build((3 + code_dim, 256, 128, 3), head, rng),
        )
        return cls(
            encoder=MlpStack.build((3, 64, 128, code_dim), relu3, rng),
            teacher=teacher,
            student=MlpStack.build((3 + code_dim, 256, 128, 2), squash, rng),
            context=MlpStack.build((3 + code_dim, 256, 128, 2), squash, rng),
        )

    @property
    def code_dim(self) -> int:
        return self.encoder.out_dim

    def stacks(self) -> list[MlpStack]:
        return [self.encoder, *self.teacher, self.student, self.context]

    @classmethod
    def from_stacks(cls, stacks: list[MlpStack]) -> "FlattenModel":
        if len(stacks) != 5:
            raise InvalidArgumentError("a flattening checkpoint holds exactly 5 stacks")
        enc, t1, t2, student, context = stacks
        return cls(enc, (t1, t2), student, context)


# --- codeword -------------------------------------------------------------

def _encode_cached(encoder: MlpStack, points: np.ndarray):
    # max-pooling only sees the set of distinct rows; canonicalizing them makes
    # the codeword bit-identical under shuffles and duplication
    uniq = np.unique(points, axis=0)
    feats, cache = mlp_forward_cached(encoder, uniq)
    arg = np.argmax(feats, axis=0)
    z = feats[arg, np.arange(feats.shape[1])]
    return z, (uniq, cache, arg)


def _encode_backward(encoder: MlpStack, enc_state, dz: np.ndarray):
    uniq, cache, arg = enc_state
    up = np.zeros_like(cache[-1])
    up[arg, np.arange(up.shape[1])] = dz
    grads, _ = mlp_backward(encoder, uniq, up, cache)
    return grads


def encode_codeword(encoder: MlpStack, pc: PointCloud | np.ndarray) -> np.ndarray:
    """Channel-wise max over the point-wise encoder features."""
    pts = pc.points if isinstance(pc, PointCloud) else np.asarray(pc, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise InvalidArgumentError("cannot encode an empty point set")
    return _encode_cached(encoder, pts)[0]


def _with_code(x: np.ndarray, z: np.ndarray) -> np.ndarray:
    return np.concatenate([x, np.broadcast_to(z, (x.shape[0], z.shape[0]))], axis=1)


# --- grid-to-surface teacher ------------------------------------------------

def _g2sd_cached(model: FlattenModel, grid: np.ndarray, z: np.ndarray):
    unit1, unit2 = model.teacher
    # the lattice is fed centered on the origin, spanning [-1, 1]^2
    x1 = _with_code(2.0 * grid - 1.0, z)
    r1, c1 = mlp_forward_cached(unit1, x1)
    x2 = _with_code(r1, z)
    r2, c2 = mlp_forward_cached(unit2, x2)
    return r2, (x1, c1, x2, c2)


def g2sd_forward(model: FlattenModel, lattice: Lattice, z: np.ndarray) -> PointCloud:
    """Deform the lattice into 3D with two stacked units: ``u2([u1([grid; z]); z])``."""
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if z.shape[0] != model.code_dim:
        raise InvalidArgumentError(f"codeword width {z.shape[0]} != {model.code_dim}")
    return PointCloud(_g2sd_cached(model, lattice.coords, z)[0])


def chamfer_grad(rec: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Chamfer distance and its gradient with respect to ``rec``."""
    d = pairwise_sqdist(rec, target)
    nn_rt = d.argmin(axis=1)
    nn_tr = d.argmin(axis=0)
    n_r, n_t = rec.shape[0], target.shape[0]
    loss = d[np.arange(n_r), nn_rt].mean() + d[nn_tr, np.arange(n_t)].mean()
    grad = 2.0 * (rec - target[nn_rt]) / n_r
    np.add.at(grad, nn_tr, 2.0 * (rec[nn_tr] - target) / n_t)
    return float(loss), grad


def _teacher_loss_and_grads(model: FlattenModel, grid: np.ndarray, target: np.ndarray):
    unit1, unit2 = model.teacher
    z, enc_state = _encode_cached(model.encoder, target)
    rec, (x1, c1, x2, c2) = _g2sd_cached(model, grid, z)
    loss, d_rec = chamfer_grad(rec, target)
    g2, dx2 = mlp_backward(unit2, x2, d_rec, c2)
    g1, dx1 = mlp_backward(unit1, x1, dx2[:, :3], c1)
    dz = dx2[:, 3:].sum(axis=0) + dx1[:, 2:].sum(axis=0)
    g_enc = _encode_backward(model.encoder, enc_state, dz)
    return loss, g_enc + g1 + g2


def teacher_parameters(model: FlattenModel) -> list[np.ndarray]:
    return model.encoder.parameters() + model.teacher[0].parameters() + model.teacher[1].parameters()


def _check_finite(step: int, loss: float) -> None:
    if not math.isfinite(loss):
        raise TrainingDivergedError(step, loss)


def train_teacher(model: FlattenModel, guidance: PointCloud, cfg: TrainConfig,
                  lattice: Lattice | None = None) -> list[float]:
    """Fit encoder + teacher so the deformed lattice matches ``guidance`` in Chamfer distance.

    Returns the per-step losses followed by the loss of the final parameters.
    """
    if lattice is None:
        side = math.isqrt(len(guidance))
        if side * side != len(guidance):
            raise InvalidArgumentError("guidance size must be a perfect square")
        lattice = Lattice.square(side)
    params = teacher_parameters(model)
    opt = Momentum(params, cfg.learning_rate, cfg.momentum)
    trace = []
    for step in range(cfg.steps):
        loss, grads = _teacher_loss_and_grads(model, lattice.coords, guidance.points)
        _check_finite(step, loss)
        trace.append(loss)
        opt.lr = cfg.lr_at(step)
        opt.step(cfg.clip(grads))
    final, _ = _teacher_loss_and_grads(model, lattice.coords, guidance.points)
    _check_finite(cfg.steps, final)
    trace.append(final)
    return trace


def derive_teacher_embedding(model: FlattenModel, guidance: PointCloud, lattice: Lattice,
                             eps_final: float = 1e-9):
    """Give each guidance point the lattice coordinate of its assigned reconstruction.

    Returns ``(embedding, assignment)``; the assignment maps guidance rows to
    lattice positions.
    """
    z = encode_codeword(model.encoder, guidance)
    rec = g2sd_forward(model, lattice, z).points
    cost = pairwise_sqdist(guidance.points, rec)
    res = auction_assign(cost, eps_final)
    return PlanarEmbedding(lattice.coords[res.match], guidance.source_ids), res


# --- surface-to-plane students --------------------------------------------

def renormalize(uv: np.ndarray) -> np.ndarray:
    """Per-axis min-max rescale into [0, 1]; a collapsed axis maps to 0.5."""
    uv = np.asarray(uv, dtype=np.float64)
    lo = uv.min(axis=0)
    span = uv.max(axis=0) - lo
    out = np.full_like(uv, 0.5)
    ok = span > 0
    out[:, ok] = np.clip((uv[:, ok] - lo[ok]) / span[ok], 0.0, 1.0)
    return out


def s2pf_raw(net: MlpStack, points: np.ndarray, z: np.ndarray) -> np.ndarray:
    return mlp_forward(net, _with_code(points, z))


def s2pf_forward(net: MlpStack, pc: PointCloud, z: np.ndarray) -> PlanarEmbedding:
    """Sigmoid-squashed point-to-plane map followed by min-max re-normalization."""
    if net.out_dim != 2 or net.layers[-1].activation != "sigmoid":
        raise InvalidArgumentError("point-to-plane net needs a 2-wide sigmoid head")
    z = np.asarray(z, dtype=np.float64).reshape(-1)
    if net.in_dim != 3 + z.shape[0]:
        raise InvalidArgumentError("codeword width does not match the network input")
    return PlanarEmbedding(renormalize(s2pf_raw(net, pc.points, z)), pc.source_ids)


def _coords(f) -> np.ndarray:
    return f.coords if isinstance(f, PlanarEmbedding) else np.asarray(f, dtype=np.float64)


def nearest_neighbors_2d(uv: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-point nearest other point (ties to the lowest index) and its distance."""
    d = pairwise_sqdist(uv, uv)
    np.fill_diagonal(d, np.inf)
    j = d.argmin(axis=1)
    return j, np.sqrt(d[np.arange(uv.shape[0]), j])


def _repulsion_batched(f: np.ndarray, epsilon: float):
    """Hinge ``sum_i max(0, eps - |f_i - f_nn(i)|)`` over a batch of (P, n, 2) sets."""
    p, n, _ = f.shape
    diff = f[:, :, None, :] - f[:, None, :, :]
    d2 = (diff * diff).sum(axis=3)
    d2[:, np.arange(n), np.arange(n)] = np.inf
    j = d2.argmin(axis=2)
    bi = np.arange(p)[:, None]
    ii = np.arange(n)[None, :]
    vec = f - f[bi, j]
    dist = np.sqrt(d2[bi, ii, j])
    active = dist < epsilon
    loss = float(np.where(active, epsilon - dist, 0.0).sum())
    # coincident pairs and the hinge kink get subgradient 0
    live = active & (dist > 0)
    unit = np.zeros_like(vec)
    unit[live] = vec[live] / dist[live][:, None]
    grad = -unit
    # the neighbor's coordinates enter the i-th term too
    np.add.at(grad, (np.broadcast_to(bi, j.shape), j), unit)
    return loss, grad


def repulsion_loss(emb, epsilon: float) -> tuple[float, np.ndarray]:
    uv = _coords(emb)
    if uv.shape[0] < 2:
        raise InvalidArgumentError("repulsion needs at least two points")
    if not epsilon > 0:
        raise InvalidArgumentError("epsilon must be positive")
    loss, grad = _repulsion_batched(uv[None], epsilon)
    return loss, grad[0]


def guidance_loss(f, f_hat) -> tuple[float, np.ndarray]:
    """Summed L1 distance between index-aligned embeddings and its (sign) gradient."""
    a, b = _coords(f), _coords(f_hat)
    if a.shape != b.shape:
        raise InvalidArgumentError("embeddings must be index-aligned and equally long")
    diff = a - b
    return float(np.abs(diff).sum()), np.sign(diff)


def count_close_pairs(uv: np.ndarray, epsilon: float) -> int:
    """Number of points whose nearest neighbor lies closer than ``epsilon``."""
    return int((nearest_neighbors_2d(uv)[1] < epsilon).sum())


@dataclass
class StudentResult:
    model: FlattenModel
    embedding: PlanarEmbedding
    teacher_embedding: PlanarEmbedding
    teacher_trace: list[float] = field(default_factory=list)
    guidance_trace: list[float] = field(default_factory=list)
    repulsion_trace: list[float] = field(default_factory=list)
    close_pairs_before: int = 0
    close_pairs_after: int = 0
    epsilon: float = 0.0


def _fit(net: MlpStack, x: np.ndarray, cfg: TrainConfig, loss_fn,
         scale: float = 1.0) -> list[float]:
    """Momentum descent on ``scale * loss``; the returned trace is in unscaled units."""
    opt = Momentum(net.parameters(), cfg.learning_rate, cfg.momentum)
    trace = []
    steps = cfg.steps
    for step in range(steps):
        out, cache = mlp_forward_cached(net, x)
        loss, d_out = loss_fn(out)
        _check_finite(step, loss)
        trace.append(loss)
        grads, _ = mlp_backward(net, x, d_out * scale, cache)
        opt.lr = cfg.lr_at(step)
        opt.step(cfg.clip(grads))
    loss, _ = loss_fn(mlp_forward(net, x))
    _check_finite(steps, loss)
    trace.append(loss)
    return trace


def train_student_pipeline(model: FlattenModel, guidance: PointCloud, cfg: TrainConfig,
                           teacher_cfg: TrainConfig | None = None,
                           finetune_cfg: TrainConfig | None = None) -> StudentResult:
    """Teacher fit, distillation into the student, then repulsion fine-tuning.

    ``cfg`` drives the distillation stage; the teacher and fine-tuning stages
    use their own configs when given and fall back to ``cfg`` otherwise.
    """
    side = math.isqrt(len(guidance))
    if side * side != len(guidance) or side < 2:
        raise InvalidArgumentError("guidance size must be a square of a side >= 2")
    lattice = Lattice.square(side)
    teacher_cfg = teacher_cfg or cfg
    finetune_cfg = finetune_cfg or cfg

    teacher_trace = train_teacher(model, guidance, teacher_cfg, lattice)
    f_hat, _ = derive_teacher_embedding(model, guidance, lattice)

    z = encode_codeword(model.encoder, guidance)
    x = _with_code(guidance.points, z)
    target = f_hat.coords
    guid_trace = _fit(model.student, x, cfg, lambda out: guidance_loss(out, target),
                      scale=1.0 / len(guidance))

    eps = finetune_cfg.epsilon if finetune_cfg.epsilon is not None else 1.0 / (side - 1)
    # close pairs are counted in the re-normalized frame the embedding is returned in
    before = count_close_pairs(renormalize(mlp_forward(model.student, x)), eps)
    rep_trace = _fit(model.student, x, finetune_cfg, lambda out: repulsion_loss(out, eps),
                     scale=1.0 / len(guidance))
    uv = renormalize(mlp_forward(model.student, x))
    after = count_close_pairs(uv, eps)
    emb = PlanarEmbedding(uv, guidance.source_ids)
    return StudentResult(model, emb, f_hat, teacher_trace, guid_trace, rep_trace,
                         before, after, eps)


@dataclass
class ContextResult:
    embeddings: list[PlanarEmbedding]
    trace: list[float]
    epsilon: float


def _context_inputs(model: FlattenModel, contexts: list[PointCloud]) -> np.ndarray:
    rows = []
    for ctx in contexts:
        local, _, _ = normalize_unit_sphere(ctx)
        z = encode_codeword(model.encoder, local)
        rows.append(_with_code(local.points, z))
    return np.concatenate(rows, axis=0)


def flatten_contexts(model: FlattenModel, contexts: list[PointCloud], cfg: TrainConfig,
                     k: int) -> ContextResult:
    """Train the shared context network on all patches under the summed repulsion hinge.

    Every patch is first moved into its own unit-sphere frame; patches must share
    one size. Returns one re-normalized embedding per patch.
    """
    if not contexts:
        raise InvalidArgumentError("no context patches given")
    n_c = len(contexts[0])
    if any(len(c) != n_c for c in contexts):
        raise InvalidArgumentError("all context patches must have the same size")
    if k < 2:
        raise InvalidArgumentError("local lattice side k must be >= 2")
    eps = cfg.epsilon if cfg.epsilon is not None else 1.0 / (k - 1)
    x = _context_inputs(model, contexts)
    n_p = len(contexts)

    def loss_fn(out):
        if n_c < 2:
            return 0.0, np.zeros_like(out)
        loss, grad = _repulsion_batched(out.reshape(n_p, n_c, 2), eps)
        return loss, grad.reshape(-1, 2)

    trace = _fit(model.context, x, cfg, loss_fn, scale=1.0 / x.shape[0])
    raw = mlp_forward(model.context, x).reshape(n_p, n_c, 2)
    embs = [PlanarEmbedding(renormalize(raw[i]), c.source_ids) for i, c in enumerate(contexts)]
    return ContextResult(embs, trace, eps)
