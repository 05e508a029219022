"""End-to-end conversion of a point cloud into a PGI."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .assignment import AssignmentResult
from .errors import InvalidArgumentError
from .flatten import (ContextResult, FlattenModel, StudentResult, TrainConfig,
                      flatten_contexts, train_student_pipeline)
from .geom import GuidanceDecomposition, Lattice, PointCloud, decompose, normalize_unit_sphere
from .resample import DEFAULT_EPS, Pgi, assemble_pgi, resample_contexts, resample_guidance

# point count -> (N_C, k)
PRESETS: dict[str, tuple[int, int]] = {
    "1024": (12, 5),
    "2048": (24, 7),
    "5000": (50, 10),
    "10000": (100, 15),
    "2048-part": (24, 8),
}


@dataclass(frozen=True)
class PipelineConfig:
    n_g: int = 16
    n_c: int = 12
    k: int = 5
    seed: int = 0
    teacher_steps: int = 600
    teacher_lr: float = 1e-2
    student_steps: int = 2000
    student_lr: float = 1e-1
    repulsion_steps: int = 200
    repulsion_lr: float = 1e-2
    context_steps: int = 200
    context_lr: float = 1e-1
    eps_guidance: float | None = None
    eps_context: float | None = None
    resample_eps: float = DEFAULT_EPS

    def __post_init__(self):
        if self.k * self.k < self.n_c:
            raise InvalidArgumentError(f"k^2 = {self.k * self.k} must be >= N_C = {self.n_c}")
        if self.n_g < 2 or self.n_c < 1 or self.k < 2:
            raise InvalidArgumentError("need n_G >= 2, N_C >= 1 and k >= 2")

    @classmethod
    def from_preset(cls, name, **overrides) -> "PipelineConfig":
        key = str(name)
        if key not in PRESETS:
            raise InvalidArgumentError(f"unknown preset {key!r}; choose from {', '.join(PRESETS)}")
        n_c, k = PRESETS[key]
        return cls(n_c=n_c, k=k, **overrides)

    def with_steps(self, steps: int) -> "PipelineConfig":
        """Same config with every training stage running ``steps`` iterations."""
        return replace(self, teacher_steps=steps, student_steps=steps,
                       repulsion_steps=steps, context_steps=steps)

    @property
    def m(self) -> int:
        return self.n_g * self.k

    def teacher_cfg(self) -> TrainConfig:
        return TrainConfig(self.teacher_lr, self.teacher_steps, self.seed,
                           clip_norm=1.0, cosine=True)

    def student_cfg(self) -> TrainConfig:
        return TrainConfig(self.student_lr, self.student_steps, self.seed,
                           clip_norm=1.0, cosine=True)

    def repulsion_cfg(self) -> TrainConfig:
        return TrainConfig(self.repulsion_lr, self.repulsion_steps, self.seed, self.eps_guidance,
                           clip_norm=1.0, cosine=True)

    def context_cfg(self) -> TrainConfig:
        return TrainConfig(self.context_lr, self.context_steps, self.seed, self.eps_context,
                           clip_norm=1.0, cosine=True)


@dataclass
class FlattenOutput:
    pgi: Pgi
    decomposition: GuidanceDecomposition
    student: StudentResult
    contexts: ContextResult
    guidance_assignment: AssignmentResult
    model: FlattenModel


def flatten_point_cloud(pc: PointCloud, cfg: PipelineConfig) -> FlattenOutput:
    """Decompose, train the flattening networks, resample and assemble a PGI.

    Training runs on the unit-sphere-normalized cloud; PGI pixels are verbatim
    input coordinates and the normalization is kept as the PGI transform.
    """
    normed, center, scale = normalize_unit_sphere(pc)
    dec = decompose(normed, cfg.n_g, cfg.n_c)
    model = FlattenModel.init(cfg.seed)

    student = train_student_pipeline(model, dec.guidance, cfg.student_cfg(),
                                     teacher_cfg=cfg.teacher_cfg(),
                                     finetune_cfg=cfg.repulsion_cfg())
    ctx = flatten_contexts(model, dec.contexts, cfg.context_cfg(), cfg.k)

    g_assign = resample_guidance(student.embedding, Lattice.square(cfg.n_g), cfg.resample_eps)
    originals = [pc.subset(idx) for idx in dec.context_index]
    blocks = resample_contexts(ctx.embeddings, originals, cfg.k, cfg.resample_eps)
    pgi = assemble_pgi(g_assign, blocks, cfg.n_g, cfg.k,
                       block_of=pc.source_ids[dec.guidance_index_of],
                       transform=(center, scale))
    return FlattenOutput(pgi, dec, student, ctx, g_assign, model)
