"""Representation-quality measures for PGIs: fidelity, redundancy, neighborhood consistency."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import InvalidArgumentError, InvalidInputError
from .geom import PlanarEmbedding, PointCloud, pairwise_sqdist
from .resample import Pgi


@dataclass
class FidelityReport:
    n_input: int
    n_captured: int
    fidelity: float
    redundancy: float

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class ConsistencyReport:
    J: int
    J_bar: int
    value: float
    per_point: np.ndarray | None = None

    def as_dict(self) -> dict:
        return {"J": self.J, "J_bar": self.J_bar, "value": self.value}


def redundancy(n_points: int, m: int) -> float:
    """Fractional excess of pixels over points, ``m**2 / N - 1``."""
    if n_points < 1 or m < 1:
        raise InvalidArgumentError("redundancy needs N >= 1 and m >= 1")
    return m * m / n_points - 1.0


def geometry_fidelity(pc: PointCloud, pgi: Pgi) -> FidelityReport:
    """Share of input points present in the PGI, counted by source id."""
    present = np.unique(pgi.source_id)
    known = np.isin(present, pc.source_ids)
    if not known.all():
        raise InvalidInputError(
            f"PGI references {int((~known).sum())} source ids absent from the point cloud"
        )
    n = len(pc)
    return FidelityReport(n, int(present.size), present.size / n, redundancy(n, pgi.m))


def _neighbor_sets(x: np.ndarray, count: int) -> np.ndarray:
    d = pairwise_sqdist(x, x)
    np.fill_diagonal(d, np.inf)
    # stable sort keeps the lowest index first among equal distances
    return np.argsort(d, axis=1, kind="stable")[:, :count]


def neighborhood_consistency(p_g: PointCloud, f_g: PlanarEmbedding, J: int,
                             J_bar: int) -> ConsistencyReport:
    """Mean share of each point's ``J`` nearest 2D neighbors that are among its ``J_bar`` nearest 3D ones."""
    n = len(p_g)
    if len(f_g) != n:
        raise InvalidArgumentError("guidance points and embedding differ in length")
    if not 1 <= J <= J_bar <= n - 1:
        raise InvalidArgumentError(f"need 1 <= J <= J_bar <= {n - 1}, got J={J}, J_bar={J_bar}")
    near_2d = _neighbor_sets(f_g.coords, J)
    near_3d = _neighbor_sets(p_g.points, J_bar)
    member = np.zeros((n, n), dtype=bool)
    member[np.arange(n)[:, None], near_3d] = True
    hits = member[np.arange(n)[:, None], near_2d].sum(axis=1)
    per_point = hits / J
    return ConsistencyReport(J, J_bar, float(per_point.mean()), per_point)
