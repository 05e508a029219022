"""Bicubic (Catmull-Rom) enlargement of PGIs: the coarse stage of PGI upsampling."""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .geom import PointCloud
from .resample import Pgi


def catmull_rom(x: np.ndarray) -> np.ndarray:
    """Cubic convolution kernel with ``a = -0.5``."""
    x = np.abs(np.asarray(x, dtype=np.float64))
    near = 1.5 * x**3 - 2.5 * x**2 + 1.0
    far = -0.5 * x**3 + 2.5 * x**2 - 4.0 * x + 2.0
    return np.where(x <= 1.0, near, np.where(x < 2.0, far, 0.0))


def _axis_taps(n_in: int, factor: int):
    """Source indices (clamped) and weights of the four taps for each output sample."""
    dst = np.arange(n_in * factor)
    src = (dst + 0.5) / factor - 0.5
    base = np.floor(src).astype(np.int64)
    offs = np.arange(-1, 3)
    idx = base[:, None] + offs[None, :]
    w = catmull_rom(src[:, None] - idx)
    return np.clip(idx, 0, n_in - 1), w


def bicubic_upscale(img: np.ndarray, factor: int = 2) -> np.ndarray:
    """Separable Catmull-Rom resize of an ``(h, w, c)`` image by an integer factor.

    Samples sit at pixel centers; taps beyond the border reuse the edge pixel.
    """
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 3:
        raise InvalidArgumentError("expected an (h, w, channels) image")
    if int(factor) != factor or factor < 1:
        raise InvalidArgumentError("factor must be a positive integer")
    factor = int(factor)
    ri, rw = _axis_taps(img.shape[0], factor)
    ci, cw = _axis_taps(img.shape[1], factor)
    rows = np.einsum("ot,otwc->owc", rw, img[ri])
    return np.einsum("ot,hotc->hoc", cw, rows[:, ci])


def pgi_bicubic_upscale(pgi: Pgi, factor: int = 2) -> tuple[np.ndarray, PointCloud]:
    """Enlarged coordinate image and the ``(factor * m)**2`` points it encodes.

    No learned residual is added; this is interpolation only.
    """
    img = bicubic_upscale(pgi.pixels, factor)
    return img, PointCloud(img.reshape(-1, 3))


def upscaled_pgi(pgi: Pgi, factor: int = 2) -> Pgi:
    """Wrap the enlarged image as a PGI with ``k * factor`` blocks; every pixel is a new point."""
    img, _ = pgi_bicubic_upscale(pgi, factor)
    m = img.shape[0]
    return Pgi(pgi.n_g, pgi.k * factor, img,
               np.arange(m * m, dtype=np.int64).reshape(m, m),
               np.zeros((m, m), dtype=bool), None, pgi.transform)
