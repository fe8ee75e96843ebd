"""Quality metrics: combined-channel PSNR, SSIM, and rendered-view extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

# Standard single-scale SSIM constants: 11x11 Gaussian window with
# sigma 1.5, K1 = 0.01, K2 = 0.03 on an L = 255 dynamic range.
_SSIM_SIGMA = 1.5
_SSIM_RADIUS = 5
_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2

RENDER_PATCH = 8


@dataclass
class QualityReport:
    psnr_db: float
    ssim: float
    mse_channels: tuple
    ssim_channels: tuple
    bpp: float | None = None

    def to_json(self) -> str:
        return json.dumps({
            "psnr_db": self.psnr_db,
            "ssim": self.ssim,
            "mse": {"y": self.mse_channels[0], "u": self.mse_channels[1],
                    "v": self.mse_channels[2]},
            "ssim_channels": {"y": self.ssim_channels[0], "u": self.ssim_channels[1],
                              "v": self.ssim_channels[2]},
            "bpp": self.bpp,
        })


def _check_pair(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise ValueError(f"image dimensions differ: {a.shape} vs {b.shape}")


def plane_mse(a: np.ndarray, b: np.ndarray) -> float:
    _check_pair(a, b)
    return float(np.mean((a.astype(np.float64) - b.astype(np.float64)) ** 2))


def psnr(planes_a, planes_b) -> float:
    """Combined PSNR: 10 log10(255^2 / mean of the three channel MSEs).

    Identical images give +inf.
    """
    mses = [plane_mse(a, b) for a, b in zip(planes_a, planes_b)]
    mean = float(np.mean(mses))
    if mean == 0:
        return float("inf")
    return float(10.0 * np.log10(255.0 ** 2 / mean))


def _win(x: np.ndarray) -> np.ndarray:
    return ndimage.gaussian_filter(x, sigma=_SSIM_SIGMA, truncate=_SSIM_RADIUS / _SSIM_SIGMA)


def ssim_plane(a: np.ndarray, b: np.ndarray) -> float:
    _check_pair(a, b)
    x = a.astype(np.float64)
    y = b.astype(np.float64)
    mx, my = _win(x), _win(y)
    sxx = _win(x * x) - mx * mx
    syy = _win(y * y) - my * my
    sxy = _win(x * y) - mx * my
    num = (2 * mx * my + _C1) * (2 * sxy + _C2)
    den = (mx * mx + my * my + _C1) * (sxx + syy + _C2)
    return float(np.mean(num / den))


def ssim(planes_a, planes_b) -> float:
    """Mean of the three per-channel SSIM scores."""
    return float(np.mean([ssim_plane(a, b) for a, b in zip(planes_a, planes_b)]))


def quality_report(planes_a, planes_b, bpp: float | None = None) -> QualityReport:
    mses = tuple(plane_mse(a, b) for a, b in zip(planes_a, planes_b))
    ssims = tuple(ssim_plane(a, b) for a, b in zip(planes_a, planes_b))
    return QualityReport(psnr_db=psnr(planes_a, planes_b),
                         ssim=float(np.mean(ssims)),
                         mse_channels=mses, ssim_channels=ssims, bpp=bpp)


def render_central_view(image: np.ndarray, ei_rows: int, ei_cols: int,
                        ei_size: int) -> np.ndarray:
    """Stitch the central 8x8 patch of every EI into an (8m, 8n) view.

    The patch offset is floor((ei_size - 8) / 2) on both axes, i.e. 33 for
    75-pixel EIs.  Works on 2-D planes and on (H, W, C) images alike.
    """
    if ei_size < RENDER_PATCH:
        raise ValueError(f"EI size {ei_size} below patch size {RENDER_PATCH}")
    off = (ei_size - RENDER_PATCH) // 2
    p = RENDER_PATCH
    out_shape = (ei_rows * p, ei_cols * p) + image.shape[2:]
    out = np.empty(out_shape, dtype=image.dtype)
    for i in range(ei_rows):
        for j in range(ei_cols):
            src = image[i * ei_size + off:i * ei_size + off + p,
                        j * ei_size + off:j * ei_size + off + p]
            out[i * p:(i + 1) * p, j * p:(j + 1) * p] = src
    return out
