"""Synthetic light-field scenes with controlled parallax and shadows.

Each EI is a window into one large base texture, translated by a uniform
per-step parallax (content moves right/down as the EI index grows, which
is the direction the offset detector searches).  Corner shadows and seam
lines are rendered on top from the same models the codec fits, so every
detector and reconstruction stage can be closed-loop tested against known
ground truth.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .eia import EiaGrid
from .sideinfo import (
    MAX_OFFSET,
    ParallaxMap,
    ShadowModel,
    corner_name,
    quadrant_of,
    render_shadow,
    shadow_extent,
)

TEXTURES = ("ramp", "checker", "noise")

# Border-line coefficient defaults echoing measured magnitudes: slopes a few
# tenths, intercepts a few tens, signs per the quadrant convention.
DEFAULT_SHADOW_COEFFS = np.array([
    [[0.64, -37.0], [-0.5, 18.0]],   # top-left quadrant
    [[0.64, -37.0], [-0.35, 18.0]],  # top-right
    [[-0.64, 37.0], [0.35, -18.0]],  # bottom-left
    [[-0.73, 37.0], [0.3, -18.0]],   # bottom-right
])

_MIN_GRADIENT = 2.0  # mean |gradient| floor so offset search is well posed


@dataclass
class SceneSpec:
    ei_rows: int = 8
    ei_cols: int = 8
    ei_size: int = 75
    texture: str = "noise"
    parallax_row: int = 0
    parallax_col: int = 0
    shadows: bool = False
    shadow_coeffs: np.ndarray | None = None
    seam_value: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.texture not in TEXTURES:
            raise ValueError(f"texture must be one of {TEXTURES}")
        if not (0 <= self.parallax_row <= MAX_OFFSET
                and 0 <= self.parallax_col <= MAX_OFFSET):
            raise ValueError(f"parallax must lie in [0, {MAX_OFFSET}]")


def _normalize(tex: np.ndarray, lo: float, hi: float) -> np.ndarray:
    t = tex - tex.min()
    peak = t.max()
    if peak > 0:
        t = t / peak
    return lo + t * (hi - lo)


def _base_texture(kind: str, shape: tuple, rng: np.random.Generator,
                  lo: float = 40.0, hi: float = 235.0) -> np.ndarray:
    h, w = shape
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    if kind == "ramp":
        tex = 1.3 * xx + 0.7 * yy
    elif kind == "checker":
        tex = ((xx // 6 + yy // 6) % 2).astype(np.float64)
    else:
        tex = ndimage.gaussian_filter(rng.normal(size=shape), sigma=2.5)
        tex += ndimage.gaussian_filter(rng.normal(size=shape), sigma=7.0) * 1.5
    tex = _normalize(tex, lo, hi)
    grad = np.abs(np.diff(tex, axis=1)).mean() + np.abs(np.diff(tex, axis=0)).mean()
    if grad < _MIN_GRADIENT:
        # Inject a diagonal carrier so flat textures stay searchable.
        tex = _normalize(tex + 0.35 * (xx + yy), lo, hi)
    return tex


def generate(spec: SceneSpec):
    """Build (EiaGrid, ground-truth ParallaxMap, ground-truth ShadowModel)."""
    m, n, s = spec.ei_rows, spec.ei_cols, spec.ei_size
    pr, pc = spec.parallax_row, spec.parallax_col
    rng = np.random.default_rng(spec.seed)
    base_shape = (s + (m - 1) * pr, s + (n - 1) * pc)
    base_y = _base_texture(spec.texture, base_shape, rng)
    base_u = _base_texture("noise", base_shape, rng, 70.0, 190.0)
    base_v = _base_texture("noise", base_shape, rng, 70.0, 190.0)

    if spec.shadows:
        coeffs = (DEFAULT_SHADOW_COEFFS if spec.shadow_coeffs is None
                  else np.asarray(spec.shadow_coeffs, dtype=np.float64))
        shadow = ShadowModel(coeffs, np.ones((4, 2), dtype=bool))
    else:
        shadow = ShadowModel()

    planes = {c: np.empty((m * s, n * s), dtype=np.uint8) for c in "yuv"}
    for i in range(m):
        for j in range(n):
            # Content shifts right/down with the index, so the window into
            # the base texture walks back from its far corner.
            oy = (m - 1 - i) * pr
            ox = (n - 1 - j) * pc
            tiles = {
                "y": base_y[oy:oy + s, ox:ox + s].copy(),
                "u": base_u[oy:oy + s, ox:ox + s].copy(),
                "v": base_v[oy:oy + s, ox:ox + s].copy(),
            }
            if spec.shadows:
                q = quadrant_of(i, j, m, n)
                for pair in range(2):
                    leg = shadow_extent(shadow, i, j, m, n, pair)
                    render_shadow(tiles["y"], corner_name(q, pair), leg)
            if spec.seam_value is not None:
                t = tiles["y"]
                t[0, :] = t[-1, :] = spec.seam_value
                t[:, 0] = t[:, -1] = spec.seam_value
            for c in "yuv":
                arr = np.clip(np.rint(tiles[c]), 0, 255).astype(np.uint8)
                planes[c][i * s:(i + 1) * s, j * s:(j + 1) * s] = arr

    grid = EiaGrid(m, n, s, planes["y"], planes["u"], planes["v"])
    parallax = ParallaxMap(np.full((m, max(n - 1, 0)), pc, dtype=np.int64),
                           np.full((max(m - 1, 0), n), pr, dtype=np.int64))
    return grid, parallax, shadow
