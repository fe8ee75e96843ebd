"""Shadow-corner modeling and parallax detection between adjacent EIs.

Corner shadows are modeled per EIA quadrant by straight borders of slope
+-1.  Each EI carries up to two shadow corners on the diagonal matching
its quadrant's slope sign; the border offset of each corner is linear in
the EI's summed distance to the nearest EIA boundaries.  Parallax between
adjacent EIs is found by a fixed-vs-sliding window MSE search over a
shadow-free central region.

Coordinate convention (ours; the border geometry is only shown pictorially
in the source material): quadrants are numbered 0..3 as top-left,
top-right, bottom-left, bottom-right with slope sign +1 for quadrants 0
and 3 and -1 for 1 and 2.  A +1 quadrant shadows the top-right (pair 0)
and bottom-left (pair 1) EI corners; a -1 quadrant shadows the top-left
(pair 0) and bottom-right (pair 1) corners.  In corner-local coordinates
(xi, eta >= 0 pointing into the EI) a shadow is the triangle
xi + eta < L with leg length

    L = sign * (a * d + b),

where d is the boundary-distance sum and sign flips so that upper-pair
coefficients fitted on top-half quadrants carry negative intercepts, as
the published example values do.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .entropy import aac_decode, aac_encode
from .errors import PayloadError
from .eia import EiaGrid, serpentine_order

SHADOW_THRESHOLD = 20  # gray level below which a pixel counts as shadow
MAX_OFFSET = 15
_REGION_ROWS = 37
_REGION_COLS = 45
_WINDOW_COLS = 31

_CORNERS = {  # quadrant -> (pair0 corner, pair1 corner)
    0: ("tr", "bl"),
    1: ("tl", "br"),
    2: ("br", "tl"),
    3: ("bl", "tr"),
}
# Leg-length sign per (top half?, pair).
_PAIR_SIGN = {(True, 0): -1.0, (True, 1): 1.0,
              (False, 0): 1.0, (False, 1): -1.0}


@dataclass
class ShadowModel:
    """Per-quadrant border-line coefficients (a, b) for both corner pairs."""

    coeffs: np.ndarray = field(default_factory=lambda: np.zeros((4, 2, 2)))
    present: np.ndarray = field(default_factory=lambda: np.zeros((4, 2), dtype=bool))

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=np.float64).reshape(4, 2, 2)
        self.present = np.asarray(self.present, dtype=bool).reshape(4, 2)

    @staticmethod
    def slope_sign(quadrant: int) -> int:
        return 1 if quadrant in (0, 3) else -1

    @property
    def empty(self) -> bool:
        return not bool(self.present.any())


@dataclass
class ParallaxMap:
    """Column/row offsets (pixels) between adjacent EIs of an m x n grid."""

    col_offsets: np.ndarray  # (m, n-1)
    row_offsets: np.ndarray  # (m-1, n)

    def __post_init__(self):
        self.col_offsets = np.asarray(self.col_offsets, dtype=np.int64)
        self.row_offsets = np.asarray(self.row_offsets, dtype=np.int64)

    def max_offset(self) -> int:
        vals = [0]
        if self.col_offsets.size:
            vals.append(int(self.col_offsets.max()))
        if self.row_offsets.size:
            vals.append(int(self.row_offsets.max()))
        return max(vals)


def max_legal_interval(parallax: ParallaxMap, ei_size: int) -> int:
    """Largest key stride satisfying interval * max(offset) <= ei_size."""
    m = parallax.max_offset()
    return ei_size if m == 0 else ei_size // m


def quadrant_of(i: int, j: int, m: int, n: int) -> int:
    top = 2 * i < m
    left = 2 * j < n
    return (0 if left else 1) if top else (2 if left else 3)


def boundary_distance(i: int, j: int, m: int, n: int) -> int:
    """Summed 1-based distances of EI (i, j) to the nearest EIA boundaries."""
    return min(i + 1, m - i) + min(j + 1, n - j)


def shadow_extent(model: ShadowModel, i: int, j: int, m: int, n: int,
                  pair: int) -> float:
    """Leg length of the given shadow corner of EI (i, j); 0 when absent."""
    q = quadrant_of(i, j, m, n)
    if not model.present[q, pair]:
        return 0.0
    a, b = model.coeffs[q, pair]
    d = boundary_distance(i, j, m, n)
    sign = _PAIR_SIGN[(q in (0, 1), pair)]
    return max(0.0, sign * (a * d + b))


def corner_name(quadrant: int, pair: int) -> str:
    return _CORNERS[quadrant][pair]


def _corner_view(tile: np.ndarray, corner: str) -> np.ndarray:
    """Reorient a tile so the given corner maps to index (0, 0)."""
    if corner == "tl":
        return tile
    if corner == "tr":
        return tile[:, ::-1]
    if corner == "bl":
        return tile[::-1, :]
    return tile[::-1, ::-1]


def shadow_mask(ei_size: int, corner: str, leg: float) -> np.ndarray:
    """Boolean mask of the triangular corner region xi + eta < leg."""
    mask = np.zeros((ei_size, ei_size), dtype=bool)
    if leg <= 0:
        return mask
    eta, xi = np.meshgrid(np.arange(ei_size), np.arange(ei_size), indexing="ij")
    local = (eta + xi) < leg
    return _corner_view(local, corner)


def render_shadow(tile: np.ndarray, corner: str, leg: float,
                  value: int = 10) -> None:
    """Darken the corner triangle in place (generator-side helper)."""
    tile[shadow_mask(tile.shape[0], corner, leg)] = value


def _fit_corner_leg(tile: np.ndarray, corner: str) -> float | None:
    """Estimate the leg length of one dark corner triangle, or None."""
    view = _corner_view(tile, corner)
    dark = view < SHADOW_THRESHOLD
    if not dark[0, 0]:
        return None
    runs = np.logical_and.accumulate(dark, axis=0).sum(axis=0)
    cols = np.flatnonzero(runs > 0)
    # Keep the contiguous run of shadowed columns starting at the corner.
    stop = int(np.argmin(runs > 0)) if not runs.all() else len(runs)
    cols = cols[cols < stop]
    if cols.size == 0:
        return None
    est = float(np.mean(cols + runs[cols])) - 0.5
    return est if est >= 2.0 else None


def fit_shadow_model(grid: EiaGrid) -> ShadowModel:
    """Fit per-quadrant border coefficients from dark corner pixels.

    Per EI and corner, the boundary of the sub-threshold region is traced
    and its diagonal border offset estimated; per quadrant and pair, those
    offsets are regressed linearly on the boundary-distance sum.  Quadrant
    pairs with no shadowed EIs come back absent (zero extent).
    """
    m, n = grid.ei_rows, grid.ei_cols
    obs = {(q, p): [] for q in range(4) for p in range(2)}
    for i in range(m):
        for j in range(n):
            q = quadrant_of(i, j, m, n)
            d = boundary_distance(i, j, m, n)
            tile = grid.ei(i, j, "y")
            for pair in range(2):
                leg = _fit_corner_leg(tile, corner_name(q, pair))
                if leg is not None:
                    sign = _PAIR_SIGN[(q in (0, 1), pair)]
                    obs[(q, pair)].append((d, sign * leg))
    model = ShadowModel()
    for (q, pair), pts in obs.items():
        if not pts:
            continue
        d = np.array([p[0] for p in pts], dtype=np.float64)
        b = np.array([p[1] for p in pts], dtype=np.float64)
        if d.size >= 2 and np.ptp(d) > 0:
            a_hat, b_hat = np.polyfit(d, b, 1)
        else:
            a_hat, b_hat = 0.0, float(b.mean())
        model.coeffs[q, pair] = (a_hat, b_hat)
        model.present[q, pair] = True
    return model


# ---------------------------------------------------------------------------
# Parallax detection


def _pair_offset(fixed_ei: np.ndarray, sliding_ei: np.ndarray) -> int:
    s = fixed_ei.shape[0]
    r0 = (s - _REGION_ROWS) // 2
    c0 = (s - _REGION_COLS) // 2
    if s < _REGION_ROWS or s < _REGION_COLS or c0 + _WINDOW_COLS + MAX_OFFSET > s:
        raise ValueError(f"EI size {s} too small for the offset search window")
    ref = fixed_ei[r0:r0 + _REGION_ROWS, c0:c0 + _WINDOW_COLS].astype(np.float64)
    best_err, best = None, 0
    for off in range(MAX_OFFSET + 1):
        cand = sliding_ei[r0:r0 + _REGION_ROWS,
                          c0 + off:c0 + off + _WINDOW_COLS].astype(np.float64)
        err = float(np.mean((ref - cand) ** 2))
        if best_err is None or err < best_err:  # first minimum wins ties
            best_err, best = err, off
    return best


def _median_correct(mat: np.ndarray) -> np.ndarray:
    if mat.size == 0:
        return mat
    med = ndimage.median_filter(mat, size=3, mode="nearest")
    return np.where(np.abs(mat - med) > 3, med, mat)


def detect_parallax(grid: EiaGrid) -> ParallaxMap:
    """Offset matrices between column- and row-adjacent EIs.

    Per pair, a fixed window in the first EI is matched against a window
    sliding 0..15 pixels across the neighbor (16 MSE evaluations); the
    argmin is the offset.  Each matrix then gets a neighborhood median
    correction replacing cells more than 3 away from their 3x3 median.
    """
    m, n = grid.ei_rows, grid.ei_cols
    col = np.zeros((m, max(n - 1, 0)), dtype=np.int64)
    row = np.zeros((max(m - 1, 0), n), dtype=np.int64)
    for i in range(m):
        for j in range(n - 1):
            col[i, j] = _pair_offset(grid.ei(i, j, "y"), grid.ei(i, j + 1, "y"))
    for i in range(m - 1):
        for j in range(n):
            row[i, j] = _pair_offset(grid.ei(i, j, "y").T, grid.ei(i + 1, j, "y").T)
    return ParallaxMap(_median_correct(col), _median_correct(row))


# ---------------------------------------------------------------------------
# Side-information coding

_DIFF_ALPHABET = 2 * MAX_OFFSET + 1  # first-order differences in [-15, 15]


def encode_shadow(model: ShadowModel) -> bytes:
    """16 border coefficients as little-endian float32 plus a presence mask."""
    mask = 0
    for q in range(4):
        for p in range(2):
            if model.present[q, p]:
                mask |= 1 << (q * 2 + p)
    return bytes([mask]) + model.coeffs.astype("<f4").tobytes()


def decode_shadow(data: bytes) -> ShadowModel:
    if len(data) != 1 + 16 * 4:
        raise PayloadError(f"shadow section has {len(data)} bytes, expected 65",
                           section="shadow")
    mask = data[0]
    coeffs = np.frombuffer(data[1:], dtype="<f4").astype(np.float64).reshape(4, 2, 2)
    present = np.array([[bool(mask >> (q * 2 + p) & 1) for p in range(2)]
                        for q in range(4)])
    return ShadowModel(coeffs, present)


def _serpentine_values(mat: np.ndarray) -> np.ndarray:
    if mat.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = serpentine_order(*mat.shape)
    return np.array([mat[i, j] for i, j in order], dtype=np.int64)


def _unserpentine(values: np.ndarray, shape: tuple) -> np.ndarray:
    mat = np.zeros(shape, dtype=np.int64)
    for v, (i, j) in zip(values, serpentine_order(*shape)):
        mat[i, j] = v
    return mat


def encode_parallax(parallax: ParallaxMap) -> bytes:
    """Serpentine scan, first-order difference, shift to a 31-symbol
    alphabet, then adaptive arithmetic coding."""
    symbols = []
    for mat in (parallax.col_offsets, parallax.row_offsets):
        vals = _serpentine_values(mat)
        if vals.size:
            if vals.min() < 0 or vals.max() > MAX_OFFSET:
                raise ValueError("offsets must lie in [0, 15]")
            diffs = np.diff(vals, prepend=0)
            symbols.extend((diffs + MAX_OFFSET).tolist())
    return aac_encode(symbols, _DIFF_ALPHABET)


def decode_parallax(data: bytes, m: int, n: int) -> ParallaxMap:
    n_col = m * max(n - 1, 0)
    n_row = max(m - 1, 0) * n
    try:
        symbols = aac_decode(data, [_DIFF_ALPHABET] * (n_col + n_row))
    except PayloadError as exc:
        raise PayloadError(str(exc), byte_offset=exc.byte_offset,
                           section="parallax") from exc
    flat = np.asarray(symbols, dtype=np.int64) - MAX_OFFSET

    def rebuild(part, shape):
        if part.size == 0:
            return np.zeros(shape, dtype=np.int64)
        return _unserpentine(np.cumsum(part), shape)

    col = rebuild(flat[:n_col], (m, max(n - 1, 0)))
    row = rebuild(flat[n_col:], (max(m - 1, 0), n))
    return ParallaxMap(col, row)
