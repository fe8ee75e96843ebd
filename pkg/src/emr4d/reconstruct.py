"""Decoder-side synthesis and full-EIA reconstruction.

The decoded per-block mixtures regress every key-EI pixel; block borders
are then smoothed, an optional denoiser pass runs, and the non-key EIs
are predicted by merging each pair of anchor EIs along a gap: de-shade
the anchors, place them at their cumulative parallax offsets, blend the
overlap linearly (shadow areas weighted zero), crop the intermediate
EIs, and restore their corner shadows and seams from the anchors.
Columns are reconstructed first, then rows from the completed rows.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .bitstream import StreamGeometry, channel_layout, key_scan
from .eia import KeySelection, partition_axis
from .errors import CodecError
from .kernels import _ModelEval
from .sideinfo import (
    ParallaxMap,
    ShadowModel,
    _corner_view,
    corner_name,
    quadrant_of,
    shadow_extent,
    shadow_mask,
)

DESHADE_BAND_COLS = 6  # compensated columns on the left/right of an anchor
DESHADE_BAND_ROWS = 4  # compensated rows on the top/bottom
DESHADE_PROBE = 3      # sampling distance beyond the compensated edge
DEBLOCK_HALF_BAND = 3
POST_FILTER_SIGMAS = {"y": 15.0, "u": 20.0, "v": 20.0}
_POST_SIGMA_SCALE = 0.05  # spatial sigma = 0.05 * strength (15 -> 0.75)


def _to_u8(a: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(a), 0, 255).astype(np.uint8)


def synthesize_key_plane(models: list, geo: StreamGeometry, channel: str) -> np.ndarray:
    """Regress every pixel of every key EI from the decoded block models."""
    layout = channel_layout(geo, channel)
    if len(models) != len(layout):
        raise CodecError(f"channel {channel}: expected {len(layout)} block "
                         f"models, got {len(models)}")
    s = geo.ei_size_for(channel)
    scan = key_scan(geo)
    kr, kc = len(geo.key_rows), len(geo.key_cols)
    out = np.zeros((kr * s, kc * s), dtype=np.uint8)
    for model, bg in zip(models, layout):
        if model is None:
            raise CodecError(f"missing model for block at group {bg.group_index}, "
                             f"rect ({bg.y0}, {bg.x0})")
        z, y, x = np.meshgrid(np.arange(1, bg.frames + 1),
                              np.arange(1, bg.height + 1),
                              np.arange(1, bg.width + 1), indexing="ij")
        deltas = np.column_stack([x.ravel(), y.ravel(), z.ravel()]).astype(np.float64)
        vals = _ModelEval(model).regress(deltas)
        tiles = _to_u8(vals).reshape(bg.frames, bg.height, bg.width)
        for t in range(bg.frames):
            r, c = scan[bg.scan_start + t]
            out[r * s + bg.y0:r * s + bg.y0 + bg.height,
                c * s + bg.x0:c * s + bg.x0 + bg.width] = tiles[t]
    return out


def deblock(plane: np.ndarray, ei_rows: int, ei_cols: int, ei_size: int,
            cb: int) -> np.ndarray:
    """Smooth internal block borders of every EI with a 3+3 pixel ramp.

    The six border pixels are replaced by a linear ramp anchored on the
    untouched pixels just outside the band, which makes the pass exactly
    idempotent.  EIs without internal borders pass through unchanged.
    """
    sizes = partition_axis(ei_size, cb)
    if len(sizes) < 2:
        return plane.copy()
    borders = np.cumsum(sizes)[:-1]
    hb = DEBLOCK_HALF_BAND
    w = np.array([0.0, 0.25, 0.5, 0.5, 0.75, 1.0])
    out = plane.astype(np.float64)
    for i in range(ei_rows):
        for j in range(ei_cols):
            view = out[i * ei_size:(i + 1) * ei_size,
                       j * ei_size:(j + 1) * ei_size]
            for b in borders:
                lo = view[:, b - hb - 1].copy()
                hi = view[:, b + hb].copy()
                view[:, b - hb:b + hb] = (lo[:, None] * (1 - w)[None, :]
                                          + hi[:, None] * w[None, :])
            for b in borders:
                lo = view[b - hb - 1, :].copy()
                hi = view[b + hb, :].copy()
                view[b - hb:b + hb, :] = (lo[None, :] * (1 - w)[:, None]
                                          + hi[None, :] * w[:, None])
    return _to_u8(out)


def post_filter(plane: np.ndarray, strength: float) -> np.ndarray:
    """Pluggable denoiser stage: a separable Gaussian whose spatial sigma
    is 0.05 * strength.  Strength 0 (or a disabled stage) is the identity."""
    if strength <= 0:
        return plane.copy()
    sm = ndimage.gaussian_filter(plane.astype(np.float64),
                                 sigma=_POST_SIGMA_SCALE * strength,
                                 mode="nearest")
    return _to_u8(sm)


# ---------------------------------------------------------------------------
# Gap merging


def _ei_shadow_masks(shadow: ShadowModel, i: int, j: int, m: int, n: int,
                     ei_size: int) -> list:
    """(corner name, leg, mask) triples for the shadowed corners of EI (i, j)."""
    q = quadrant_of(i, j, m, n)
    out = []
    for pair in range(2):
        leg = shadow_extent(shadow, i, j, m, n, pair)
        if leg > 0:
            c = corner_name(q, pair)
            out.append((c, leg, shadow_mask(ei_size, c, leg)))
    return out


def _deshade(tile: np.ndarray, band: int, masks: list):
    """Compensate boundary bands and corner shadows of one anchor EI.

    Band pixels are replaced by the value three pixels inside the band
    edge; shadow pixels by the value three pixels beyond the shadow border
    along the inward diagonal.  Returns the compensated float tile and the
    zero-merge-weight mask covering everything that was compensated.
    """
    s = tile.shape[0]
    out = tile.astype(np.float64)
    zero = np.zeros((s, s), dtype=bool)
    out[:, :band] = out[:, band + DESHADE_PROBE][:, None]
    out[:, s - band:] = out[:, s - band - 1 - DESHADE_PROBE][:, None]
    zero[:, :band] = True
    zero[:, s - band:] = True
    for corner, leg, mask in masks:
        view = _corner_view(out, corner)
        local = _corner_view(mask, corner)
        if not local.any():
            continue
        eta, xi = np.meshgrid(np.arange(s), np.arange(s), indexing="ij")
        depth = leg + DESHADE_PROBE - (eta + xi)
        et = np.clip(np.rint(eta + depth / 2.0), 0, s - 1).astype(int)
        xt = np.clip(np.rint(xi + depth / 2.0), 0, s - 1).astype(int)
        view[local] = view[et[local], xt[local]]
        zero |= mask
    return out, zero


def _merge_gap(a_orig: np.ndarray, b_orig: np.ndarray, steps: np.ndarray,
               masks_a: list, masks_b: list, band: int, gap_name: str):
    """Merge two de-shaded anchors along one axis and crop the intermediates.

    ``a_orig`` is the left anchor, ``b_orig`` the right anchor; content
    moves toward larger x by steps[i] per EI.  Returns the list of
    intermediate EIs as float arrays (len(steps) - 1 of them).
    """
    s = a_orig.shape[0]
    total = int(np.sum(steps))
    resid = gap_residual(steps, s)
    if resid < 0:
        raise CodecError(f"gap {gap_name}: cumulative offset {total} exceeds "
                         f"EI size {s} (negative residual)")
    a_ds, zero_a = _deshade(a_orig, band, masks_a)
    b_ds, zero_b = _deshade(b_orig, band, masks_b)

    width = s + total
    apad = np.zeros((s, width))
    bpad = np.zeros((s, width))
    apad[:, total:] = a_ds
    bpad[:, :s] = b_ds

    base_a = np.zeros((s, width))
    base_b = np.zeros((s, width))
    base_a[:, s:] = 1.0
    base_b[:, :total] = 1.0
    if resid > 0:
        ramp = (np.arange(resid) + 1.0) / (resid + 1.0)
        base_a[:, total:s] = ramp
        base_b[:, total:s] = 1.0 - ramp
    wa = base_a.copy()
    wb = base_b.copy()
    wa[:, total:][zero_a] = 0.0
    wb[:, :s][zero_b] = 0.0
    dead = (wa + wb) <= 0
    wa[dead] = base_a[dead]
    wb[dead] = base_b[dead]
    den = wa + wb
    den[den <= 0] = 1.0
    canvas = (wa * apad + wb * bpad) / den

    crops = []
    cum = 0
    for g in range(1, len(steps)):
        cum += int(steps[g - 1])
        crops.append(canvas[:, total - cum:total - cum + s].copy())
    return crops


def gap_residual(steps: np.ndarray, ei_size: int) -> int:
    """Residual closing the EI-span identity: ei_size = sum(steps) + residual.

    Negative residuals mean the decoded offsets are inconsistent with the
    grid geometry.
    """
    return ei_size - int(np.sum(steps))


def _restore_target(tile: np.ndarray, source: np.ndarray, masks: list) -> np.ndarray:
    """Copy corner shadows and the 1-px seam frame from an anchor EI."""
    out = tile.copy()
    for _, _, mask in masks:
        out[mask] = source[mask].astype(np.float64)
    out[0, :] = source[0, :]
    out[-1, :] = source[-1, :]
    out[:, 0] = source[:, 0]
    out[:, -1] = source[:, -1]
    return out


def _fill_gap(plane: np.ndarray, ei_size: int, row: int, c0: int, c1: int,
              steps: np.ndarray, shadow: ShadowModel, m: int, n: int,
              transposed: bool) -> None:
    """Reconstruct EIs strictly between two anchors of one (possibly
    transposed) grid row, writing results into ``plane`` in place."""
    s = ei_size

    def tile(i, j):
        if transposed:
            return plane[j * s:(j + 1) * s, i * s:(i + 1) * s].T
        return plane[i * s:(i + 1) * s, j * s:(j + 1) * s]

    def put(i, j, val):
        if transposed:
            plane[j * s:(j + 1) * s, i * s:(i + 1) * s] = val.T
        else:
            plane[i * s:(i + 1) * s, j * s:(j + 1) * s] = val

    def masks(i, j):
        gi, gj = (j, i) if transposed else (i, j)
        raw = _ei_shadow_masks(shadow, gi, gj, m, n, s)
        if transposed:
            return [(c, leg, mask.T) for c, leg, mask in raw]
        return raw

    band = DESHADE_BAND_ROWS if transposed else DESHADE_BAND_COLS
    axis = "rows" if transposed else "columns"
    a = tile(row, c0).copy()
    b = tile(row, c1).copy()
    crops = _merge_gap(a.astype(np.float64), b.astype(np.float64), steps,
                       masks(row, c0), masks(row, c1), band,
                       f"{axis} {row}: anchors {c0}..{c1}")
    for g in range(1, c1 - c0):
        target = c0 + g
        source = a if g <= (c1 - c0) / 2 else b
        restored = _restore_target(crops[g - 1], source.astype(np.float64),
                                   masks(row, target))
        put(row, target, _to_u8(restored))


def reconstruct_full_plane(key_plane: np.ndarray, key_sel: KeySelection,
                           ei_rows: int, ei_cols: int, ei_size: int,
                           parallax: ParallaxMap, shadow: ShadowModel) -> np.ndarray:
    """Predict every non-key EI of one channel plane from the key EIs."""
    s = ei_size
    out = np.zeros((ei_rows * s, ei_cols * s), dtype=np.uint8)
    for ki, r in enumerate(key_sel.rows):
        for kj, c in enumerate(key_sel.cols):
            out[r * s:(r + 1) * s, c * s:(c + 1) * s] = \
                key_plane[ki * s:(ki + 1) * s, kj * s:(kj + 1) * s]

    # Columns first: fill the gaps inside every key row.
    for r in key_sel.rows:
        for c0, c1 in zip(key_sel.cols[:-1], key_sel.cols[1:]):
            if c1 - c0 < 2:
                continue
            steps = parallax.col_offsets[r, c0:c1]
            _fill_gap(out, s, r, c0, c1, steps, shadow,
                      ei_rows, ei_cols, transposed=False)

    # Then rows, predicted from the completed key rows.
    for j in range(ei_cols):
        for r0, r1 in zip(key_sel.rows[:-1], key_sel.rows[1:]):
            if r1 - r0 < 2:
                continue
            steps = parallax.row_offsets[r0:r1, j]
            _fill_gap(out, s, j, r0, r1, steps, shadow,
                      ei_rows, ei_cols, transposed=True)
    return out
