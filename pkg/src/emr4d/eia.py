"""Elemental-image-array data model and block extraction.

Turns an input image into modeling-ready pseudo-video-sequence blocks:
YUV plane handling, key-EI selection, serpentine scan ordering, GOP
grouping and coding-block partitioning, plus the chroma down/upsampling
used before modeling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SUPPORTED_CB = (19, 38)

# The four (rd_lambda, interval) operating points shipped as named profiles.
PROFILES = {
    "p75": (75.0, 3),
    "p150": (150.0, 4),
    "p300": (300.0, 5),
    "p1000": (1000.0, 5),
}


@dataclass
class CodecConfig:
    """Encoder settings: key-EI stride, GOP length, block sizes, RD lambda."""

    interval: int = 5
    gop: int = 4
    cb_y: int = 19
    cb_uv: int = 38
    rd_lambda: float = 1000.0

    def __post_init__(self):
        if self.interval < 1:
            raise ValueError("interval must be >= 1")
        if self.gop < 1:
            raise ValueError("gop must be >= 1")
        if self.cb_y not in SUPPORTED_CB or self.cb_uv not in SUPPORTED_CB:
            raise ValueError(f"block sizes must be one of {SUPPORTED_CB}")
        if self.rd_lambda < 0:
            raise ValueError("rd_lambda must be >= 0")

    @classmethod
    def from_profile(cls, name: str, **overrides) -> "CodecConfig":
        if name not in PROFILES:
            raise ValueError(f"unknown profile {name!r}; choose from {sorted(PROFILES)}")
        lam, interval = PROFILES[name]
        kw = dict(rd_lambda=lam, interval=interval)
        kw.update(overrides)
        return cls(**kw)


@dataclass
class EiaGrid:
    """An m x n array of square elemental images with Y, U, V planes.

    The Y plane is (ei_rows * ei_size) x (ei_cols * ei_size); U and V may
    carry a downsampled per-EI size (uv_ei_size).
    """

    ei_rows: int
    ei_cols: int
    ei_size: int
    y: np.ndarray
    u: np.ndarray
    v: np.ndarray
    uv_ei_size: int = 0

    def __post_init__(self):
        if self.uv_ei_size == 0:
            self.uv_ei_size = self.ei_size
        for name, plane, s in (("y", self.y, self.ei_size),
                               ("u", self.u, self.uv_ei_size),
                               ("v", self.v, self.uv_ei_size)):
            plane = np.asarray(plane)
            if plane.dtype != np.uint8:
                raise ValueError(f"plane {name} must be uint8")
            want = (self.ei_rows * s, self.ei_cols * s)
            if plane.shape != want:
                raise ValueError(f"plane {name} has shape {plane.shape}, expected {want}")

    def plane(self, channel: str) -> np.ndarray:
        return {"y": self.y, "u": self.u, "v": self.v}[channel]

    def ei_size_for(self, channel: str) -> int:
        return self.ei_size if channel == "y" else self.uv_ei_size

    def ei(self, i: int, j: int, channel: str = "y") -> np.ndarray:
        """View of elemental image (i, j) in the given channel."""
        s = self.ei_size_for(channel)
        return self.plane(channel)[i * s:(i + 1) * s, j * s:(j + 1) * s]


@dataclass
class KeySelection:
    """Key-EI row/column indices picked by the encoder (0-based)."""

    rows: list
    cols: list


@dataclass
class PvsBlock:
    """One coding block of a pseudo video sequence.

    ``samples`` is the N x 4 matrix of (x, y, z, w) rows with 1-based local
    integer coordinates; N = width * height * frames.
    """

    group_index: int
    origin: tuple  # (ei_row, ei_col, block_row, block_col) of the group's first frame
    y0: int
    x0: int
    height: int
    width: int
    frames: int
    samples: np.ndarray = field(repr=False)

    @property
    def n_samples(self) -> int:
        return self.height * self.width * self.frames

    def positions(self) -> np.ndarray:
        """The (N, 3) position part of the sample matrix."""
        return self.samples[:, :3]

    def values(self) -> np.ndarray:
        return self.samples[:, 3]


# ---------------------------------------------------------------------------
# Color conversion (BT.601 full range) and per-EI chroma resampling

_FWD = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
])
_INV = np.array([
    [1.0, 0.0, 1.402],
    [1.0, -0.344136, -0.714136],
    [1.0, 1.772, 0.0],
])


def rgb_to_yuv_planes(rgb: np.ndarray):
    """8-bit RGB image (H, W, 3) to full-range Y, U, V uint8 planes."""
    rgb = np.asarray(rgb, dtype=np.float64)
    yuv = rgb @ _FWD.T
    yuv[..., 1:] += 128.0
    yuv = np.clip(np.rint(yuv), 0, 255).astype(np.uint8)
    return yuv[..., 0], yuv[..., 1], yuv[..., 2]


def yuv_to_rgb_image(y: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    yuv = np.stack([y, u, v], axis=-1).astype(np.float64)
    yuv[..., 1:] -= 128.0
    rgb = yuv @ _INV.T
    return np.clip(np.rint(rgb), 0, 255).astype(np.uint8)


def grid_from_rgb(rgb: np.ndarray, ei_rows: int, ei_cols: int, ei_size: int) -> EiaGrid:
    y, u, v = rgb_to_yuv_planes(rgb)
    return EiaGrid(ei_rows, ei_cols, ei_size, y, u, v)


def grid_to_rgb(grid: EiaGrid) -> np.ndarray:
    if grid.uv_ei_size != grid.ei_size:
        grid = upsample_uv(grid)
    return yuv_to_rgb_image(grid.y, grid.u, grid.v)


def _down2_ei(tile: np.ndarray) -> np.ndarray:
    # 2x2 box average; an odd trailing row/column is handled by replication.
    s = tile.shape[0]
    if s % 2:
        tile = np.pad(tile, ((0, 1), (0, 1)), mode="edge")
    t = tile.astype(np.float64)
    out = (t[0::2, 0::2] + t[1::2, 0::2] + t[0::2, 1::2] + t[1::2, 1::2]) / 4.0
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def _up_ei(tile: np.ndarray, target: int) -> np.ndarray:
    """Bilinear upsample of one EI tile back to ``target`` pixels per side."""
    s = tile.shape[0]
    coords = (np.arange(target) + 0.5) * (s / target) - 0.5
    coords = np.clip(coords, 0.0, s - 1.0)
    i0 = np.floor(coords).astype(int)
    i1 = np.minimum(i0 + 1, s - 1)
    t = coords - i0
    src = tile.astype(np.float64)
    top = src[i0][:, i0] * (1 - t)[None, :] + src[i0][:, i1] * t[None, :]
    bot = src[i1][:, i0] * (1 - t)[None, :] + src[i1][:, i1] * t[None, :]
    out = top * (1 - t)[:, None] + bot * t[:, None]
    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def resample_plane(plane: np.ndarray, ei_rows: int, ei_cols: int,
                   ei_size: int, mode: str, target: int = 0) -> np.ndarray:
    """Apply per-EI 'down' (2x box) or 'up' (bilinear) resampling to a plane."""
    if mode == "down":
        new = (ei_size + 1) // 2
        op = _down2_ei
    elif mode == "up":
        new = target
        op = lambda t: _up_ei(t, target)
    else:
        raise ValueError(mode)
    out = np.empty((ei_rows * new, ei_cols * new), dtype=np.uint8)
    for i in range(ei_rows):
        for j in range(ei_cols):
            tile = plane[i * ei_size:(i + 1) * ei_size, j * ei_size:(j + 1) * ei_size]
            out[i * new:(i + 1) * new, j * new:(j + 1) * new] = op(tile)
    return out


def downsample_uv(grid: EiaGrid) -> EiaGrid:
    """Halve the chroma EIs (75 -> 38 under the ceil rule); Y is untouched."""
    if grid.uv_ei_size != grid.ei_size:
        raise ValueError("chroma already downsampled")
    u = resample_plane(grid.u, grid.ei_rows, grid.ei_cols, grid.ei_size, "down")
    v = resample_plane(grid.v, grid.ei_rows, grid.ei_cols, grid.ei_size, "down")
    return EiaGrid(grid.ei_rows, grid.ei_cols, grid.ei_size, grid.y, u, v,
                   uv_ei_size=(grid.ei_size + 1) // 2)


def upsample_uv(grid: EiaGrid) -> EiaGrid:
    """Bilinear per-EI chroma upsample back to the Y EI size."""
    if grid.uv_ei_size == grid.ei_size:
        return grid
    u = resample_plane(grid.u, grid.ei_rows, grid.ei_cols, grid.uv_ei_size,
                       "up", target=grid.ei_size)
    v = resample_plane(grid.v, grid.ei_rows, grid.ei_cols, grid.uv_ei_size,
                       "up", target=grid.ei_size)
    return EiaGrid(grid.ei_rows, grid.ei_cols, grid.ei_size, grid.y, u, v)


# ---------------------------------------------------------------------------
# Key-EIA selection, serpentine scan, block partitioning


def key_indices(count: int, interval: int) -> list:
    """0-based indices 0, interval, 2*interval, ... with the last index
    appended when the stride misses it (so every gap has two anchors)."""
    if interval < 1:
        raise ValueError("interval must be >= 1")
    if interval > count:
        raise ValueError(f"interval {interval} exceeds grid dimension {count}")
    idx = list(range(0, count, interval))
    if idx[-1] != count - 1:
        idx.append(count - 1)
    return idx


def extract_key_eia(grid: EiaGrid, interval: int):
    """Sub-grid of key EIs plus the selection indices for the decoder."""
    rows = key_indices(grid.ei_rows, interval)
    cols = key_indices(grid.ei_cols, interval)

    def take(plane, s):
        p = plane.reshape(grid.ei_rows, s, grid.ei_cols, s)
        p = p[rows][:, :, cols]
        return np.ascontiguousarray(p).reshape(len(rows) * s, len(cols) * s)

    sub = EiaGrid(len(rows), len(cols), grid.ei_size,
                  take(grid.y, grid.ei_size),
                  take(grid.u, grid.uv_ei_size),
                  take(grid.v, grid.uv_ei_size),
                  uv_ei_size=grid.uv_ei_size)
    return sub, KeySelection(rows, cols)


def serpentine_order(rows: int, cols: int) -> list:
    """Row-major traversal with every other row reversed (boustrophedon)."""
    if rows < 1 or cols < 1:
        raise ValueError("grid must be non-empty")
    out = []
    for i in range(rows):
        cs = range(cols) if i % 2 == 0 else range(cols - 1, -1, -1)
        out.extend((i, j) for j in cs)
    return out


def partition_axis(length: int, cb: int) -> list:
    """Split an EI axis into cb-sized chunks with a short final remainder,
    e.g. 75 -> [19, 19, 19, 18] for cb=19 and [38, 37] for cb=38."""
    if cb not in SUPPORTED_CB:
        raise ValueError(f"unsupported coding block size {cb}")
    n = -(-length // cb)
    sizes = [cb] * (n - 1) + [length - cb * (n - 1)]
    if sizes[-1] < 1:
        raise ValueError(f"block size {cb} does not partition EI size {length}")
    return sizes


def block_rects(ei_size: int, cb: int) -> list:
    """(y0, x0, height, width) tuples covering one EI."""
    sizes = partition_axis(ei_size, cb)
    starts = np.concatenate([[0], np.cumsum(sizes)[:-1]]).astype(int)
    rects = []
    for bi, (y0, h) in enumerate(zip(starts, sizes)):
        for bj, (x0, w) in enumerate(zip(starts, sizes)):
            rects.append((int(y0), int(x0), int(h), int(w)))
    return rects


def gop_groups(n_frames: int, gop: int) -> list:
    """Consecutive frame-index groups of length gop; the last may be shorter."""
    return [list(range(s, min(s + gop, n_frames))) for s in range(0, n_frames, gop)]


def sample_matrix(frames: list) -> np.ndarray:
    """N x 4 sample matrix for a stack of equally sized tiles.

    Local coordinates are 1-based: x in 1..width, y in 1..height,
    z in 1..len(frames); the scan is z-major, then rows, then columns.
    """
    h, w = frames[0].shape
    f = len(frames)
    z, y, x = np.meshgrid(np.arange(1, f + 1), np.arange(1, h + 1),
                          np.arange(1, w + 1), indexing="ij")
    vals = np.stack(frames).astype(np.float64)
    return np.column_stack([x.ravel(), y.ravel(), z.ravel(), vals.ravel()])


def build_pvs_blocks(frames: list, frame_positions: list, cb: int, gop: int) -> list:
    """Partition serpentine-ordered frames into GOP groups of coding blocks.

    ``frames`` are equally sized EI arrays in scan order and
    ``frame_positions`` their (row, col) grid indices.
    """
    if not frames:
        return []
    sizes = {f.shape for f in frames}
    if len(sizes) != 1:
        raise ValueError("frames must all have the same size")
    ei_size = frames[0].shape[0]
    rects = block_rects(ei_size, cb)
    blocks = []
    for gi, idxs in enumerate(gop_groups(len(frames), gop)):
        group = [frames[t] for t in idxs]
        first_pos = frame_positions[idxs[0]]
        n_axis = len(partition_axis(ei_size, cb))
        for ri, (y0, x0, h, w) in enumerate(rects):
            tiles = [fr[y0:y0 + h, x0:x0 + w] for fr in group]
            blocks.append(PvsBlock(
                group_index=gi,
                origin=(first_pos[0], first_pos[1], ri // n_axis, ri % n_axis),
                y0=y0, x0=x0, height=h, width=w, frames=len(group),
                samples=sample_matrix(tiles),
            ))
    return blocks
