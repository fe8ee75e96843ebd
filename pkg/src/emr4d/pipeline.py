"""End-to-end encode and decode pipelines.

Encoding: shadow fit and parallax detection on the full EIA, key-EI
extraction, per-block rate-distortion fitting, parameter quantization and
entropy coding into the container.  Decoding: parameter and side-info
decode, key-EIA synthesis with deblocking and the denoiser pass, chroma
upsampling, then full-EIA prediction from the key EIs.

Block fits run on a caller-sized thread pool; every fit seeds from the
block coordinates, so results are identical for any thread count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from . import bitstream as bs
from .eia import (
    CodecConfig,
    EiaGrid,
    KeySelection,
    build_pvs_blocks,
    downsample_uv,
    extract_key_eia,
    serpentine_order,
    upsample_uv,
)
from .errors import CodecError
from .reconstruct import (
    POST_FILTER_SIGMAS,
    deblock,
    post_filter,
    reconstruct_full_plane,
    synthesize_key_plane,
)
from .selection import RdoConfig, select_model_count
from .sideinfo import (
    ParallaxMap,
    ShadowModel,
    decode_parallax,
    decode_shadow,
    detect_parallax,
    encode_parallax,
    encode_shadow,
    fit_shadow_model,
    max_legal_interval,
)

STATS_SCHEMA_VERSION = 1


@dataclass
class EncodeResult:
    data: bytes
    stats: dict
    geometry: bs.StreamGeometry
    key_selection: KeySelection
    channels: dict = field(repr=False)
    parallax: ParallaxMap = None
    shadow: ShadowModel = None


@dataclass
class DecodeResult:
    grid: EiaGrid
    key_grid: EiaGrid
    geometry: bs.StreamGeometry
    key_selection: KeySelection
    parallax: ParallaxMap
    shadow: ShadowModel
    channels: dict = field(repr=False)


def _channel_frames(key_grid: EiaGrid, channel: str):
    s = key_grid.ei_size_for(channel)
    order = serpentine_order(key_grid.ei_rows, key_grid.ei_cols)
    frames = [key_grid.ei(i, j, channel) for i, j in order]
    return frames, order


def _fit_channel(key_grid: EiaGrid, channel: str, cfg: CodecConfig,
                 seed: int, pool: ThreadPoolExecutor | None):
    frames, order = _channel_frames(key_grid, channel)
    cb = cfg.cb_y if channel == "y" else cfg.cb_uv
    blocks = build_pvs_blocks(frames, order, cb, cfg.gop)
    rdo = RdoConfig(rd_lambda=cfg.rd_lambda, channel=channel)
    if pool is None:
        results = [select_model_count(b, rdo, seed) for b in blocks]
    else:
        results = list(pool.map(lambda b: select_model_count(b, rdo, seed), blocks))
    return blocks, results


def encode(grid: EiaGrid, cfg: CodecConfig, seed: int = 0,
           threads: int = 1) -> EncodeResult:
    """Encode a full-resolution EIA grid into the container format."""
    if grid.uv_ei_size != grid.ei_size:
        raise ValueError("encode expects full-resolution chroma planes")

    shadow = fit_shadow_model(grid)
    parallax = detect_parallax(grid)
    limit = max_legal_interval(parallax, grid.ei_size)
    if cfg.interval > limit:
        raise CodecError(
            f"interval {cfg.interval} violates the parallax bound: "
            f"max offset {parallax.max_offset()} allows at most interval {limit}")

    ds = downsample_uv(grid)
    key_grid, key_sel = extract_key_eia(ds, cfg.interval)
    geo = bs.StreamGeometry(
        ei_rows=grid.ei_rows, ei_cols=grid.ei_cols, ei_size=grid.ei_size,
        uv_ei_size=ds.uv_ei_size, interval=cfg.interval, gop=cfg.gop,
        cb_y=cfg.cb_y, cb_uv=cfg.cb_uv, rd_lambda=cfg.rd_lambda,
        key_rows=key_sel.rows, key_cols=key_sel.cols)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        channels = {}
        hist = {}
        charged = {}
        for ch in ("y", "u", "v"):
            blocks, results = _fit_channel(key_grid, ch, cfg, seed, pool)
            models = [r.fit.model for r in results]
            channels[ch] = bs.encode_channel(models, ch, geo)
            hist[ch] = {int(k): int(sum(1 for r in results if r.chosen_k == k))
                        for k in sorted({r.chosen_k for r in results})}
            charged[ch] = int(sum(r.bits[r.chosen_k - 1] for r in results))
    finally:
        if pool is not None:
            pool.shutdown()

    shadow_payload = encode_shadow(shadow)
    parallax_payload = encode_parallax(parallax)
    data = bs.pack_container(geo, shadow_payload, parallax_payload,
                             {ch: channels[ch].payload for ch in "yuv"})

    pixels = grid.ei_rows * grid.ei_size * grid.ei_cols * grid.ei_size
    stats = {
        "schema_version": STATS_SCHEMA_VERSION,
        "bitstream_version": bs.VERSION,
        "total_bytes": len(data),
        "bpp": len(data) * 8.0 / pixels,
        "rd_lambda": cfg.rd_lambda,
        "interval": cfg.interval,
        "sections_bytes": {
            "shadow": len(shadow_payload),
            "parallax": len(parallax_payload),
            **{ch: len(channels[ch].payload) for ch in "yuv"},
        },
        "charged_bits": charged,
        "raw_symbol_bits": {ch: channels[ch].raw_symbol_bits for ch in "yuv"},
        "chosen_k_histogram": hist,
        "quant_clamps": {ch: channels[ch].clamps for ch in "yuv"},
        "seed": seed,
    }
    return EncodeResult(data=data, stats=stats, geometry=geo,
                        key_selection=key_sel, channels=channels,
                        parallax=parallax, shadow=shadow)


def _key_planes(channels: dict, geo: bs.StreamGeometry,
                postfilter: bool) -> EiaGrid:
    """Shared decode-side synthesis chain for the key EIA."""
    kr, kc = len(geo.key_rows), len(geo.key_cols)
    planes = {}
    for ch in ("y", "u", "v"):
        s = geo.ei_size_for(ch)
        cb = geo.cb_for(ch)
        plane = synthesize_key_plane(channels[ch].models, geo, ch)
        plane = deblock(plane, kr, kc, s, cb)
        if postfilter:
            plane = post_filter(plane, POST_FILTER_SIGMAS[ch])
        planes[ch] = plane
    return EiaGrid(kr, kc, geo.ei_size, planes["y"], planes["u"], planes["v"],
                   uv_ei_size=geo.uv_ei_size)


def reconstruct_key_grid(result: EncodeResult, postfilter: bool = True) -> EiaGrid:
    """Encoder-side reconstruction of the key EIA.

    Runs the identical chain the decoder uses on the identical dequantized
    models, so the output is bit-equal to the decoder's key EIA.
    """
    key = _key_planes(result.channels, result.geometry, postfilter)
    return upsample_uv(key)


def decode(data: bytes, postfilter: bool = True) -> DecodeResult:
    """Decode a container into the reconstructed full-resolution EIA."""
    geo, sections = bs.parse_container(data)
    shadow = decode_shadow(sections["shadow"])
    parallax = decode_parallax(sections["parallax"], geo.ei_rows, geo.ei_cols)
    channels = {ch: bs.decode_channel(sections[ch], ch, geo) for ch in "yuv"}

    key = upsample_uv(_key_planes(channels, geo, postfilter))
    key_sel = KeySelection(list(geo.key_rows), list(geo.key_cols))
    planes = {}
    for ch in ("y", "u", "v"):
        planes[ch] = reconstruct_full_plane(
            key.plane(ch), key_sel, geo.ei_rows, geo.ei_cols, geo.ei_size,
            parallax, shadow)
    grid = EiaGrid(geo.ei_rows, geo.ei_cols, geo.ei_size,
                   planes["y"], planes["u"], planes["v"])
    return DecodeResult(grid=grid, key_grid=key, geometry=geo,
                        key_selection=key_sel, parallax=parallax,
                        shadow=shadow, channels=channels)


def reencode(decoded: DecodeResult) -> bytes:
    """Re-assemble a container from decoded content; byte-identical input."""
    payloads = {ch: bs.reencode_channel(decoded.channels[ch]) for ch in "yuv"}
    return bs.pack_container(decoded.geometry,
                             encode_shadow(decoded.shadow),
                             encode_parallax(decoded.parallax),
                             payloads)


def stats_json(stats: dict) -> str:
    return json.dumps(stats, sort_keys=True)
