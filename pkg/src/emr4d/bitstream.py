"""Container format and channel-section coding for the .emr4d bitstream.

Layout (all little-endian, byte-aligned sections with explicit lengths):

    magic   6 bytes  "EMR4D\\0"
    version u8
    header  ei_rows u16, ei_cols u16, ei_size u16, uv_ei_size u16,
            interval u8, gop u8, cb_y u8, cb_uv u8, rd_lambda f32
    key     u16 count + count x u16, twice (rows then columns)
    then sections, each:  id u8, payload_len u32, payload
            id 1 shadow coefficients, 2 parallax offsets,
            id 3/4/5 the Y/U/V model parameters

A channel payload holds the per-parameter (min, span) marks as raw f32
pairs followed by one arithmetic-coded symbol stream: per block a
model-count symbol, then the quantized parameters of each model in a
fixed order.  Single-model blocks transmit only their w-linked values;
the decoder regenerates the position statistics from block geometry.
The decoder keeps the symbol stream, so re-encoding decoded data
reproduces the input bytes exactly.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .eia import block_rects, gop_groups, serpentine_order
from .entropy import AacDecoder, AacEncoder
from .errors import ContainerError, PayloadError
from .fitting import grid_position_stats
from .kernels import ExpertParams, MixtureModel
from .quantization import (
    ALPHA_SPEC,
    ClampCounter,
    CholeskyFactors,
    NM_BITS,
    ParamSpec,
    UV_PARAMS,
    Y_PARAMS,
    bit_table,
    cholesky_r,
    dequantize,
    make_param_spec,
    quantize,
    reconstruct_r,
)

MAGIC = b"EMR4D\x00"
VERSION = 1

SEC_SHADOW = 1
SEC_PARALLAX = 2
SEC_CHANNEL = {"y": 3, "u": 4, "v": 5}
_SEC_NAMES = {1: "shadow", 2: "parallax", 3: "y", 4: "u", 5: "v"}


@dataclass
class StreamGeometry:
    ei_rows: int
    ei_cols: int
    ei_size: int
    uv_ei_size: int
    interval: int
    gop: int
    cb_y: int
    cb_uv: int
    rd_lambda: float
    key_rows: list
    key_cols: list

    def ei_size_for(self, channel: str) -> int:
        return self.ei_size if channel == "y" else self.uv_ei_size

    def cb_for(self, channel: str) -> int:
        return self.cb_y if channel == "y" else self.cb_uv


@dataclass
class BlockGeom:
    """Placement of one coded block inside the key-EIA mosaic."""

    group_index: int
    frames: int
    scan_start: int  # serpentine index of the group's first frame
    y0: int
    x0: int
    height: int
    width: int


def channel_layout(geo: StreamGeometry, channel: str) -> list:
    """Deterministic block order shared by encoder and decoder."""
    s = geo.ei_size_for(channel)
    rects = block_rects(s, geo.cb_for(channel))
    n_frames = len(geo.key_rows) * len(geo.key_cols)
    out = []
    for gi, idxs in enumerate(gop_groups(n_frames, geo.gop)):
        for (y0, x0, h, w) in rects:
            out.append(BlockGeom(group_index=gi, frames=len(idxs),
                                 scan_start=idxs[0], y0=y0, x0=x0,
                                 height=h, width=w))
    return out


def key_scan(geo: StreamGeometry) -> list:
    return serpentine_order(len(geo.key_rows), len(geo.key_cols))


# ---------------------------------------------------------------------------
# Model <-> parameter-value mapping


def _params_for(channel: str) -> tuple:
    return Y_PARAMS if channel == "y" else UV_PARAMS


def _coded_params(channel: str, multi: bool, rd_lambda: float) -> list:
    return list(bit_table(channel, multi, rd_lambda).keys())


def model_param_values(model: MixtureModel, channel: str) -> list:
    """Per-expert {param: value} dicts in coding order for one block."""
    multi = model.k > 1
    rows = []
    for e in model.experts:
        u = cholesky_r(e.r_pos)
        vals = {
            "mu_x": e.mu[0], "mu_y": e.mu[1], "mu_z": e.mu[2], "mu_w": e.mu[3],
            "u11": u.u11, "u12": u.u12, "u13": u.u13,
            "u22": u.u22, "u23": u.u23, "u33": u.u33,
            "cov_xw": e.cross_w[0], "cov_yw": e.cross_w[1], "cov_zw": e.cross_w[2],
            "alpha": e.alpha,
        }
        keep = set(_coded_params(channel, multi, 0.0))
        rows.append({k: v for k, v in vals.items() if k in keep})
    return rows


def _experts_from_values(rows: list, channel: str, bg: BlockGeom) -> MixtureModel:
    """Assemble a decoded mixture from dequantized parameter values.

    This is the single dequantization path: the encoder reconstructs its
    key-EIA through the same function the decoder uses.
    """
    k = len(rows)
    experts = []
    if k == 1:
        vals = rows[0]
        mu_pos, r = grid_position_stats(bg.width, bg.height, bg.frames)
        mu = np.array([*mu_pos, vals["mu_w"]])
        cross = np.array([vals.get("cov_xw", 0.0), vals.get("cov_yw", 0.0),
                          vals.get("cov_zw", 0.0)])
        sigma = np.zeros((4, 4))
        sigma[:3, :3] = r
        sigma[3, :3] = cross
        sigma[:3, 3] = cross
        experts.append(ExpertParams(alpha=1.0, mu=mu, sigma=sigma))
    else:
        for vals in rows:
            mu = np.array([vals["mu_x"], vals["mu_y"], vals["mu_z"], vals["mu_w"]])
            u = CholeskyFactors(vals["u11"], vals["u12"], vals["u13"],
                                vals["u22"], vals["u23"], vals["u33"])
            r = reconstruct_r(u)
            if channel == "y":
                cross = np.array([vals["cov_xw"], vals["cov_yw"], vals["cov_zw"]])
                alpha = vals["alpha"]
            else:
                cross = np.zeros(3)
                alpha = 1.0 / k
            sigma = np.zeros((4, 4))
            sigma[:3, :3] = r
            sigma[3, :3] = cross
            sigma[:3, 3] = cross
            experts.append(ExpertParams(alpha=alpha, mu=mu, sigma=sigma))
        if channel == "y":
            alphas = np.array([e.alpha for e in experts])
            total = alphas.sum()
            alphas = alphas / total if total > 0 else np.full(k, 1.0 / k)
            for e, a in zip(experts, alphas):
                e.alpha = float(a)
    kind = "epanechnikov" if channel == "y" else "gaussian"
    return MixtureModel(experts, kind)


# ---------------------------------------------------------------------------
# Channel sections


@dataclass
class ChannelData:
    channel: str
    specs: dict
    ks: list
    models: list = field(repr=False)
    symbols: list = field(repr=False)
    alphabets: list = field(repr=False)
    payload: bytes = b""
    clamps: int = 0

    @property
    def raw_symbol_bits(self) -> int:
        return int(sum(int(a).bit_length() - 1 for a in self.alphabets))


def _spec_for(param: str, values: list, widths: dict) -> ParamSpec:
    if param == "alpha":
        return ParamSpec(ALPHA_SPEC.bits, ALPHA_SPEC.mn, ALPHA_SPEC.span)
    return make_param_spec(np.array(values, dtype=np.float64), widths[param])


def encode_channel(models: list, channel: str, geo: StreamGeometry) -> ChannelData:
    """Quantize and entropy-code the chosen per-block models of one channel."""
    layout = channel_layout(geo, channel)
    if len(models) != len(layout):
        raise ValueError(f"expected {len(layout)} block models, got {len(models)}")
    params = _params_for(channel)
    widths = bit_table(channel, True, geo.rd_lambda)
    per_block = [model_param_values(m, channel) for m in models]

    pool = {p: [] for p in params}
    for rows in per_block:
        for vals in rows:
            for p, v in vals.items():
                pool[p].append(v)
    specs = {p: _spec_for(p, pool[p], widths) for p in params}

    # Single-model widths coincide with the multi widths of the same
    # parameters, so one spec per parameter serves both regimes.
    single_order = _coded_params(channel, False, geo.rd_lambda)
    multi_order = _coded_params(channel, True, geo.rd_lambda)

    clamps = ClampCounter()
    symbols, alphabets = [], []
    ks = []
    dec_rows = []
    for rows, bg in zip(per_block, layout):
        k = len(rows)
        ks.append(k)
        symbols.append(k - 1)
        alphabets.append(1 << NM_BITS[channel])
        order = multi_order if k > 1 else single_order
        block_rows = []
        for vals in rows:
            dec = {}
            for p in order:
                sp = specs[p]
                idx = quantize(vals[p], sp, clamps)
                symbols.append(idx - 1)
                alphabets.append(sp.levels)
                dec[p] = dequantize(idx, sp)
            block_rows.append(dec)
        dec_rows.append(block_rows)

    enc = AacEncoder()
    for s, a in zip(symbols, alphabets):
        enc.encode(s, a)
    coded = enc.finish()
    payload = _pack_marks(specs, params) + coded

    dec_models = [_experts_from_values(rows, channel, bg)
                  for rows, bg in zip(dec_rows, layout)]
    return ChannelData(channel=channel, specs=specs, ks=ks, models=dec_models,
                       symbols=symbols, alphabets=alphabets, payload=payload,
                       clamps=clamps.count)


def _pack_marks(specs: dict, params: tuple) -> bytes:
    out = [struct.pack("<B", len(params))]
    for p in params:
        out.append(struct.pack("<ff", np.float32(specs[p].mn),
                               np.float32(specs[p].span)))
    return b"".join(out)


def decode_channel(payload: bytes, channel: str, geo: StreamGeometry) -> ChannelData:
    params = _params_for(channel)
    head = 1 + 8 * len(params)
    if len(payload) < head:
        raise PayloadError(f"channel section truncated at {len(payload)} bytes",
                           section=channel)
    if payload[0] != len(params):
        raise PayloadError(f"channel header lists {payload[0]} parameters, "
                           f"expected {len(params)}", section=channel)
    widths = bit_table(channel, True, geo.rd_lambda)
    specs = {}
    for i, p in enumerate(params):
        mn, span = struct.unpack_from("<ff", payload, 1 + 8 * i)
        bits = ALPHA_SPEC.bits if p == "alpha" else widths[p]
        specs[p] = ParamSpec(bits, float(mn), float(span))

    layout = channel_layout(geo, channel)
    dec = AacDecoder(payload[head:])
    symbols, alphabets = [], []

    def pull(alphabet):
        try:
            s = dec.decode(alphabet)
        except PayloadError as exc:
            raise PayloadError(str(exc), byte_offset=exc.byte_offset,
                               section=channel) from exc
        symbols.append(s)
        alphabets.append(alphabet)
        return s

    single_order = _coded_params(channel, False, geo.rd_lambda)
    multi_order = _coded_params(channel, True, geo.rd_lambda)
    ks, models = [], []
    for bg in layout:
        k = pull(1 << NM_BITS[channel]) + 1
        ks.append(k)
        order = multi_order if k > 1 else single_order
        rows = []
        for _ in range(k):
            vals = {}
            for p in order:
                sp = specs[p]
                vals[p] = dequantize(pull(sp.levels) + 1, sp)
            rows.append(vals)
        models.append(_experts_from_values(rows, channel, bg))
    return ChannelData(channel=channel, specs=specs, ks=ks, models=models,
                       symbols=symbols, alphabets=alphabets, payload=payload)


def reencode_channel(data: ChannelData) -> bytes:
    """Byte-identical re-encode of a decoded channel section."""
    enc = AacEncoder()
    for s, a in zip(data.symbols, data.alphabets):
        enc.encode(s, a)
    params = _params_for(data.channel)
    return _pack_marks(data.specs, params) + enc.finish()


# ---------------------------------------------------------------------------
# Container assembly / parsing

_HEADER = struct.Struct("<HHHHBBBBf")


def pack_container(geo: StreamGeometry, shadow_payload: bytes,
                   parallax_payload: bytes, channel_payloads: dict) -> bytes:
    out = [MAGIC, struct.pack("<B", VERSION)]
    out.append(_HEADER.pack(geo.ei_rows, geo.ei_cols, geo.ei_size,
                            geo.uv_ei_size, geo.interval, geo.gop,
                            geo.cb_y, geo.cb_uv, geo.rd_lambda))
    for idx in (geo.key_rows, geo.key_cols):
        out.append(struct.pack("<H", len(idx)))
        out.append(struct.pack(f"<{len(idx)}H", *idx))
    for sec_id, payload in [(SEC_SHADOW, shadow_payload),
                            (SEC_PARALLAX, parallax_payload),
                            (SEC_CHANNEL["y"], channel_payloads["y"]),
                            (SEC_CHANNEL["u"], channel_payloads["u"]),
                            (SEC_CHANNEL["v"], channel_payloads["v"])]:
        out.append(struct.pack("<BI", sec_id, len(payload)))
        out.append(payload)
    return b"".join(out)


def parse_container(data: bytes):
    """Split a container into (StreamGeometry, {section name: payload})."""
    if len(data) < len(MAGIC) + 1:
        raise ContainerError("file too short for magic and version")
    if data[:len(MAGIC)] != MAGIC:
        raise ContainerError("bad magic; not an emr4d bitstream")
    version = data[len(MAGIC)]
    if version != VERSION:
        raise ContainerError(f"unsupported version {version}")
    pos = len(MAGIC) + 1
    if len(data) < pos + _HEADER.size:
        raise ContainerError("truncated geometry header")
    (m, n, s, uvs, interval, gop, cb_y, cb_uv, lam) = _HEADER.unpack_from(data, pos)
    pos += _HEADER.size

    def read_indices(pos):
        if len(data) < pos + 2:
            raise ContainerError("truncated key-index table")
        (cnt,) = struct.unpack_from("<H", data, pos)
        pos += 2
        if len(data) < pos + 2 * cnt:
            raise ContainerError("truncated key-index table")
        idx = list(struct.unpack_from(f"<{cnt}H", data, pos))
        return idx, pos + 2 * cnt

    key_rows, pos = read_indices(pos)
    key_cols, pos = read_indices(pos)
    geo = StreamGeometry(m, n, s, uvs, interval, gop, cb_y, cb_uv,
                         float(lam), key_rows, key_cols)

    sections = {}
    while pos < len(data):
        if len(data) < pos + 5:
            raise ContainerError(f"truncated section header at byte {pos}")
        sec_id, length = struct.unpack_from("<BI", data, pos)
        pos += 5
        if sec_id not in _SEC_NAMES:
            raise ContainerError(f"unknown section id {sec_id} at byte {pos - 5}")
        if len(data) < pos + length:
            raise ContainerError(f"section {_SEC_NAMES[sec_id]} truncated "
                                 f"({length} bytes declared, {len(data) - pos} left)")
        sections[_SEC_NAMES[sec_id]] = data[pos:pos + length]
        pos += length
    missing = {"shadow", "parallax", "y", "u", "v"} - set(sections)
    if missing:
        raise ContainerError(f"missing sections: {sorted(missing)}")
    return geo, sections
