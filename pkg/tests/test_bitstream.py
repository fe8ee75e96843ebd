"""Container framing, channel coding, canonical re-encode."""

import numpy as np
import pytest

from emr4d.bitstream import (
    MAGIC,
    StreamGeometry,
    channel_layout,
    decode_channel,
    encode_channel,
    pack_container,
    parse_container,
    reencode_channel,
)
from emr4d.eia import key_indices
from emr4d.errors import ContainerError, PayloadError
from emr4d.fitting import fit
from emr4d.quantization import charged_bits
from emr4d.sideinfo import ParallaxMap, ShadowModel, encode_parallax, encode_shadow


def small_geometry(rd_lambda=1000.0, m=6, n=6, interval=5):
    return StreamGeometry(
        ei_rows=m, ei_cols=n, ei_size=75, uv_ei_size=38, interval=interval,
        gop=4, cb_y=19, cb_uv=38, rd_lambda=rd_lambda,
        key_rows=key_indices(m, interval), key_cols=key_indices(n, interval))


def fitted_models(geo, channel, seed=0, ks=None):
    rng = np.random.default_rng(seed)
    layout = channel_layout(geo, channel)
    kind_max = 16 if channel == "y" else 8
    models = []
    for i, bg in enumerate(layout):
        k = ks[i % len(ks)] if ks else int(rng.integers(1, kind_max + 1))
        tiles = []
        base = rng.uniform(20, 235, (bg.height + bg.frames, bg.width + bg.frames))
        for t in range(bg.frames):
            tiles.append(base[t:t + bg.height, t:t + bg.width].astype(np.uint8))
        from emr4d.eia import sample_matrix
        samples = sample_matrix(tiles)
        kind = "epanechnikov" if channel == "y" else "gaussian"
        models.append(fit(samples, k, kind, seed=seed + i,
                          geometry=(bg.width, bg.height, bg.frames)).model)
    return models


class TestChannelCoding:
    def test_round_trip_reproduces_dequantized_values(self):
        geo = small_geometry()
        models = fitted_models(geo, "y", ks=[1, 2, 3, 5, 16])
        enc = encode_channel(models, "y", geo)
        dec = decode_channel(enc.payload, "y", geo)
        assert dec.ks == enc.ks
        for me, md in zip(enc.models, dec.models):
            assert me.k == md.k
            for ee, ed in zip(me.experts, md.experts):
                np.testing.assert_array_equal(ee.mu, ed.mu)
                np.testing.assert_array_equal(ee.sigma, ed.sigma)
                assert ee.alpha == ed.alpha

    def test_chroma_round_trip(self):
        geo = small_geometry()
        models = fitted_models(geo, "u", ks=[1, 4, 8])
        enc = encode_channel(models, "u", geo)
        dec = decode_channel(enc.payload, "u", geo)
        assert dec.ks == enc.ks
        for md, k in zip(dec.models, dec.ks):
            if k > 1:
                assert all(e.alpha == pytest.approx(1.0 / k) for e in md.experts)

    def test_reencode_byte_identical(self):
        geo = small_geometry()
        for ch in ("y", "u"):
            models = fitted_models(geo, ch, seed=3)
            enc = encode_channel(models, ch, geo)
            dec = decode_channel(enc.payload, ch, geo)
            assert reencode_channel(dec) == enc.payload

    def test_decoded_alpha_renormalized(self):
        geo = small_geometry()
        models = fitted_models(geo, "y", seed=5, ks=[4, 9])
        dec = decode_channel(encode_channel(models, "y", geo).payload, "y", geo)
        for md in dec.models:
            assert sum(e.alpha for e in md.experts) == pytest.approx(1.0, abs=1e-12)

    def test_decoded_position_covariances_psd(self):
        geo = small_geometry()
        models = fitted_models(geo, "y", seed=7)
        dec = decode_channel(encode_channel(models, "y", geo).payload, "y", geo)
        for md in dec.models:
            for e in md.experts:
                assert np.linalg.eigvalsh(e.r_pos).min() >= -1e-12

    def test_charged_bits_match_raw_symbol_bits(self):
        geo = small_geometry()
        models = fitted_models(geo, "y", seed=9)
        enc = encode_channel(models, "y", geo)
        want = sum(charged_bits("y", m.k, geo.rd_lambda) for m in models)
        assert enc.raw_symbol_bits == want

    def test_entropy_coding_never_expands_much(self):
        geo = small_geometry()
        for ch in ("y", "u"):
            models = fitted_models(geo, ch, seed=11)
            enc = encode_channel(models, ch, geo)
            marks = 1 + 8 * (14 if ch == "y" else 10)
            coded_bytes = len(enc.payload) - marks
            assert coded_bytes <= enc.raw_symbol_bits // 8 + 64

    def test_single_kernel_symbol_budget(self):
        geo = small_geometry()
        models = fitted_models(geo, "y", ks=[1])
        enc = encode_channel(models, "y", geo)
        blocks = len(channel_layout(geo, "y"))
        # 4 NM bits + 6+6+6+5 parameter bits per block.
        assert enc.raw_symbol_bits == blocks * (4 + 23)

    def test_block_count_mismatch_rejected(self):
        geo = small_geometry()
        with pytest.raises(ValueError):
            encode_channel([], "y", geo)

    def test_truncated_payload_raises(self):
        geo = small_geometry()
        models = fitted_models(geo, "y", seed=13)
        enc = encode_channel(models, "y", geo)
        with pytest.raises(PayloadError):
            decode_channel(enc.payload[:40], "y", geo)
        with pytest.raises(PayloadError):
            decode_channel(enc.payload[:200], "y", geo)


class TestContainer:
    def build(self):
        geo = small_geometry()
        payloads = {}
        for ch in ("y", "u", "v"):
            models = fitted_models(geo, ch, seed=17, ks=[1, 2])
            payloads[ch] = encode_channel(models, ch, geo).payload
        shadow = encode_shadow(ShadowModel())
        par = encode_parallax(ParallaxMap(np.zeros((6, 5), np.int64),
                                          np.zeros((5, 6), np.int64)))
        return geo, pack_container(geo, shadow, par, payloads)

    def test_round_trip(self):
        geo, data = self.build()
        geo2, sections = parse_container(data)
        assert geo2 == geo
        assert set(sections) == {"shadow", "parallax", "y", "u", "v"}

    def test_bad_magic(self):
        _, data = self.build()
        with pytest.raises(ContainerError):
            parse_container(b"NOPE" + data[4:])

    def test_bad_version(self):
        _, data = self.build()
        bad = data[:len(MAGIC)] + bytes([99]) + data[len(MAGIC) + 1:]
        with pytest.raises(ContainerError):
            parse_container(bad)

    def test_truncated_section(self):
        _, data = self.build()
        with pytest.raises(ContainerError):
            parse_container(data[:-10])

    def test_missing_section(self):
        geo, _ = self.build()
        with pytest.raises(ContainerError):
            parse_container(pack_container(geo, b"x" * 65, b"", {"y": b"", "u": b"", "v": b""})[:20])

    def test_unknown_section_id(self):
        _, data = self.build()
        tainted = data + bytes([9]) + (5).to_bytes(4, "little") + b"abcde"
        with pytest.raises(ContainerError):
            parse_container(tainted)
