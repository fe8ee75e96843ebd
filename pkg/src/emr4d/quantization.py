"""Parameter quantization: bit widths, uniform grids, Cholesky coding.

Each coded parameter gets a per-channel uniform grid described by a
(bits, min, span) record; index k in 1..2^n restores

    min + (k - 1) * span / (2^n - 1).

The 3x3 position covariance is transmitted as the six entries of its
upper-triangular factor U with R = U^T U, which keeps the decoded matrix
positive semi-definite by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

Y_PARAMS = ("mu_x", "mu_y", "mu_z", "mu_w",
            "u11", "u12", "u13", "u22", "u23", "u33",
            "cov_xw", "cov_yw", "cov_zw", "alpha")
UV_PARAMS = Y_PARAMS[:10]

# Per-model bit widths for the multi-model regime.  mu_z narrows from 5 to
# 4 bits once rd_lambda reaches 300.
_Y_MULTI = {"mu_x": 4, "mu_y": 4, "mu_z": None, "mu_w": 6,
            "u11": 7, "u12": 6, "u13": 6, "u22": 7, "u23": 6, "u33": 7,
            "cov_xw": 6, "cov_yw": 6, "cov_zw": 5, "alpha": 6}
_UV_MULTI = {"mu_x": 4, "mu_y": 4, "mu_z": None, "mu_w": 5,
             "u11": 4, "u12": 3, "u13": 3, "u22": 4, "u23": 3, "u33": 4}

# Single-model blocks transmit only the w-linked statistics; position mean
# and covariance are regenerated from block geometry.
_Y_SINGLE = {"mu_w": 6, "cov_xw": 6, "cov_yw": 6, "cov_zw": 5}
_UV_SINGLE = {"mu_w": 5}

NM_BITS = {"y": 4, "u": 3, "v": 3}
MAX_MODELS = {"y": 16, "u": 8, "v": 8}


def _mu_z_bits(rd_lambda: float) -> int:
    return 4 if rd_lambda >= 300 else 5


def bit_table(channel: str, multi: bool, rd_lambda: float) -> dict:
    """Ordered parameter -> bit width map for one regime of one channel."""
    if channel not in ("y", "u", "v"):
        raise ValueError(f"unknown channel {channel!r}")
    if multi:
        base = dict(_Y_MULTI if channel == "y" else _UV_MULTI)
        base["mu_z"] = _mu_z_bits(rd_lambda)
        return base
    return dict(_Y_SINGLE if channel == "y" else _UV_SINGLE)


def per_model_bits(channel: str, k: int, rd_lambda: float) -> int:
    return sum(bit_table(channel, k > 1, rd_lambda).values())


def charged_bits(channel: str, k: int, rd_lambda: float) -> int:
    """Exact pre-entropy-coding bit cost for a block with k models."""
    if not 1 <= k <= MAX_MODELS[channel]:
        raise ValueError(f"model count {k} out of range for channel {channel}")
    return NM_BITS[channel] + k * per_model_bits(channel, k, rd_lambda)


# ---------------------------------------------------------------------------
# Uniform quantization grid


@dataclass
class ParamSpec:
    """Grid description for one parameter: bit width, minimum, span.

    min and span are stored as float32 (the header format); span is widened
    one ulp at a time until the grid covers the source range.
    """

    bits: int
    mn: float
    span: float

    @property
    def levels(self) -> int:
        return 1 << self.bits

    def step(self) -> float:
        return self.span / (self.levels - 1) if self.levels > 1 else 0.0


def make_param_spec(values: np.ndarray, bits: int) -> ParamSpec:
    values = np.asarray(values, dtype=np.float64)
    if values.size == 0:
        return ParamSpec(bits, 0.0, 0.0)
    lo, hi = float(values.min()), float(values.max())
    mn = np.float32(lo)
    if float(mn) > lo:
        mn = np.nextafter(mn, np.float32(-np.inf))
    span = np.float32(hi - float(mn))
    while float(mn) + float(span) < hi:
        span = np.nextafter(span, np.float32(np.inf))
    return ParamSpec(bits, float(mn), float(span))


class ClampCounter:
    """Counts values that fell outside their quantization range."""

    def __init__(self):
        self.count = 0


def quantize(value: float, spec: ParamSpec, clamps: ClampCounter | None = None) -> int:
    """Nearest grid index in 1..2^n, ties toward the smaller index."""
    step = spec.step()
    if step == 0.0 or spec.span <= 0.0:
        return 1
    v = float(value)
    if v < spec.mn or v > spec.mn + spec.span:
        if clamps is not None:
            clamps.count += 1
        v = min(max(v, spec.mn), spec.mn + spec.span)
    pos = (v - spec.mn) / step
    k0 = int(np.floor(pos))
    frac = pos - k0
    k = k0 + 1 if frac <= 0.5 else k0 + 2
    return min(max(k, 1), spec.levels)


def dequantize(k: int, spec: ParamSpec) -> float:
    if not 1 <= k <= spec.levels:
        raise ValueError(f"index {k} outside 1..{spec.levels}")
    if spec.levels == 1:
        return spec.mn
    return spec.mn + (k - 1) * spec.span / (spec.levels - 1)


# alpha is quantized on a fixed (0, 1] grid rather than a data-driven span.
ALPHA_SPEC = ParamSpec(bits=_Y_MULTI["alpha"], mn=0.0, span=1.0)


# ---------------------------------------------------------------------------
# Cholesky factorization of the position covariance


@dataclass
class CholeskyFactors:
    u11: float
    u12: float
    u13: float
    u22: float
    u23: float
    u33: float

    def as_tuple(self) -> tuple:
        return (self.u11, self.u12, self.u13, self.u22, self.u23, self.u33)

    def matrix(self) -> np.ndarray:
        return np.array([[self.u11, self.u12, self.u13],
                         [0.0, self.u22, self.u23],
                         [0.0, 0.0, self.u33]])


def cholesky_r(r: np.ndarray) -> CholeskyFactors:
    """Upper-triangular U with U^T U = R for a symmetric PSD 3x3 matrix.

    Semi-definite inputs are handled by clamping tiny negative pivots to
    zero; a clearly negative eigenvalue is rejected.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise ValueError("expected a 3x3 matrix")
    if not np.allclose(r, r.T, atol=1e-8 * max(1.0, float(np.abs(r).max()))):
        raise ValueError("matrix is not symmetric")
    scale = max(1.0, float(np.trace(r)))
    if float(np.linalg.eigvalsh(r)[0]) < -1e-8 * scale:
        raise ValueError("matrix has a negative eigenvalue; not PSD")

    def _sqrt(v):
        return float(np.sqrt(max(v, 0.0)))

    u11 = _sqrt(r[0, 0])
    u12 = r[0, 1] / u11 if u11 > 0 else 0.0
    u13 = r[0, 2] / u11 if u11 > 0 else 0.0
    u22 = _sqrt(r[1, 1] - u12 * u12)
    u23 = (r[1, 2] - u12 * u13) / u22 if u22 > 0 else 0.0
    u33 = _sqrt(r[2, 2] - u13 * u13 - u23 * u23)
    return CholeskyFactors(u11, u12, u13, u22, u23, u33)


def reconstruct_r(factors: CholeskyFactors) -> np.ndarray:
    u = factors.matrix()
    return u.T @ u
