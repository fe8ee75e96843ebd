"""Per-block rate-distortion selection of the mixture size.

Every candidate model count is fitted independently and charged its exact
pre-entropy-coding bit cost; the candidate minimizing J = D + lambda * R
wins, with ties broken toward the smaller count.  Y blocks sweep 1..16
Epanechnikov experts at full lambda; chroma blocks sweep 1..8 Gaussian
experts at half lambda.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .eia import PvsBlock
from .fitting import FitResult, derive_seed, fit
from .quantization import MAX_MODELS, charged_bits

_CHANNEL_CODE = {"y": 0, "u": 1, "v": 2}


@dataclass
class RdoConfig:
    rd_lambda: float
    channel: str

    def __post_init__(self):
        if self.rd_lambda < 0:
            raise ValueError("lambda must be >= 0")
        if self.channel not in _CHANNEL_CODE:
            raise ValueError(f"unknown channel {self.channel!r}")


@dataclass
class RdoResult:
    chosen_k: int
    j_values: np.ndarray
    bits: np.ndarray
    distortion: np.ndarray
    fit: FitResult


def candidate_counts(channel: str) -> range:
    return range(1, MAX_MODELS[channel] + 1)


def kernel_for_channel(channel: str) -> str:
    return "epanechnikov" if channel == "y" else "gaussian"


def effective_lambda(rd_lambda: float, channel: str) -> float:
    return rd_lambda if channel == "y" else 0.5 * rd_lambda


def select_model_count(block: PvsBlock, cfg: RdoConfig, seed: int = 0) -> RdoResult:
    """Exhaustive sweep over candidate model counts for one block PVS.

    Distortion is the sum of squared (unclipped) reconstruction errors over
    every frame of the block; rate is the exact bit charge for that count.
    Candidate seeds derive from the block origin and the count so results
    do not depend on evaluation order.
    """
    kind = kernel_for_channel(cfg.channel)
    lam = effective_lambda(cfg.rd_lambda, cfg.channel)
    counts = list(candidate_counts(cfg.channel))
    n = block.n_samples
    geometry = (block.width, block.height, block.frames)

    fits = []
    dist = np.empty(len(counts))
    bits = np.empty(len(counts))
    for i, k in enumerate(counts):
        child = derive_seed(seed, _CHANNEL_CODE[cfg.channel], block.group_index,
                            *block.origin, k)
        fr = fit(block.samples, k, kind, seed=child, geometry=geometry)
        fits.append(fr)
        dist[i] = fr.mse * n
        bits[i] = charged_bits(cfg.channel, k, cfg.rd_lambda)
    j = dist + lam * bits
    best = int(np.argmin(j))  # first minimum, i.e. the smaller count on ties
    return RdoResult(chosen_k=counts[best], j_values=j, bits=bits,
                     distortion=dist, fit=fits[best])
