"""emr4d: a modeling-based light-field EIA codec.

Elemental-image arrays are compressed by fitting 4-D Epanechnikov (luma)
and Gaussian (chroma) mixture models to pseudo-video sequences of key
elemental images, rate-distortion selecting the per-block model count,
entropy-coding the quantized parameters, and predicting the remaining EIs
from the decoded key EIs via parallax offsets and shadow-corner models.
"""

from .eia import CodecConfig, EiaGrid, KeySelection, PROFILES, PvsBlock
from .errors import CodecError, ContainerError, PayloadError
from .fitting import FitResult, fit, kmeans_init, single_kernel_closed_form
from .kernels import (
    AxisLengths,
    ExpertParams,
    MixtureModel,
    conditional_mean,
    ek3d_marginal,
    ek4d_density,
    gate,
    gaussian_density,
    gaussian_marginal,
    regress,
)
from .metrics import QualityReport, psnr, quality_report, render_central_view, ssim
from .pipeline import decode, encode, reconstruct_key_grid, reencode
from .selection import RdoConfig, RdoResult, select_model_count
from .sideinfo import (
    ParallaxMap,
    ShadowModel,
    detect_parallax,
    fit_shadow_model,
    max_legal_interval,
)
from .synthetic import SceneSpec, generate

__version__ = "0.1.0"

__all__ = [
    "AxisLengths", "CodecConfig", "CodecError", "ContainerError", "EiaGrid",
    "ExpertParams", "FitResult", "KeySelection", "MixtureModel", "PROFILES",
    "ParallaxMap", "PayloadError", "PvsBlock", "QualityReport", "RdoConfig",
    "RdoResult", "SceneSpec", "ShadowModel", "conditional_mean", "decode",
    "detect_parallax", "ek3d_marginal", "ek4d_density", "encode", "fit",
    "fit_shadow_model", "gate", "gaussian_density", "gaussian_marginal",
    "generate", "kmeans_init", "max_legal_interval", "psnr", "quality_report",
    "reconstruct_key_grid", "reencode", "regress", "render_central_view",
    "select_model_count", "single_kernel_closed_form", "ssim",
]
