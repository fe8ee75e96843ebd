"""Mixture fitting for block pseudo video sequences.

Pipeline per block: k-means++ initialization, a fixed budget of 13
EM-style updates (14 evaluated parameter sets including the init), a full
regression of the block after every update, and selection of the
iteration with the minimum MSE.  The same loop serves both kernel kinds;
only the density inside the posterior differs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernels import (
    EK4_COEF,
    EK_SUPPORT,
    GAUSS4_COEF,
    ExpertParams,
    MixtureModel,
    _chol,
    _logdet,
    _ModelEval,
    _quad_form,
    regularize,
)

N_EVALUATIONS = 14  # initialization + 13 update steps
ALPHA_FLOOR = 1e-6
EMPTY_CLUSTER_WEIGHT = 1e-8


@dataclass
class FitResult:
    """Outcome of one block fit: chosen model, MSE trace and replay seed."""

    model: MixtureModel
    iteration_chosen: int
    mse_trace: np.ndarray
    seed: int

    @property
    def mse(self) -> float:
        return float(self.mse_trace[self.iteration_chosen])


def derive_seed(root: int, *keys: int) -> int:
    """Stable per-task seed from a root seed and integer coordinates."""
    ss = np.random.SeedSequence([int(root) & 0xFFFFFFFF, *[int(k) & 0xFFFFFFFF for k in keys]])
    return int(ss.generate_state(1, np.uint64)[0])


def grid_position_stats(width: int, height: int, frames: int):
    """Analytic position mean and covariance of a full integer grid block.

    For samples covering x in 1..width, y in 1..height, z in 1..frames the
    mean is ((w+1)/2, (h+1)/2, (f+1)/2) and the covariance is diagonal with
    the (n^2 - 1)/12 grid variances rescaled to the 1/(N-1) convention.
    Cross terms vanish exactly.
    """
    n = width * height * frames
    if n < 2:
        raise ValueError("need at least 2 samples")
    mu = np.array([(width + 1) / 2.0, (height + 1) / 2.0, (frames + 1) / 2.0])
    scale = n / (n - 1.0)
    var = np.array([
        (width ** 2 - 1) / 12.0,
        (height ** 2 - 1) / 12.0,
        (frames ** 2 - 1) / 12.0,
    ]) * scale
    return mu, np.diag(var)


def single_kernel_closed_form(samples: np.ndarray,
                              geometry: tuple | None = None) -> ExpertParams:
    """Single-expert statistics: sample mean and 1/(N-1) covariance, alpha 1.

    When ``geometry`` (width, height, frames) is given the position mean and
    covariance are replaced with their exact grid values, which the decoder
    regenerates without transmitting them.  For full-grid blocks the two
    agree up to float rounding.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples")
    mu = samples.mean(axis=0)
    centered = samples - mu
    sigma = centered.T @ centered / (n - 1.0)
    sigma = 0.5 * (sigma + sigma.T)
    if geometry is not None:
        w, h, f = geometry
        if w * h * f != n:
            raise ValueError("geometry does not match sample count")
        mu_pos, r = grid_position_stats(w, h, f)
        mu = mu.copy()
        mu[:3] = mu_pos
        sigma = sigma.copy()
        sigma[:3, :3] = r
    return ExpertParams(alpha=1.0, mu=mu, sigma=sigma)


# ---------------------------------------------------------------------------
# k-means++ initialization


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]))
    centers[0] = x[rng.integers(n)]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[i] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[i]) ** 2, axis=1))
    return centers


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = 25) -> np.ndarray:
    n, k = x.shape[0], centers.shape[0]
    assign = np.full(n, -1)
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = np.argmin(d2, axis=1)
        # Relocate any emptied cluster to the worst-served sample.
        for j in range(k):
            if not np.any(new_assign == j):
                far = int(np.argmax(d2[np.arange(n), new_assign]))
                new_assign[far] = j
                centers[j] = x[far]
        if np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            centers[j] = x[assign == j].mean(axis=0)
    return assign


def kmeans_init(samples: np.ndarray, k: int, seed: int) -> MixtureModel:
    """k-means++ seeding plus Lloyd refinement into an initial mixture.

    Each cluster becomes one expert with alpha = N_j / N, the cluster mean,
    and the regularized 1/(N_j - 1) cluster covariance (zero for singleton
    clusters before regularization).
    """
    x = np.asarray(samples, dtype=np.float64)
    n = x.shape[0]
    if k < 1 or n < k:
        raise ValueError(f"need at least k={k} samples, got {n}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_centers(x, k, rng)
    assign = _lloyd(x, centers)
    experts = []
    for j in range(k):
        pts = x[assign == j]
        mu = pts.mean(axis=0)
        if pts.shape[0] >= 2:
            c = pts - mu
            sigma = c.T @ c / (pts.shape[0] - 1.0)
            sigma = 0.5 * (sigma + sigma.T)
        else:
            sigma = np.zeros((4, 4))
        experts.append(ExpertParams(alpha=pts.shape[0] / n, mu=mu,
                                    sigma=regularize(sigma)))
    return MixtureModel(experts, "epanechnikov")


# ---------------------------------------------------------------------------
# EM loop


def _densities(samples: np.ndarray, model: MixtureModel):
    """Per-expert densities and 4-D Mahalanobis forms, both (N, K)."""
    n, k = samples.shape[0], model.k
    dens = np.empty((n, k))
    quad = np.empty((n, k))
    for j, e in enumerate(model.experts):
        lo = _chol(regularize(e.sigma), "sigma")
        q = _quad_form(samples, e.mu, lo)
        quad[:, j] = q
        if model.kernel_kind == "epanechnikov":
            coef = EK4_COEF * np.exp(-0.5 * _logdet(lo))
            dens[:, j] = np.where(q <= EK_SUPPORT, coef * (1.0 - q / EK_SUPPORT), 0.0)
        else:
            dens[:, j] = GAUSS4_COEF * np.exp(-0.5 * (q + _logdet(lo)))
    return dens, quad


def posteriors(samples: np.ndarray, model: MixtureModel) -> np.ndarray:
    """Normalized responsibilities; rows outside every compact support are
    assigned entirely to the expert nearest in full 4-D Mahalanobis distance."""
    dens, quad = _densities(samples, model)
    num = dens * model.alphas()
    den = num.sum(axis=1)
    q = np.zeros_like(num)
    ok = den > 0
    q[ok] = num[ok] / den[ok, None]
    if not ok.all():
        rows = np.flatnonzero(~ok)
        q[rows, np.argmin(quad[rows], axis=1)] = 1.0
    return q


def _m_step(samples: np.ndarray, q: np.ndarray, residuals: np.ndarray,
            kind: str) -> MixtureModel:
    n, k = q.shape
    experts = []
    alphas = np.empty(k)
    reseeded = []
    for j in range(k):
        w = q[:, j]
        s = float(w.sum())
        if s < EMPTY_CLUSTER_WEIGHT:
            # Starved expert: re-seed at the worst-reconstructed sample.
            idx = int(np.argmax(np.abs(residuals)))
            mu = samples[idx].copy()
            c = samples - samples.mean(axis=0)
            sigma = c.T @ c / max(n - 1.0, 1.0)
            sigma = 0.5 * (sigma + sigma.T)
            alphas[j] = 1.0 / k
            reseeded.append(j)
        else:
            mu = (w @ samples) / s
            c = samples - mu
            sigma = (c * w[:, None]).T @ c / s
            sigma = 0.5 * (sigma + sigma.T)
            alphas[j] = s / n
        experts.append(ExpertParams(alpha=0.0, mu=mu, sigma=sigma))
    alphas = np.maximum(alphas, ALPHA_FLOOR)
    alphas /= alphas.sum()
    for j, e in enumerate(experts):
        e.alpha = float(alphas[j])
    return MixtureModel(experts, kind)


def _flat_result(expert: ExpertParams, samples: np.ndarray, kind: str,
                 seed: int) -> FitResult:
    model = MixtureModel([expert], kind)
    recon = _ModelEval(model).regress(samples[:, :3])
    mse = float(np.mean((recon - samples[:, 3]) ** 2))
    return FitResult(model=model, iteration_chosen=0,
                     mse_trace=np.full(N_EVALUATIONS, mse), seed=seed)


def fit(samples: np.ndarray, k: int, kernel_kind: str = "epanechnikov",
        seed: int = 0, geometry: tuple | None = None) -> FitResult:
    """Fit a k-expert mixture to an N x 4 block sample matrix.

    Runs the fixed 13-update loop after initialization, records the block
    MSE after every parameter set (unclipped regression values), and
    returns the set with the minimum MSE.  k = 1 short-circuits to the
    closed-form statistics: the update loop is a fixed point there up to
    the covariance normalization, and the codec needs the 1/(N-1) form that
    the decoder regenerates from block geometry.
    """
    samples = np.asarray(samples, dtype=np.float64)
    n = samples.shape[0]
    if n < k:
        raise ValueError(f"need at least k={k} samples, got {n}")
    if k == 1:
        return _flat_result(single_kernel_closed_form(samples, geometry),
                            samples, kernel_kind, seed)

    model = kmeans_init(samples, k, seed)
    model = MixtureModel(model.experts, kernel_kind)
    positions = samples[:, :3]
    values = samples[:, 3]

    trace = np.empty(N_EVALUATIONS)
    recon = _ModelEval(model).regress(positions)
    residuals = recon - values
    trace[0] = np.mean(residuals ** 2)
    best_model, best_idx = model, 0

    for t in range(1, N_EVALUATIONS):
        q = posteriors(samples, model)
        model = _m_step(samples, q, residuals, kernel_kind)
        recon = _ModelEval(model).regress(positions)
        residuals = recon - values
        trace[t] = np.mean(residuals ** 2)
        if trace[t] < trace[best_idx]:
            best_model, best_idx = model, t

    return FitResult(model=best_model, iteration_chosen=best_idx,
                     mse_trace=trace, seed=seed)


def block_mse(model: MixtureModel, samples: np.ndarray) -> float:
    """Mean squared reconstruction error of a model over a sample matrix."""
    samples = np.asarray(samples, dtype=np.float64)
    recon = _ModelEval(model).regress(samples[:, :3])
    return float(np.mean((recon - samples[:, 3]) ** 2))
