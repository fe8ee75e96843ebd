"""Closed-form 4-D Epanechnikov kernel family and its Gaussian counterpart.

A kernel expert over samples phi = (x, y, z, w) is parameterized by a prior
weight alpha, a mean mu and a 4x4 covariance Sigma.  The Epanechnikov expert
has compact ellipsoidal support {q <= 8} with q the Mahalanobis form
(phi - mu)^T Sigma^-1 (phi - mu), and density

    3 / (32 pi^2 sqrt|Sigma|) * (1 - q / 8).

Position-only queries go through the 3-D marginal over w,

    sqrt(2) / (4 pi^2 sqrt|R|) * (1 - q3 / 8)^(3/2)   on {q3 <= 8},

where R is the (x, y, z) block of Sigma and q3 the position Mahalanobis
form.  Regression blends per-expert affine conditional means

    mu_W + (Sigma_WX, Sigma_WY, Sigma_WZ) R^-1 (delta - mu_pos)

through gate weights proportional to alpha_j * marginal_j(delta).  The
Gaussian expert uses the multivariate normal density with the same
parameterization; its position marginal is the 3-D normal and its
conditional mean is the identical affine form.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

EK_SUPPORT = 8.0
EK4_COEF = 3.0 / (32.0 * np.pi ** 2)
EK3_COEF = np.sqrt(2.0) / (4.0 * np.pi ** 2)
GAUSS4_COEF = (2.0 * np.pi) ** -2
GAUSS3_COEF = (2.0 * np.pi) ** -1.5

KERNEL_KINDS = ("epanechnikov", "gaussian")


class SingularCovarianceError(ValueError):
    """Raised when a covariance that should have been regularized is singular."""


@dataclass
class ExpertParams:
    """One mixture expert: prior weight, 4-vector mean, 4x4 covariance."""

    alpha: float
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64).reshape(4)
        self.sigma = np.asarray(self.sigma, dtype=np.float64).reshape(4, 4)

    @property
    def mu_pos(self) -> np.ndarray:
        return self.mu[:3]

    @property
    def r_pos(self) -> np.ndarray:
        """Position covariance block R (x, y, z rows and columns)."""
        return self.sigma[:3, :3]

    @property
    def cross_w(self) -> np.ndarray:
        """Covariances between w and the three position coordinates."""
        return self.sigma[3, :3]


@dataclass
class MixtureModel:
    """A K-expert mixture with a fixed kernel kind."""

    experts: list
    kernel_kind: str = "epanechnikov"

    def __post_init__(self):
        if self.kernel_kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kernel_kind!r}")

    @property
    def k(self) -> int:
        return len(self.experts)

    def alphas(self) -> np.ndarray:
        return np.array([e.alpha for e in self.experts], dtype=np.float64)

    def validate(self, tol: float = 1e-9) -> None:
        s = float(self.alphas().sum())
        if abs(s - 1.0) > tol:
            raise ValueError(f"expert priors sum to {s}, expected 1")


@dataclass
class AxisLengths:
    """Semi-axis lengths of the axis-aligned support ellipsoid."""

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        if min(self.a, self.b, self.c, self.d) <= 0:
            raise ValueError("axis lengths must be positive")

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c, self.d], dtype=np.float64)


def regularize(sigma: np.ndarray) -> np.ndarray:
    """Return sigma + eps*I with eps = 1e-6 * trace / dim (floor 1e-9)."""
    sigma = np.asarray(sigma, dtype=np.float64)
    tr = float(np.trace(sigma))
    dim = sigma.shape[0]
    eps = 1e-6 * tr / dim if tr > 0 else 1e-9
    return sigma + eps * np.eye(dim)


def _chol(mat: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            f"{what} is singular; regularization was skipped"
        ) from exc


def _quad_form(points: np.ndarray, mu: np.ndarray, lo: np.ndarray) -> np.ndarray:
    """Mahalanobis form (p - mu)^T (L L^T)^-1 (p - mu) for rows of `points`."""
    diff = np.atleast_2d(points) - mu
    z = solve_triangular(lo, diff.T, lower=True, check_finite=False)
    return np.einsum("ij,ij->j", z, z)


def _logdet(lo: np.ndarray) -> float:
    # Diagonal entries are O(1)..O(100); the product cannot over/underflow.
    return 2.0 * float(np.log(lo.diagonal().prod()))


def _shape_out(val: np.ndarray, inp) -> np.ndarray | float:
    if np.ndim(inp) == 1:
        return float(val[0])
    return val


def ek4d_density(phi, params: ExpertParams):
    """Epanechnikov density at phi; zero outside the support ellipsoid.

    Accepts a single 4-vector or an (N, 4) array.
    """
    lo = _chol(regularize(params.sigma), "sigma")
    q = _quad_form(phi, params.mu, lo)
    coef = EK4_COEF * np.exp(-0.5 * _logdet(lo))
    out = np.where(q <= EK_SUPPORT, coef * (1.0 - q / EK_SUPPORT), 0.0)
    return _shape_out(out, phi)


def gaussian_density(phi, params: ExpertParams):
    """Multivariate normal density with the same (mu, sigma) parameterization."""
    lo = _chol(regularize(params.sigma), "sigma")
    q = _quad_form(phi, params.mu, lo)
    out = GAUSS4_COEF * np.exp(-0.5 * (q + _logdet(lo)))
    return _shape_out(out, phi)


def _pos_chol(params: ExpertParams) -> np.ndarray:
    # Regularize the full sigma first so the position block matches the
    # epsilon used everywhere else, then factor its 3x3 corner.
    return _chol(regularize(params.sigma)[:3, :3], "position block R")


def ek3d_marginal(delta, params: ExpertParams):
    """Marginal of the Epanechnikov expert over w, evaluated at positions."""
    lo = _pos_chol(params)
    q = _quad_form(delta, params.mu_pos, lo)
    coef = EK3_COEF * np.exp(-0.5 * _logdet(lo))
    inside = q <= EK_SUPPORT
    out = np.zeros_like(q)
    out[inside] = coef * (1.0 - q[inside] / EK_SUPPORT) ** 1.5
    return _shape_out(out, delta)


def gaussian_marginal(delta, params: ExpertParams):
    """Position marginal of the Gaussian expert (a 3-D normal)."""
    lo = _pos_chol(params)
    q = _quad_form(delta, params.mu_pos, lo)
    out = GAUSS3_COEF * np.exp(-0.5 * (q + _logdet(lo)))
    return _shape_out(out, delta)


def marginal(delta, params: ExpertParams, kind: str):
    if kind == "epanechnikov":
        return ek3d_marginal(delta, params)
    return gaussian_marginal(delta, params)


def conditional_mean(delta, params: ExpertParams):
    """Affine conditional mean of w given position.

    The expression mu_W + cross_w R^-1 (delta - mu_pos) is shared by the
    Epanechnikov and Gaussian experts; it is evaluated as an unbounded
    affine function even outside the Epanechnikov support.
    """
    lo = _pos_chol(params)
    beta = solve_triangular(
        lo.T, solve_triangular(lo, params.cross_w, lower=True, check_finite=False),
        lower=False, check_finite=False)
    diff = np.atleast_2d(delta) - params.mu_pos
    out = params.mu[3] + diff @ beta
    return _shape_out(out, delta)


# Aliases kept so either kernel family reads naturally at call sites.
ek_conditional_mean = conditional_mean
gaussian_conditional_mean = conditional_mean


class _ModelEval:
    """Cached per-expert factorizations for vectorized gate/regression."""

    def __init__(self, model: MixtureModel):
        self.kind = model.kernel_kind
        self.k = model.k
        self.alphas = model.alphas()
        self.mu_pos = np.stack([e.mu_pos for e in model.experts])
        self.mu_w = np.array([e.mu[3] for e in model.experts])
        self.pos_chol = []
        self.betas = np.empty((model.k, 3))
        self.log_det_r = np.empty(model.k)
        for j, e in enumerate(model.experts):
            lo = _pos_chol(e)
            self.pos_chol.append(lo)
            self.log_det_r[j] = _logdet(lo)
            self.betas[j] = solve_triangular(
                lo.T, solve_triangular(lo, e.cross_w, lower=True, check_finite=False),
                lower=False, check_finite=False)

    def pos_quad(self, deltas: np.ndarray) -> np.ndarray:
        """(N, K) position Mahalanobis forms."""
        q = np.empty((deltas.shape[0], self.k))
        for j in range(self.k):
            q[:, j] = _quad_form(deltas, self.mu_pos[j], self.pos_chol[j])
        return q

    def marginals(self, deltas: np.ndarray, q: np.ndarray | None = None) -> np.ndarray:
        if q is None:
            q = self.pos_quad(deltas)
        out = np.empty_like(q)
        if self.kind == "epanechnikov":
            for j in range(self.k):
                coef = EK3_COEF * np.exp(-0.5 * self.log_det_r[j])
                qj = q[:, j]
                col = np.zeros_like(qj)
                inside = qj <= EK_SUPPORT
                col[inside] = coef * (1.0 - qj[inside] / EK_SUPPORT) ** 1.5
                out[:, j] = col
        else:
            for j in range(self.k):
                out[:, j] = GAUSS3_COEF * np.exp(
                    -0.5 * (q[:, j] + self.log_det_r[j])
                )
        return out

    def cond_means(self, deltas: np.ndarray) -> np.ndarray:
        """(N, K) per-expert conditional means."""
        out = np.empty((deltas.shape[0], self.k))
        for j in range(self.k):
            out[:, j] = self.mu_w[j] + (deltas - self.mu_pos[j]) @ self.betas[j]
        return out

    def gates(self, deltas: np.ndarray, fallback: bool = True) -> np.ndarray:
        q = self.pos_quad(deltas)
        num = self.marginals(deltas, q) * self.alphas
        den = num.sum(axis=1)
        out = np.zeros_like(num)
        ok = den > 0
        out[ok] = num[ok] / den[ok, None]
        if fallback and not ok.all():
            # Outside every compact support: hand the point to the expert
            # with the smallest position Mahalanobis distance.
            nearest = np.argmin(q[~ok], axis=1)
            out[np.flatnonzero(~ok), nearest] = 1.0
        return out

    def regress(self, deltas: np.ndarray) -> np.ndarray:
        g = self.gates(deltas, fallback=True)
        return np.einsum("nk,nk->n", g, self.cond_means(deltas))


def gate(delta, model: MixtureModel, fallback: bool = True):
    """Gate weight vector(s) g_j = alpha_j F_j(delta) / sum_k alpha_k F_k(delta).

    With ``fallback`` (the default) positions where every marginal vanishes
    are assigned entirely to the nearest expert by position Mahalanobis
    distance, so the weights always sum to 1.  Without it such rows are
    all-zero, which exposes the raw compact support.
    """
    ev = _ModelEval(model)
    out = ev.gates(np.atleast_2d(delta), fallback=fallback)
    if np.ndim(delta) == 1:
        return out[0]
    return out


def regress(delta, model: MixtureModel, clip: bool = False):
    """Mixture regression: gate-weighted sum of per-expert conditional means.

    Raw (unclipped) values are returned unless ``clip`` is set, in which
    case the result is clamped to the displayable gray range [0, 255].
    """
    ev = _ModelEval(model)
    out = ev.regress(np.atleast_2d(delta))
    if clip:
        out = np.clip(out, 0.0, 255.0)
    return _shape_out(out, delta)


# ---------------------------------------------------------------------------
# Monte-Carlo verification oracles for the axis-aligned kernel


def sample_in_ellipsoid(axes: AxisLengths, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform samples inside the ellipsoid sum((x_i / a_i)^2) <= 1."""
    ax = axes.as_array()
    x = rng.normal(size=(n, 4))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    r = rng.uniform(size=(n, 1)) ** 0.25
    return x * r * ax


def ellipsoid_volume(axes: AxisLengths) -> float:
    ax = axes.as_array()
    return float(np.pi ** 2 / 2.0 * np.prod(ax))


def mc_support_integral(axes: AxisLengths, n: int = 1_000_000, seed: int = 0):
    """Monte-Carlo estimate of the integral of (1 - q) over the unit-form
    ellipsoid, whose closed form is pi^2 * a * b * c * d / 6.

    Returns (estimate, standard_error).
    """
    rng = np.random.default_rng(seed)
    pts = sample_in_ellipsoid(axes, n, rng)
    q = np.sum((pts / axes.as_array()) ** 2, axis=1)
    vals = 1.0 - q
    vol = ellipsoid_volume(axes)
    return float(vals.mean() * vol), float(vals.std(ddof=1) / np.sqrt(n) * vol)


def support_integral_closed_form(axes: AxisLengths) -> float:
    return float(np.pi ** 2 * np.prod(axes.as_array()) / 6.0)


def sample_basic_kernel(axes: AxisLengths, n: int, seed: int = 0) -> np.ndarray:
    """Rejection-sample the axis-aligned kernel k * (1 - q) on its ellipsoid."""
    rng = np.random.default_rng(seed)
    out = []
    got = 0
    while got < n:
        batch = max(4 * (n - got), 1024)
        pts = sample_in_ellipsoid(axes, batch, rng)
        q = np.sum((pts / axes.as_array()) ** 2, axis=1)
        keep = rng.uniform(size=batch) < (1.0 - q)
        pts = pts[keep]
        out.append(pts)
        got += pts.shape[0]
    return np.concatenate(out)[:n]


def mc_basic_kernel_moments(axes: AxisLengths, n: int = 400_000, seed: int = 0):
    """Sample mean and covariance of the axis-aligned kernel.

    The expected values are zero mean and diag(a^2, b^2, c^2, d^2) / 8.
    """
    s = sample_basic_kernel(axes, n, seed)
    return s.mean(axis=0), np.cov(s.T)


def basic_kernel_cov_closed_form(axes: AxisLengths) -> np.ndarray:
    return np.diag(axes.as_array() ** 2 / 8.0)
