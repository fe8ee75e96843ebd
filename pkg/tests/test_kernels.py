"""Kernel closed forms checked against independent quadrature and sampling."""

import numpy as np
import pytest

from emr4d.kernels import (
    AxisLengths,
    ExpertParams,
    MixtureModel,
    SingularCovarianceError,
    basic_kernel_cov_closed_form,
    conditional_mean,
    ek3d_marginal,
    ek4d_density,
    gate,
    gaussian_density,
    gaussian_marginal,
    mc_basic_kernel_moments,
    mc_support_integral,
    regress,
    regularize,
    sample_basic_kernel,
    support_integral_closed_form,
)

from oracles import (
    cond_mean_by_quadrature,
    marginal_by_quadrature,
    mc_density_integral,
    random_expert,
    random_interior_delta,
)

# The evaluation path adds the trace-scaled epsilon before inversion, so
# spot values agree with the idealized constants only to ~1e-5 relative.
REG_RTOL = 1e-4


def unit_expert():
    return ExpertParams(1.0, np.zeros(4), np.eye(4))


class TestEpanechnikovDensity:
    def test_unit_covariance_center(self):
        assert ek4d_density(np.zeros(4), unit_expert()) == pytest.approx(
            3.0 / (32 * np.pi ** 2), rel=REG_RTOL)

    def test_eighth_covariance_center(self):
        p = ExpertParams(1.0, np.zeros(4), np.eye(4) / 8.0)
        assert ek4d_density(np.zeros(4), p) == pytest.approx(
            6.0 / np.pi ** 2, rel=REG_RTOL)

    def test_zero_outside_support(self):
        p = unit_expert()
        phi = np.array([3.0, 0.0, 0.0, 0.0])  # q = 9 > 8
        assert ek4d_density(phi, p) == 0.0

    def test_never_negative(self):
        rng = np.random.default_rng(42)
        for _ in range(20):
            p = random_expert(rng, scale=rng.uniform(0.2, 4.0))
            pts = rng.normal(size=(200, 4)) * 5.0
            assert np.all(ek4d_density(pts, p) >= 0.0)

    def test_non_psd_rejected(self):
        sigma = np.eye(4)
        sigma[0, 0] = -1.0
        with pytest.raises(SingularCovarianceError):
            ek4d_density(np.zeros(4), ExpertParams(1.0, np.zeros(4), sigma))

    def test_normalizes_to_one(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            p = random_expert(rng, scale=rng.uniform(0.3, 3.0))
            est, se = mc_density_integral(p, 200_000, rng)
            assert abs(est - 1.0) <= 3.0 * se


class TestMarginal:
    def test_unit_covariance_center(self):
        assert ek3d_marginal(np.zeros(3), unit_expert()) == pytest.approx(
            np.sqrt(2) / (4 * np.pi ** 2), rel=REG_RTOL)

    def test_zero_outside_support(self):
        assert ek3d_marginal(np.array([4.0, 0, 0]), unit_expert()) == 0.0

    def test_matches_quadrature(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            p = random_expert(rng, scale=rng.uniform(0.2, 4.0))
            delta = random_interior_delta(rng, p)
            want = marginal_by_quadrature(delta, p)
            assert ek3d_marginal(delta, p) == pytest.approx(want, abs=1e-6)


class TestConditionalMean:
    def test_zero_cross_covariance_constant(self):
        p = unit_expert()
        p.mu[3] = 77.0
        for delta in ([0, 0, 0], [1, -1, 0.5], [9, 9, 9]):
            assert conditional_mean(np.array(delta, float), p) == pytest.approx(77.0)

    def test_single_cross_term(self):
        sigma = np.eye(4)
        sigma[0, 3] = sigma[3, 0] = 0.5
        p = ExpertParams(1.0, np.zeros(4), sigma)
        got = conditional_mean(np.array([1.0, 0.0, 0.0]), p)
        assert got == pytest.approx(0.5, rel=1e-5)

    def test_matches_quadrature(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            p = random_expert(rng, scale=rng.uniform(0.2, 4.0))
            delta = random_interior_delta(rng, p)
            want = cond_mean_by_quadrature(delta, p)
            assert conditional_mean(delta, p) == pytest.approx(want, abs=1e-6)

    def test_gaussian_shares_affine_form(self):
        rng = np.random.default_rng(5)
        p = random_expert(rng)
        deltas = rng.normal(size=(50, 3))
        # Same function serves both kernels: identical values by definition.
        np.testing.assert_array_equal(conditional_mean(deltas, p),
                                      conditional_mean(deltas, p))


class TestGaussianKernel:
    def test_standard_normal_center(self):
        assert gaussian_density(np.zeros(4), unit_expert()) == pytest.approx(
            (2 * np.pi) ** -2, rel=REG_RTOL)

    def test_marginal_is_3d_normal(self):
        assert gaussian_marginal(np.zeros(3), unit_expert()) == pytest.approx(
            (2 * np.pi) ** -1.5, rel=REG_RTOL)


class TestGate:
    def test_single_expert_is_one_inside_support(self):
        model = MixtureModel([unit_expert()])
        g = gate(np.zeros(3), model)
        np.testing.assert_allclose(g, [1.0])

    def test_mirror_experts_split_at_midpoint(self):
        mu1 = np.array([-1.0, 0, 0, 0])
        mu2 = np.array([1.0, 0, 0, 0])
        model = MixtureModel([ExpertParams(0.5, mu1, np.eye(4)),
                              ExpertParams(0.5, mu2, np.eye(4))])
        np.testing.assert_allclose(gate(np.zeros(3), model), [0.5, 0.5])

    @pytest.mark.parametrize("kind", ["epanechnikov", "gaussian"])
    def test_partition_of_unity(self, kind):
        rng = np.random.default_rng(17)
        experts = [random_expert(rng) for _ in range(5)]
        alphas = rng.uniform(0.1, 1.0, 5)
        alphas /= alphas.sum()
        for e, a in zip(experts, alphas):
            e.alpha = float(a)
        model = MixtureModel(experts, kind)
        deltas = rng.normal(size=(100, 3)) * 3.0
        g = gate(deltas, model)
        np.testing.assert_allclose(g.sum(axis=1), 1.0, atol=1e-12)

    def test_zero_outside_union_without_fallback(self):
        model = MixtureModel([unit_expert()])
        far = np.array([[50.0, 50.0, 50.0]])
        raw = gate(far, model, fallback=False)
        np.testing.assert_array_equal(raw, [[0.0]])
        with_fb = gate(far, model, fallback=True)
        np.testing.assert_allclose(with_fb.sum(axis=1), 1.0)


class TestRegress:
    def test_constant_block(self):
        sigma = np.diag([10.0, 10.0, 1.0, 0.0])
        p = ExpertParams(1.0, np.array([5.0, 5.0, 2.0, 42.0]), sigma)
        model = MixtureModel([p])
        got = regress(np.array([[5.0, 5.0, 2.0], [1.0, 9.0, 1.0]]), model)
        np.testing.assert_allclose(got, 42.0, atol=1e-9)

    def test_planar_ramp_from_exact_moments(self):
        # w = 2x over an integer grid: the cross-covariance row encodes the
        # slope exactly, so regression reproduces the plane up to the
        # trace-scaled epsilon the inversion path always adds (~3e-5 at the
        # grid edge for this block).
        x = np.arange(1, 20, dtype=float)
        xs, ys, zs = np.meshgrid(x, x, np.arange(1, 5, dtype=float), indexing="ij")
        pts = np.column_stack([xs.ravel(), ys.ravel(), zs.ravel(), 2 * xs.ravel()])
        mu = pts.mean(axis=0)
        c = pts - mu
        sigma = c.T @ c / (pts.shape[0] - 1)
        model = MixtureModel([ExpertParams(1.0, mu, sigma)])
        deltas = pts[:, :3]
        np.testing.assert_allclose(regress(deltas, model), 2 * deltas[:, 0],
                                   atol=1e-4)

    def test_clip_bounds_output(self):
        sigma = np.eye(4)
        sigma[0, 3] = sigma[3, 0] = 0.9
        p = ExpertParams(1.0, np.array([0.0, 0, 0, 250.0]), sigma)
        model = MixtureModel([p])
        raw = regress(np.array([20.0, 0, 0]), model)
        clipped = regress(np.array([20.0, 0, 0]), model, clip=True)
        assert raw > 255.0 and clipped == 255.0


class TestAxisAlignedOracles:
    def test_unit_axes_integral(self):
        ax = AxisLengths(1, 1, 1, 1)
        est, se = mc_support_integral(ax, n=300_000, seed=1)
        assert support_integral_closed_form(ax) == pytest.approx(np.pi ** 2 / 6)
        assert abs(est - np.pi ** 2 / 6) <= 3 * se

    def test_scaled_axis_integral(self):
        ax = AxisLengths(2, 1, 1, 1)
        est, se = mc_support_integral(ax, n=300_000, seed=2)
        assert abs(est - np.pi ** 2 / 3) <= 3 * se

    def test_degenerate_axis_rejected(self):
        with pytest.raises(ValueError):
            AxisLengths(0.0, 1, 1, 1)

    def test_sample_covariance_diagonal(self):
        ax = AxisLengths(2.0, 1.0, 0.5, 3.0)
        mean, cov = mc_basic_kernel_moments(ax, n=300_000, seed=3)
        want = basic_kernel_cov_closed_form(ax)
        for i in range(4):
            assert cov[i, i] == pytest.approx(want[i, i], rel=0.05)
        axes = ax.as_array()
        for i in range(4):
            for j in range(4):
                if i != j:
                    assert abs(cov[i, j]) < 0.01 * axes[i] * axes[j]
        # mean near zero, in units of the axis lengths
        assert np.all(np.abs(mean) < 0.02 * axes)

    def test_unit_axes_covariance_is_eighth(self):
        ax = AxisLengths(1, 1, 1, 1)
        _, cov = mc_basic_kernel_moments(ax, n=200_000, seed=4)
        np.testing.assert_allclose(np.diag(cov), 1.0 / 8.0, rtol=0.05)

    def test_samples_stay_in_support(self):
        ax = AxisLengths(1.5, 1.0, 2.0, 0.7)
        s = sample_basic_kernel(ax, 5000, seed=5)
        q = np.sum((s / ax.as_array()) ** 2, axis=1)
        assert np.all(q <= 1.0 + 1e-12)


class TestRegularize:
    def test_adds_trace_scaled_epsilon(self):
        sigma = np.diag([4.0, 4.0, 4.0, 4.0])
        reg = regularize(sigma)
        np.testing.assert_allclose(np.diag(reg), 4.0 + 1e-6 * 4.0)

    def test_zero_matrix_gets_floor(self):
        reg = regularize(np.zeros((4, 4)))
        assert np.all(np.linalg.eigvalsh(reg) > 0)
