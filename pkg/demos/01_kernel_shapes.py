"""Shapes of the 4-D Epanechnikov kernel and its derived quantities.

Walks through the closed forms: the density at a few probe points, the
compact support boundary, the position marginal, the affine conditional
mean, and two Monte-Carlo sanity checks on the normalization constants.
"""

import numpy as np

from emr4d import AxisLengths, ExpertParams, conditional_mean, ek3d_marginal, ek4d_density
from emr4d.kernels import (
    mc_basic_kernel_moments,
    mc_support_integral,
    support_integral_closed_form,
)

p = ExpertParams(alpha=1.0, mu=np.zeros(4), sigma=np.eye(4))

print("== density along one axis (unit covariance) ==")
for x in (0.0, 1.0, 2.0, np.sqrt(8.0), 3.0):
    phi = np.array([x, 0.0, 0.0, 0.0])
    print(f"  phi=({x:5.3f},0,0,0)  f={ek4d_density(phi, p):.6f}")
print("  support ends at |phi| = sqrt(8) ~= 2.828")

print("\n== position marginal ==")
for x in (0.0, 1.5, 2.8, 3.0):
    print(f"  delta=({x:4.1f},0,0)  F={ek3d_marginal(np.array([x, 0, 0.]), p):.6f}")

print("\n== conditional mean is affine in position ==")
sigma = np.eye(4)
sigma[0, 3] = sigma[3, 0] = 0.6
tilted = ExpertParams(1.0, np.array([0, 0, 0, 128.0]), sigma)
for x in (-2.0, 0.0, 2.0, 10.0):
    m = conditional_mean(np.array([x, 0, 0.0]), tilted)
    print(f"  delta=({x:5.1f},0,0)  E[w|delta]={m:8.3f}")

print("\n== normalization checks ==")
ax = AxisLengths(1, 1, 1, 1)
est, se = mc_support_integral(ax, n=400_000, seed=0)
print(f"  integral over unit ellipsoid: {est:.4f} +- {3*se:.4f}"
      f"  (closed form {support_integral_closed_form(ax):.4f})")
mean, cov = mc_basic_kernel_moments(AxisLengths(2, 1, 1, 3), n=200_000, seed=1)
print(f"  sampled covariance diagonal: {np.round(np.diag(cov), 4)}")
print(f"  closed form a^2/8 etc.:      {np.round(np.array([4, 1, 1, 9]) / 8, 4)}")
