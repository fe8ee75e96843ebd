"""Rate-distortion selection of the per-block expert count.

Sweeps every candidate count for one luma block at several lambda values
and prints the distortion, exact bit charge, and objective per candidate,
with the winner marked.
"""

import numpy as np
from scipy.ndimage import gaussian_filter

from emr4d import RdoConfig, select_model_count
from emr4d.eia import build_pvs_blocks

rng = np.random.default_rng(11)
base = gaussian_filter(rng.uniform(0, 255, (30, 30)), 1.5)
base = (base - base.min()) / np.ptp(base) * 220 + 20
tiles = [base[t:t + 19, t:t + 19].astype(np.uint8) for t in range(4)]
block = build_pvs_blocks(tiles, [(0, i) for i in range(4)], 19, 4)[0]

for lam in (75.0, 300.0, 1000.0):
    res = select_model_count(block, RdoConfig(lam, "y"), seed=0)
    print(f"\n== lambda = {lam:.0f} -> chosen k = {res.chosen_k} ==")
    print("   k        D      R(bits)          J")
    for i, (d, r, j) in enumerate(zip(res.distortion, res.bits, res.j_values)):
        mark = " <-- min J" if i + 1 == res.chosen_k else ""
        print(f"  {i + 1:2d} {d:10.1f} {r:8.0f} {j:12.1f}{mark}")
