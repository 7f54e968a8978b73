"""Depth of the cut each separator produces at one master point.

The classical cut is measured by its epigraph gap, the rest by their own
norm, so the numbers should come out in non-increasing order.
"""

import numpy as np

from deepbenders import (CflpOracle, DistanceStrategy, MasterPoint, build_nsp, core_point,
                         compute_scaling_beta, generate_cst, repair_core_point, separate_cb,
                         to_problem_data)

cf = generate_cst(8, 12, 5.0, 0)
inst = to_problem_data(cf)
oracle = CflpOracle(cf, inst)
core = repair_core_point(core_point(cf), oracle)
scaling = compute_scaling_beta(inst, core, oracle)

rng = np.random.default_rng(1)
y = rng.random(cf.n)
while not oracle.solve(y).bounded:
    y = 0.5 * (y + 1.0)
gamma = 0.5 * oracle.solve(y).value / scaling.beta
pt = MasterPoint(y, gamma, scaling.beta)

print(f"beta = {scaling.beta:.3f}")
print(f"cb    {separate_cb(pt, inst, scaling).depth:.6f}")
for v in ("linf", "l4", "l2", "l1", "rl1"):
    sep = build_nsp(DistanceStrategy(v, core_point=core), inst, scaling, oracle=oracle)
    print(f"{v:5s} {sep.separate(pt).depth:.6f}")
