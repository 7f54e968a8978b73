"""Classical cuts against deepest cuts from guided projections on one CFLP.

Usage: python demos/cflp_gpa.py [n k r seed]
"""

import sys
import time

from deepbenders import BdConfig, CflpOracle, bd_solve, core_point, generate_cst, to_problem_data

n, k, r, seed = (int(sys.argv[1]), int(sys.argv[2]), float(sys.argv[3]), int(sys.argv[4])) \
    if len(sys.argv) == 5 else (20, 40, 10.0, 0)
cf = generate_cst(n, k, r, seed)
inst = to_problem_data(cf)
print(f"{cf.name}: {n} facilities, {k} customers")
for strategy, mode, gap in (("cb", "direct", None), ("l1", "gpa", None), ("l2", "gpa", None),
                            ("linf", "gpa", None), ("l1", "gpa", 0.05)):
    t = time.perf_counter()
    rep = bd_solve(inst, strategy, mode, BdConfig(gamma_low=0.0, switch_gap=gap),
                   oracle=CflpOracle(cf, inst), core_point=core_point(cf))
    tag = f"{strategy}/{mode}" + ("/switch" if gap else "")
    print(f"{tag:16s} {rep.status:8s} obj={rep.objective:12.4f} iters={rep.iterations:3d} "
          f"cuts={rep.optimality_cuts:3d} time={time.perf_counter() - t:6.2f}s")
