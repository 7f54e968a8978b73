"""Solve the two-row toy instance with every cut strategy."""

from deepbenders import bd_solve, micro_instance

inst = micro_instance()
for strategy in ("cb", "mis", "rl1", "mwp", "cw", "l1", "l2", "l4", "linf"):
    rep = bd_solve(inst, strategy)
    print(f"{strategy:5s} {rep.status:8s} objective={rep.objective:.4f} "
          f"iterations={rep.iterations} cuts={rep.optimality_cuts}+{rep.feasibility_cuts}")
