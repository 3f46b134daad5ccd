"""Convergence of the adaptive scheme under grid refinement.

Run: python3 demos/05_convergence.py   (about half a minute)
"""

from malbr.harness import RunConfig, convergence_order, run_convergence

sizes = [17, 33, 65, 129]
for case in ("smoothed_cone", "singular", "flat"):
    rows = run_convergence(RunConfig(case=case, scheme="lbr", sizes=sizes))
    errs = [r.error_linf for r in rows]
    print(case)
    for r in rows:
        print(f"  n={r.n:>4}  Linf {r.error_linf:.3e}  L2 {r.error_l2:.3e}  iterations {r.newton_iters}")
    print(f"  estimated order {convergence_order(sizes, errs):.2f}")
