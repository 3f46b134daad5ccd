"""Solve the four synthetic test cases with each scheme at n = 33.

Run: python3 demos/04_solve_cases.py
"""

from malbr.harness import CASES, SCHEMES, solve_case

print(f"{'case':>14} {'scheme':>14} {'Linf error':>11} {'iters':>5} {'seconds':>8}  status")
for case in CASES:
    for scheme in SCHEMES:
        r = solve_case(case, scheme, 33)
        print(f"{case:>14} {scheme:>14} {r.error_linf:>11.3e} {r.newton_iters:>5} {r.wall_seconds:>8.2f}  {r.status}")
