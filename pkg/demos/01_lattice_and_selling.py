"""Lattice tools: Stern-Brocot navigation and Selling's reduction.

Run: python3 demos/01_lattice_and_selling.py
"""

import math

from malbr.lattice import SymMatrix2, ancestors, children, decompose, selling_iterates, stencil_with_points

# Every primitive off-axis vector splits uniquely as e = f + g with det(f, g) = 1
# and <f, g> >= 0.  The two pieces are the endpoints of the tree edges above e.
e = (7, 5)
f, g = decompose(e)
print(f"{e} = {f} + {g}")
print(f"children of {e}: {children(e)}")
print(f"ancestors of {e}: {ancestors(e)}")

# Selling's reduction walks from the canonical superbase to an M-obtuse one,
# decreasing the energy sum <e_i, M e_i> at every step.
M = SymMatrix2.from_kappa_theta(10, math.pi / 3)
print(f"\nM(10, pi/3) = {M}")
for k, sb in enumerate(selling_iterates(M)):
    print(f"  step {k}: {tuple(sb)}  energy {sb.energy(M):.4f}  obtuse {sb.is_obtuse(M)}")

for count in (8, 16, 24, 48):
    V = stencil_with_points(count)
    print(f"{count}-point stencil, longest vector norm^2 {max(v.norm2() for v in V)}")
