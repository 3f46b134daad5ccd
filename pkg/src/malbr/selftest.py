"""A fast built-in invariant suite, run by ``malbr selftest``.

Each check uses an independent reference (brute force enumeration, polygon
clipping, exact quadratic solutions) and a reduced sample count so the whole
suite finishes in a few seconds.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .grid import Box, Disk, Field, StencilConfig, build_stencil_family, discretize, v_omega
from .lattice import (
    V8,
    Stencil,
    SymMatrix2,
    Superbase,
    children,
    decompose,
    det,
    dot,
    parent,
    polygon_area_oracle,
    selling_iterates,
    stencil_ball,
    stencil_with_points,
)
from .schemes import LBRAdaptive, LBRExtensive, h_func, relative_consistency_error
from .solver import damped_newton


def random_spd(rng, max_cond=100.0) -> SymMatrix2:
    kappa = math.sqrt(rng.uniform(1.0, max_cond))
    theta = rng.uniform(0.0, math.pi)
    scale = math.exp(rng.uniform(-2, 2))
    M = SymMatrix2.from_kappa_theta(kappa, theta)
    return SymMatrix2(M.m11 * scale, M.m12 * scale, M.m22 * scale)


def check_decomposition(bound=8):
    for a, b in itertools.product(range(-bound, bound + 1), repeat=2):
        if a == 0 or b == 0 or math.gcd(a, b) != 1:
            continue
        f, g = decompose((a, b))
        if f + g != (a, b) or det(f, g) != 1 or dot(f, g) < 0:
            return False, f"decompose({a}, {b}) = {f}, {g}"
        if a * a + b * b > 2 and (a, b) not in children(parent((a, b))):
            return False, f"({a}, {b}) is not a child of its parent"
    return True, ""


def check_selling(rng, count=200):
    for _ in range(count):
        M = random_spd(rng)
        trace = list(selling_iterates(M))
        energies = [sb.energy(M) for sb in trace]
        if any(e1 >= e0 for e0, e1 in zip(energies, energies[1:])):
            return False, "energy not strictly decreasing"
        sb = trace[-1]
        if not sb.is_obtuse(M):
            return False, "result not obtuse"
        bound = 2 * M.condition()
        if any(e.norm2() > bound * (1 + 1e-12) for e in sb):
            return False, "norm bound violated"
    return True, ""


def check_h_oracle(rng, count=200):
    for _ in range(count):
        delta = rng.uniform(0, 10, size=3)
        sb = Superbase((-1, -1), (1, 0), (0, 1))
        area = polygon_area_oracle(delta, sb)
        if abs(area / 4 - h_func(*delta)) > 1e-9:
            return False, f"h{tuple(delta)} disagrees with the polygon area"
    return True, ""


def check_consistency(rng, count=100):
    for _ in range(count):
        M = random_spd(rng)
        kappa = math.sqrt(M.condition())
        err = relative_consistency_error("lbr", M, stencil_ball(2 * kappa))
        if abs(err) > 1e-12:
            return False, f"relative error {err:.3e}"
        if relative_consistency_error("ws", M, V8) < -1e-14:
            return False, "wide stencil underestimates det M"
    return True, ""


def check_fd_map():
    for kappa in np.linspace(1, 12, 12):
        for theta in np.linspace(0, math.pi, 12):
            if abs(relative_consistency_error("fd", SymMatrix2.from_kappa_theta(kappa, theta))) > 1e-13:
                return False, f"nonzero at kappa={kappa}, theta={theta}"
    return True, ""


def check_adaptive(rng):
    for dom in (Box(), Disk((0.5, 0.5), 0.46)):
        grid = discretize(dom, 10)
        fam = build_stencil_family(grid, StencilConfig(V8, stencil_with_points(16), 2))
        A = rng.normal(size=(2, 2))
        M = A @ A.T + 0.1 * np.eye(2)
        field = Field.from_function(grid, lambda P: 0.5 * np.einsum("ij,jk,ik->i", P, M, P) + np.exp(P[:, 0]))
        vals = LBRAdaptive(fam).evaluate(field)
        for i in range(len(grid)):
            Vbar = Stencil(set(fam.stencil_at(i)) | v_omega(grid, grid.points[i]))
            if vals[i] != LBRExtensive(Vbar).point(field, i).value:
                return False, f"mismatch at {tuple(grid.points[i])}"
    return True, ""


def check_quadratic_solve():
    M = SymMatrix2.from_kappa_theta(10, math.pi / 3)
    U = lambda P: 0.5 * np.einsum("ij,jk,ik->i", P, M.array(), P)  # noqa: E731
    grid = discretize(Box(), 16)
    fam = build_stencil_family(grid, StencilConfig(V8, stencil_with_points(48), 4))
    field, rep = damped_newton(grid, LBRAdaptive(fam), np.full(len(grid), grid.scale_h**4), U)
    exact = U(grid.physical())
    err = np.max(np.abs(field.values - exact)) / np.max(np.abs(exact))
    if not rep.converged or err > 1e-8:
        return False, f"relative error {err:.3e}"
    return True, ""


def run(seed: int = 0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    checks = [
        ("Stern-Brocot decomposition", lambda: check_decomposition()),
        ("Selling reduction", lambda: check_selling(rng)),
        ("h against polygon area", lambda: check_h_oracle(rng)),
        ("LBR consistency", lambda: check_consistency(rng)),
        ("FD consistency map", check_fd_map),
        ("adaptive equals extensive", lambda: check_adaptive(rng)),
        ("quadratic recovery", check_quadratic_solve),
    ]
    ok_all = True
    for name, fn in checks:
        ok, detail = fn()
        ok_all &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}{': ' + detail if detail else ''}")
    return ok_all
