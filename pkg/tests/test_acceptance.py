"""Acceptance criteria, one test each, at the stated tolerances.

Every test appends a ``PASS``/``FAIL`` line to the terminal summary (section
"acceptance criteria") before asserting.
"""

import itertools
import math
import time

import numpy as np
import pytest

import conftest
from conftest import ExtendedOracle, lattice_field, random_spd
from malbr.grid import Box, Disk, StencilConfig, build_stencil_family, discretize
from malbr.harness import consistency_map, convergence_order, make_case, RunConfig, run_convergence
from malbr.lattice import (
    V8,
    ancestors,
    children,
    decompose,
    det,
    dot,
    parent,
    polygon_area_oracle,
    selling_iterates,
    stencil_ball,
    stencil_with_points,
    INITIAL_SUPERBASE,
)
from malbr.schemes import FD, WS, LBRAdaptive, LBRExtensive, det_ld, h_values, quadratic_value
from malbr.solver import damped_newton


def record(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  criterion {number:>2}: {title} ({detail})"
    conftest.ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def family(grid, boundary=48, layer=4):
    return build_stencil_family(grid, StencilConfig(V8, stencil_with_points(boundary), layer))


# ---------------------------------------------------------------------------


def test_criterion_01_quadratic_exact_recovery():
    case = make_case("quadratic")
    start = time.perf_counter()
    g = discretize(Box(), 64)
    scheme = LBRAdaptive(family(g))
    rho = g.scale_h**4 * case.rho(g.physical())
    field, rep = damped_newton(g, scheme, rho, case.sigma)
    elapsed = time.perf_counter() - start
    U = case.U(g.physical())
    rel = float(np.max(np.abs(field.values - U)) / np.max(np.abs(U)))
    ok = rep.converged and rel <= 1e-8 and elapsed <= 10.0
    record(1, "quadratic exact recovery", ok,
           f"relative Linf error {rel:.2e} <= 1e-8, {rep.iterations} iterations, {elapsed:.1f} s <= 10 s")


def test_criterion_02_consistency_on_large_balls():
    rng = np.random.default_rng(2)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        M = random_spd(rng, max_cond=100.0)
        kappa = math.sqrt(M.condition())
        val = quadratic_value("lbr", M, stencil_ball(2 * kappa))
        worst = max(worst, abs(float((val - det_ld(M)) / det_ld(M))))
    elapsed = time.perf_counter() - start
    record(2, "consistency over stencil_ball(2 kappa)", worst <= 1e-12 and elapsed <= 5.0,
           f"worst relative error {worst:.1e} <= 1e-12, {elapsed:.1f} s <= 5 s")


def test_criterion_03_overestimation():
    rng = np.random.default_rng(3)
    stencils = [V8] + [stencil_with_points(k) for k in (16, 24, 48)] + [stencil_ball(r) for r in (2.0, 3.7, 6.5)]
    worst = math.inf
    for _ in range(300):
        M = random_spd(rng, max_cond=400.0)
        d = det_ld(M)
        for V in stencils:
            for kind in ("lbr", "ws"):
                val = quadratic_value(kind, M, V)
                worst = min(worst, float((val - d) / val))
    record(3, "LBR and WS overestimate det M", worst >= -1e-14,
           f"smallest relative error {worst:.1e} >= -1e-14 over 300 matrices x 7 stencils")


def test_criterion_04_selling():
    rng = np.random.default_rng(4)
    failures = 0
    for _ in range(1000):
        M = random_spd(rng, max_cond=1e4)
        trace = list(selling_iterates(M))
        sb = trace[-1]
        energies = [s.energy(M) for s in trace]
        bound = 2 * M.condition()
        ok = (sb.is_obtuse(M)
              and all(e.norm2() <= bound * (1 + 1e-12) for e in sb)
              and all(b < a for a, b in zip(energies, energies[1:])))
        failures += not ok
    record(4, "Selling reduction", failures == 0,
           f"{failures} of 1000 matrices violate obtuseness, the norm bound or energy decrease")


@pytest.fixture(scope="module")
def oracle_grids():
    grids = []
    for dom, n, boundary, layer in ((Box(), 12, 48, 3), (Box(), 16, 24, 4),
                                    (Disk((0.5, 0.5), 0.47), 14, 48, 3), (Disk((0.45, 0.5), 0.44), 16, 24, 2)):
        g = discretize(dom, n)
        fam = family(g, boundary, layer)
        grids.append((g, fam, LBRAdaptive(fam), ExtendedOracle(g, fam)))
    return grids


def convex_field(rng, g):
    """Random discretely convex field: an anisotropic quadratic bowl, a smooth
    convex term and a small perturbation."""
    M = random_spd(rng, max_cond=50.0, scale=False)
    A = M.array()
    c = rng.uniform(0, g.n, size=2)
    w = rng.normal(size=2) * 0.2
    lam = M.eigenvalues()[0]

    def W(P):
        Q = P - c
        return (0.5 * np.einsum("ij,jk,ik->i", Q, A, Q) + 0.5 * np.exp(Q @ w / g.n)
                + 0.05 * lam * np.sin(1.7 * P[:, 0] + 0.3 * P[:, 1]))

    return lattice_field(g, W)


def test_criterion_05_adaptive_equals_extensive(oracle_grids):
    rng = np.random.default_rng(5)
    convex = mismatches = below = 0
    while convex < 200:
        g, fam, scheme, oracle = oracle_grids[convex % len(oracle_grids)]
        f = convex_field(rng, g)
        if not oracle.all_positive(f):
            continue
        convex += 1
        adaptive = scheme.evaluate(f)
        mismatches += int(np.sum(adaptive != oracle.values(f)))
    for t in range(200):
        g, fam, scheme, oracle = oracle_grids[t % len(oracle_grids)]
        amp = rng.choice([0.1, 1.0, 10.0])
        W = lambda P: 0.5 * np.sum(P**2, axis=1) + amp * rng.normal(size=len(P))  # noqa: E731
        f = lattice_field(g, W)
        below += int(np.sum(scheme.evaluate(f) < oracle.values(f)))
    record(5, "adaptive operator equals the extended extensive sweep", mismatches == 0 and below == 0,
           f"{mismatches} unequal values on 200 convex fields, {below} values below on 200 random fields")


def test_criterion_06_discrete_convexity_equivalence():
    rng = np.random.default_rng(6)
    setups = []
    for dom in (Box(), Disk((0.5, 0.5), 0.46)):
        g = discretize(dom, 10)
        fam = family(g, 24, 2)
        setups.append((g, fam, LBRExtensive(fam)))
    violations = positives = negatives = 0
    for t in range(500):
        g, fam, scheme = setups[t % 2]
        amp = rng.uniform(0, 0.6)
        f = lattice_field(g, lambda P: 0.5 * np.sum(P**2, axis=1) + amp * rng.normal(size=len(P)))
        allpos = np.ones(len(g), dtype=bool)
        for e in fam.directions:
            idx = np.nonzero(fam.membership(e))[0]
            allpos[idx] &= f.diff(e, idx) > 0
        sign = scheme.evaluate(f) > 0
        violations += int(np.sum(sign != allpos))
        positives += int(np.sum(sign))
        negatives += int(np.sum(~sign))
    ok = violations == 0 and positives > 0 and negatives > 0
    record(6, "positivity iff all second differences positive", ok,
           f"{violations} mismatches over 500 fields ({positives} positive, {negatives} nonpositive points)")


def test_criterion_07_h_oracle():
    rng = np.random.default_rng(7)
    delta = rng.uniform(0, 10, size=(1000, 3))
    delta[:200] = rng.integers(0, 6, size=(200, 3))  # ties and degenerate triangles
    areas = np.array([polygon_area_oracle(d, INITIAL_SUPERBASE) for d in delta])
    err = float(np.max(np.abs(areas / 4 - h_values(*delta.T))))
    record(7, "polygon area equals 4 h", err <= 1e-9, f"max error {err:.1e} <= 1e-9 on 1000 inputs")


def in_triangle(p, A, B, C):
    s = [det((B[0] - A[0], B[1] - A[1]), (p[0] - A[0], p[1] - A[1])),
         det((C[0] - B[0], C[1] - B[1]), (p[0] - B[0], p[1] - B[1])),
         det((A[0] - C[0], A[1] - C[1]), (p[0] - C[0], p[1] - C[1]))]
    return all(v >= 0 for v in s) or all(v <= 0 for v in s)


def test_criterion_08_stern_brocot():
    bad = []
    R = 12
    F = np.array(list(itertools.product(range(-2 * R, 2 * R + 1), repeat=2)))
    for a, b in itertools.product(range(-R, R + 1), repeat=2):
        if a == 0 or b == 0 or math.gcd(a, b) != 1:
            continue
        e = (a, b)
        f, g = decompose(e)
        if not (f + g == e and det(f, g) == 1 and dot(f, g) >= 0):
            bad.append(("decompose", e))
        if f + e not in children(e)[:1] or e + g not in children(e)[1:]:
            bad.append(("children", e))
        for c in children(e):
            if parent(c) != e:
                bad.append(("parent of child", e))
        p = parent(e)
        if p is not None and e not in children(p):
            bad.append(("child of parent", e))
        G = np.array(e) - F
        sols = (F[:, 0] * G[:, 1] - F[:, 1] * G[:, 0] == 1) & (np.einsum("ij,ij->i", F, G) >= 0)
        if [tuple(v) for v in F[sols]] != [tuple(f)]:
            bad.append(("uniqueness", e))
    triangles = 0
    for a, b in itertools.product(range(-50, 51), repeat=2):
        if a == 0 or b == 0 or math.gcd(a, b) != 1:
            continue
        A, B = (int(np.sign(a)), 0), (0, int(np.sign(b)))
        for p in list(decompose((a, b))) + ancestors((a, b)):
            triangles += 1
            if not in_triangle(p, A, B, (a, b)):
                bad.append(("triangle", (a, b)))
    record(8, "Stern-Brocot arithmetic", not bad,
           f"{len(bad)} failures; roundtrips and uniqueness for |e| <= 12, {triangles} triangle checks for |e| <= 50")


def test_criterion_09_convergence():
    start = time.perf_counter()
    sizes = [17, 33, 65, 129]
    cone = run_convergence(RunConfig(case="smoothed_cone", scheme="lbr", sizes=sizes))
    errors = [r.error_linf for r in cone]
    order = convergence_order(sizes, errors)
    singular = run_convergence(RunConfig(case="singular", scheme="lbr", sizes=sizes))
    iters = [r.newton_iters for r in singular]
    elapsed = time.perf_counter() - start
    ok = (all(r.status == "converged" for r in cone + singular)
          and all(b < a for a, b in zip(errors, errors[1:]))
          and order >= 1.0 and max(iters) <= 8 and elapsed <= 300)
    record(9, "convergence", ok,
           f"cone Linf {', '.join(f'{e:.2e}' for e in errors)}, order {order:.2f} >= 1; "
           f"singular iterations {iters} <= 8; {elapsed:.0f} s <= 300 s")


def test_criterion_10_fd_consistency():
    cmap = consistency_map("fd", None, np.linspace(1, 12, 50), np.linspace(0, math.pi, 50))
    worst = float(np.max(np.abs(cmap.errors)))
    record(10, "finite differences consistent everywhere", worst <= 1e-13,
           f"max |error| {worst:.1e} <= 1e-13 on a 50 x 50 grid")


def test_criterion_11_jacobian():
    """Derivative rows against central differences of the point operator, at
    points where the active stencil elements do not change under the
    perturbations (smooth regime)."""
    tau = 1e-6
    g = discretize(Disk((0.5, 0.5), 0.47), 20)
    fam = family(g, 48, 3)
    M = np.array([[1.0, 0.4], [0.4, 3.0]])

    def W(P):
        return 0.5 * np.einsum("ij,jk,ik->i", P - 10, M, P - 10) + np.cos(0.3 * P[:, 0]) + 0.2 * np.exp(0.1 * P[:, 1])

    f = lattice_field(g, W)
    rng = np.random.default_rng(11)
    summary = []
    all_ok = True
    for scheme in (FD(), WS(stencil_with_points(16)), LBRExtensive(fam), LBRAdaptive(fam)):
        checked, worst = 0, 0.0
        for i in rng.permutation(len(g)):
            ev = scheme.point(f, i)
            row = {j: d for j, d in ev.derivative.items() if j >= 0}
            scale = max(abs(d) for d in row.values())
            smooth, errs = True, []
            for j, d in row.items():
                v = f.values.copy()
                v[j] += tau
                up = scheme.point(f.with_values(v), i)
                v[j] -= 2 * tau
                dn = scheme.point(f.with_values(v), i)
                if set(up.active) != set(ev.active) or set(dn.active) != set(ev.active):
                    smooth = False
                    break
                errs.append(abs((up.value - dn.value) / (2 * tau) - d) / scale)
            if not smooth:
                continue
            worst = max(worst, max(errs))
            checked += 1
            if checked == 100:
                break
        ok = checked == 100 and worst <= 1e-6
        all_ok &= ok
        summary.append(f"{type(scheme).__name__} {worst:.1e} on {checked}")
    record(11, "Jacobian rows match central differences", all_ok,
           "worst relative error <= 1e-6: " + "; ".join(summary))
