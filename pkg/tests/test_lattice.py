import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_spd
from malbr.errors import (
    EmptyStencil,
    InvalidStencil,
    InvalidVector,
    NoDecomposition,
    NotPositiveDefinite,
)
from malbr.lattice import (
    INITIAL_SUPERBASE,
    STENCIL_RADII,
    V8,
    LatticeVector,
    Stencil,
    Superbase,
    SymMatrix2,
    ancestors,
    canonical_superbase,
    children,
    decompose,
    det,
    dot,
    enumerate_superbases,
    gcd_vec,
    parent,
    polygon_area_oracle,
    selling_iterates,
    selling_reduce,
    stencil_ball,
    stencil_with_points,
)


def brute_force_classes(V):
    """Unordered triples of V summing to zero with unit determinant."""
    vs = list(V)
    out = set()
    for a, b in itertools.combinations(vs, 2):
        c = LatticeVector(-a[0] - b[0], -a[1] - b[1])
        if c in V and c != a and c != b and abs(det(a, b)) == 1:
            out.add(frozenset((a, b, c)))
    return out


# --- vectors -----------------------------------------------------------------


def test_gcd_examples():
    assert gcd_vec((7, 5)) == 1
    assert gcd_vec((4, 6)) == 2
    assert gcd_vec((0, 3)) == 3
    assert gcd_vec((-4, 0)) == 4
    with pytest.raises(InvalidVector):
        gcd_vec((0, 0))


def test_vector_arithmetic_is_exact_and_tuple_compatible():
    e = LatticeVector(7, 5)
    assert e + (1, 2) == (8, 7)
    assert -e == (-7, -5)
    assert e - LatticeVector(3, 2) == (4, 3)
    assert 3 * e == (21, 15)
    assert e.perp() == (-5, 7)
    assert hash(e) == hash((7, 5))


def test_vector_overflow_is_an_error():
    big = LatticeVector(2**63 - 1, 0)
    with pytest.raises(OverflowError):
        big + (1, 0)
    with pytest.raises(OverflowError):
        LatticeVector(-(2**63), 0)


# --- decomposition and tree --------------------------------------------------


@pytest.mark.parametrize(
    "e, f, g",
    [((7, 5), (3, 2), (4, 3)), ((1, 1), (1, 0), (0, 1)), ((3, 2), (2, 1), (1, 1))],
)
def test_decompose_worked_examples(e, f, g):
    assert decompose(e) == (f, g)


@pytest.mark.parametrize("e", [(1, 0), (0, -3), (2, 4), (6, -9)])
def test_decompose_rejects_axis_and_imprimitive(e):
    with pytest.raises(NoDecomposition):
        decompose(e)


def test_children_examples():
    assert children((1, 1)) == ((2, 1), (1, 2))
    assert children((3, 2)) == ((5, 3), (4, 3))
    assert (7, 5) in children((4, 3))
    with pytest.raises(NoDecomposition):
        children((0, 1))


def test_parent_examples():
    assert parent((7, 5)) == (4, 3)
    assert parent((1, 1)) is None
    assert parent((1, 0)) is None
    assert parent((2, 1)) == (1, 1)
    with pytest.raises(InvalidVector):
        parent((2, 2))
    assert ancestors((7, 5)) == [(4, 3), (3, 2), (2, 1), (1, 1)]


coprime_off_axis = st.tuples(st.integers(-50, 50), st.integers(-50, 50)).filter(
    lambda e: e[0] != 0 and e[1] != 0 and math.gcd(*e) == 1
)


@given(coprime_off_axis)
def test_decompose_roundtrip_property(e):
    f, g = decompose(e)
    assert f + g == e
    assert det(f, g) == 1
    assert dot(f, g) >= 0
    # same closed quadrant as e
    for v in (f, g):
        assert v[0] * e[0] >= 0 and v[1] * e[1] >= 0


@given(coprime_off_axis.filter(lambda e: e[0] ** 2 + e[1] ** 2 > 2))
def test_tree_structure_property(e):
    p = parent(e)
    assert p in decompose(e)
    assert e in children(p)


@given(st.tuples(st.integers(1, 50), st.integers(1, 50)).filter(lambda e: math.gcd(*e) == 1 and e != (1, 1)))
def test_parents_lie_in_triangle(e):
    A, B, C = (1, 0), (0, 1), e
    for p in decompose(e):
        signs = [det((B[0] - A[0], B[1] - A[1]), (p[0] - A[0], p[1] - A[1])),
                 det((C[0] - B[0], C[1] - B[1]), (p[0] - B[0], p[1] - B[1])),
                 det((A[0] - C[0], A[1] - C[1]), (p[0] - C[0], p[1] - C[1]))]
        assert all(s >= 0 for s in signs) or all(s <= 0 for s in signs)


def test_decomposition_unique_by_brute_force():
    R = 12
    F = np.array(list(itertools.product(range(-2 * R, 2 * R + 1), repeat=2)))
    for a, b in itertools.product(range(-R, R + 1), repeat=2):
        if a == 0 or b == 0 or math.gcd(a, b) != 1:
            continue
        G = np.array([a, b]) - F
        ok = (F[:, 0] * G[:, 1] - F[:, 1] * G[:, 0] == 1) & (np.einsum("ij,ij->i", F, G) >= 0)
        sols = [tuple(f) for f in F[ok]]
        assert sols == [tuple(decompose((a, b))[0])]


# --- superbases and Selling -------------------------------------------------


def test_superbase_validation():
    Superbase((1, 0), (0, 1), (-1, -1))
    with pytest.raises(InvalidVector):
        Superbase((1, 0), (0, 1), (1, 1))
    with pytest.raises(InvalidVector):
        Superbase((2, 0), (0, 1), (-2, -1))


def test_canonical_superbase_is_permutation_invariant():
    sb = Superbase((2, 3), (-1, -1), (-1, -2))
    reps = {canonical_superbase(p) for p in itertools.permutations(sb)}
    assert len(reps) == 1
    c = reps.pop()
    assert c[0] == max(sb) and det(c[1], c[2]) == 1


@pytest.mark.parametrize("M", [SymMatrix2(1, 0, 1), SymMatrix2(1, 0, 100)])
def test_selling_diagonal_is_immediate(M):
    sb, it = selling_reduce(M)
    assert it == 0 and sb == INITIAL_SUPERBASE


def test_selling_anisotropic_example():
    M = SymMatrix2.from_kappa_theta(10, math.pi / 3)
    sb, it = selling_reduce(M)
    target = {(2, 3), (-1, -1), (-1, -2)}
    assert set(sb) == target or {(-a, -b) for a, b in sb} == target
    assert sb.is_obtuse(M)


def test_selling_rejects_indefinite():
    with pytest.raises(NotPositiveDefinite):
        selling_reduce(SymMatrix2(1, 2, 1))


@given(st.floats(1.0, 100.0), st.floats(0.0, math.pi), st.floats(0.01, 100.0))
def test_selling_property(kappa, theta, s):
    M0 = SymMatrix2.from_kappa_theta(kappa, theta)
    M = SymMatrix2(M0.m11 * s, M0.m12 * s, M0.m22 * s)
    trace = list(selling_iterates(M))
    energies = [t.energy(M) for t in trace]
    assert all(b < a for a, b in zip(energies, energies[1:]))
    assert trace[-1].is_obtuse(M)
    bound = 2 * M.condition()
    assert all(e.norm2() <= bound * (1 + 1e-12) for e in trace[-1])


# --- stencils ----------------------------------------------------------------


def test_stencil_ball_examples():
    assert set(stencil_ball(1.5)) == set(V8)
    assert len(V8) == 8
    extra = set(stencil_ball(2.3)) - set(V8)
    assert extra == {(2, 1), (-2, -1), (1, 2), (-1, -2), (2, -1), (-2, 1), (1, -2), (-1, 2)}
    with pytest.raises(EmptyStencil):
        stencil_ball(0.5)


def test_named_stencil_sizes():
    for count in STENCIL_RADII:
        assert len(stencil_with_points(count)) == count


def test_stencil_invariants():
    V = stencil_ball(3.7)
    assert list(V) == sorted(V)
    assert all(-e in V for e in V)
    with pytest.raises(InvalidStencil):
        Stencil([(1, 0)])
    with pytest.raises(InvalidStencil):
        Stencil([(2, 0), (-2, 0)])
    assert set(Stencil([(2, 4)], normalize=True)) == {(1, 2), (-1, -2)}


def test_enumerate_superbases_examples():
    assert len(enumerate_superbases(V8)) == 4
    assert len(enumerate_superbases(stencil_ball(2.3))) == 12
    assert enumerate_superbases(Stencil([(1, 0), (-1, 0)])) == []
    keys = {sb.key() for sb in enumerate_superbases(V8)}
    assert frozenset({(1, 1), (-1, 0), (0, -1)}) in keys
    assert frozenset({(-1, 1), (1, 0), (0, -1)}) in keys


@pytest.mark.parametrize("r", [1.5, 2.3, 3.2, 4.0, 5.0, 6.0])
def test_enumerate_superbases_matches_brute_force(r):
    V = stencil_ball(r)
    found = [sb.key() for sb in enumerate_superbases(V)]
    assert len(found) == len(set(found))
    assert set(found) == brute_force_classes(V)


# --- area oracle -------------------------------------------------------------


def test_polygon_area_examples():
    sb = INITIAL_SUPERBASE
    assert polygon_area_oracle((2, 1, 1), sb) == 4.0
    assert polygon_area_oracle((0, 0, 0), sb) == 0.0
    assert polygon_area_oracle((5, 1, 2), sb) == 8.0
    assert polygon_area_oracle((1, 1, 1), sb) == 3.0
