"""Exact arithmetic on the integer lattice Z^2.

Superbases, Selling's obtuse reduction, the Stern-Brocot decomposition
``e = f (+) g`` and navigation in the associated graph, stencils, and an
independent polygon-clipping oracle for the area of the subgradient polygon.

Lattice vectors are small tuples of Python ints, so every computation here is
exact.  Floating point only enters through the quadratic forms of
:class:`SymMatrix2`.
"""

from __future__ import annotations

import math
from collections import namedtuple
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import (
    EmptyStencil,
    InvalidStencil,
    InvalidVector,
    NoDecomposition,
    NotPositiveDefinite,
    ReductionDiverged,
)

_INT64_MAX = 2**63 - 1


class LatticeVector(namedtuple("_LatticeVector", "a b")):
    """An element ``(a, b)`` of Z^2.

    Compares and hashes like the plain tuple ``(a, b)``, but ``+``, ``-`` and
    scalar ``*`` act componentwise.  Coordinates are restricted to the signed
    64-bit range; leaving it raises ``OverflowError``.
    """

    __slots__ = ()

    def __new__(cls, a, b):
        a, b = int(a), int(b)
        if abs(a) > _INT64_MAX or abs(b) > _INT64_MAX:
            raise OverflowError(f"lattice vector ({a}, {b}) leaves the int64 range")
        return super().__new__(cls, a, b)

    def __add__(self, other):
        return LatticeVector(self[0] + other[0], self[1] + other[1])

    __radd__ = __add__

    def __sub__(self, other):
        return LatticeVector(self[0] - other[0], self[1] - other[1])

    def __rsub__(self, other):
        return LatticeVector(other[0] - self[0], other[1] - self[1])

    def __neg__(self):
        return LatticeVector(-self[0], -self[1])

    def __mul__(self, k):
        if not isinstance(k, int):
            return NotImplemented
        return LatticeVector(k * self[0], k * self[1])

    __rmul__ = __mul__

    def perp(self) -> "LatticeVector":
        return LatticeVector(-self[1], self[0])

    def norm2(self) -> int:
        return self[0] * self[0] + self[1] * self[1]

    def __repr__(self):
        return f"({self[0]}, {self[1]})"


def vec(e) -> LatticeVector:
    return e if isinstance(e, LatticeVector) else LatticeVector(e[0], e[1])


def det(u, v) -> int:
    return u[0] * v[1] - u[1] * v[0]


def dot(u, v) -> int:
    return u[0] * v[0] + u[1] * v[1]


def norm2(e) -> int:
    return e[0] * e[0] + e[1] * e[1]


def gcd_vec(e) -> int:
    if e[0] == 0 and e[1] == 0:
        raise InvalidVector("gcd of the zero vector is undefined")
    return math.gcd(int(e[0]), int(e[1]))


def canonical(e) -> LatticeVector:
    """Representative of ``{e, -e}`` lying in the upper half plane."""
    e = vec(e)
    if e[1] > 0 or (e[1] == 0 and e[0] > 0):
        return e
    return -e


# ---------------------------------------------------------------------------
# Symmetric matrices


@dataclass(frozen=True)
class SymMatrix2:
    """Symmetric 2x2 matrix ``[[m11, m12], [m12, m22]]``."""

    m11: float
    m12: float
    m22: float

    @classmethod
    def from_array(cls, a) -> "SymMatrix2":
        a = np.asarray(a, dtype=float)
        return cls(float(a[0, 0]), float(0.5 * (a[0, 1] + a[1, 0])), float(a[1, 1]))

    @classmethod
    def from_kappa_theta(cls, kappa: float, theta: float) -> "SymMatrix2":
        """Matrix with eigenvalue ``1/kappa`` along ``(cos theta, sin theta)``
        and ``kappa`` along the orthogonal direction (condition number kappa^2,
        determinant 1)."""
        c, s = math.cos(theta), math.sin(theta)
        lo, hi = 1.0 / kappa, kappa
        return cls(lo * c * c + hi * s * s, (lo - hi) * c * s, lo * s * s + hi * c * c)

    def array(self) -> np.ndarray:
        return np.array([[self.m11, self.m12], [self.m12, self.m22]])

    def det(self) -> float:
        return self.m11 * self.m22 - self.m12 * self.m12

    def is_spd(self) -> bool:
        return self.m11 > 0 and self.det() > 0

    def quad(self, u, v=None) -> float:
        """``<u, M v>`` (``<u, M u>`` if ``v`` is omitted)."""
        if v is None:
            v = u
        return (self.m11 * u[0] * v[0] + self.m12 * (u[0] * v[1] + u[1] * v[0])
                + self.m22 * u[1] * v[1])

    def eigenvalues(self) -> tuple[float, float]:
        lo, hi = np.linalg.eigvalsh(self.array())
        return float(lo), float(hi)

    def condition(self) -> float:
        """``||M|| ||M^-1||`` for the spectral norm."""
        lo, hi = self.eigenvalues()
        return hi / lo


# ---------------------------------------------------------------------------
# Superbases


class Superbase(namedtuple("_Superbase", "e0 e1 e2")):
    """Triple of lattice vectors summing to zero, any two forming a basis."""

    __slots__ = ()

    def __new__(cls, e0, e1, e2):
        e0, e1, e2 = vec(e0), vec(e1), vec(e2)
        if e0 + e1 + e2 != (0, 0):
            raise InvalidVector(f"{e0}, {e1}, {e2} do not sum to zero")
        if abs(det(e1, e2)) != 1:
            raise InvalidVector(f"{e1}, {e2} is not a basis of Z^2")
        return super().__new__(cls, e0, e1, e2)

    def is_obtuse(self, M: SymMatrix2) -> bool:
        return all(M.quad(self[i], self[j]) <= 0 for i, j in _PAIRS)

    def energy(self, M: SymMatrix2) -> float:
        return sum(M.quad(e) for e in self)

    def key(self) -> frozenset:
        """Identifies the superbase up to a permutation of its elements."""
        return frozenset(self)


def canonical_superbase(sb) -> Superbase:
    """Representative of ``sb`` modulo permutation of its elements: the
    cyclic order with ``det(e1, e2) = +1`` starting at the lexicographically
    largest element."""
    es = [vec(e) for e in sb]
    if det(es[1], es[2]) < 0:
        es = [es[0], es[2], es[1]]
    k = max(range(3), key=lambda i: es[i])
    return Superbase(es[k], es[(k + 1) % 3], es[(k + 2) % 3])


_PAIRS = ((0, 1), (0, 2), (1, 2))
INITIAL_SUPERBASE = Superbase((-1, -1), (1, 0), (0, 1))


def _selling_cap(M: SymMatrix2) -> int:
    return int(64 * (1 + math.log2(max(M.condition(), 1.0))))


def selling_iterates(M: SymMatrix2, init: Optional[Superbase] = None) -> Iterator[Superbase]:
    """Yield the successive superbases of Selling's reduction, the initial
    one included and the final M-obtuse one last.

    When several pairs violate obtuseness, the pair with the largest scalar
    product is flipped (smallest ``(i, j)`` on ties).
    """
    if not M.is_spd():
        raise NotPositiveDefinite(f"{M} is not positive definite")
    sb = INITIAL_SUPERBASE if init is None else Superbase(*init)
    cap = _selling_cap(M)
    yield sb
    for _ in range(cap):
        best, pair = 0.0, None
        for i, j in _PAIRS:
            p = M.quad(sb[i], sb[j])
            if p > best:
                best, pair = p, (i, j)
        if pair is None:
            return
        i, j = pair
        sb = Superbase(sb[i] - sb[j], sb[j], -sb[i])
        yield sb
    raise ReductionDiverged(f"Selling reduction exceeded {cap} iterations for {M}")


def selling_reduce(M: SymMatrix2, init: Optional[Superbase] = None) -> tuple[Superbase, int]:
    """M-obtuse superbase obtained by Selling's algorithm, and the number of
    reduction steps performed."""
    it = -1
    for it, sb in enumerate(selling_iterates(M, init)):
        pass
    return sb, it


# ---------------------------------------------------------------------------
# Stern-Brocot structure


def decompose(e) -> tuple[LatticeVector, LatticeVector]:
    """The unique ``(f, g)`` with ``f + g = e``, ``det(f, g) = 1`` and
    ``<f, g> >= 0``.  Requires ``gcd(e) = 1`` and both coordinates nonzero."""
    a, b = int(e[0]), int(e[1])
    if a == 0 or b == 0:
        raise NoDecomposition(f"({a}, {b}) lies on an axis")
    if math.gcd(a, b) != 1:
        raise NoDecomposition(f"({a}, {b}) is not primitive")
    # Rotate by quarter turns into the open first quadrant; rotations preserve
    # determinants and scalar products.
    turns = 0
    while not (a > 0 and b > 0):
        a, b = b, -a
        turns += 1
    # Bezout relation a v - b u = 1 with 0 <= u < a, 0 < v <= b.
    v = pow(a, -1, b) if b > 1 else 1
    if v == 0:
        v = b
    u = (a * v - 1) // b
    f, g = (a - u, b - v), (u, v)
    for _ in range(turns):
        f, g = (-f[1], f[0]), (-g[1], g[0])
    return LatticeVector(*f), LatticeVector(*g)


def children(e) -> tuple[LatticeVector, LatticeVector]:
    """Endpoints ``f + e`` and ``e + g`` of the two edges leaving ``e``."""
    e = vec(e)
    f, g = decompose(e)
    return f + e, e + g


def parent(e) -> Optional[LatticeVector]:
    """Unique predecessor of ``e`` in the Stern-Brocot graph, or None for the
    eight roots and isolated points (``||e||^2 <= 2``)."""
    if gcd_vec(e) != 1:
        raise InvalidVector(f"{tuple(e)} is not primitive")
    if norm2(e) <= 2:
        return None
    f, g = decompose(e)
    return f if norm2(f) > norm2(g) else g


def ancestors(e) -> list[LatticeVector]:
    """Chain of predecessors of ``e``, closest first, ending at a root."""
    out = []
    p = parent(e)
    while p is not None:
        out.append(p)
        p = parent(p)
    return out


# ---------------------------------------------------------------------------
# Stencils


class Stencil:
    """Finite origin-symmetric set of primitive lattice vectors, iterated in
    lexicographic order."""

    __slots__ = ("vectors", "_set")

    def __init__(self, vectors: Iterable, normalize: bool = False):
        vs = set()
        for e in vectors:
            e = vec(e)
            if e == (0, 0):
                raise InvalidStencil("a stencil cannot contain the zero vector")
            if normalize:
                d = gcd_vec(e)
                e = LatticeVector(e[0] // d, e[1] // d)
                vs.add(-e)
            elif gcd_vec(e) != 1:
                raise InvalidStencil(f"{e} is not primitive")
            vs.add(e)
        for e in vs:
            if -e not in vs:
                raise InvalidStencil(f"stencil is not symmetric: {-e} missing")
        self.vectors = tuple(sorted(vs))
        self._set = frozenset(vs)

    def __contains__(self, e) -> bool:
        return (e[0], e[1]) in self._set

    def __iter__(self):
        return iter(self.vectors)

    def __len__(self):
        return len(self.vectors)

    def __eq__(self, other):
        return isinstance(other, Stencil) and self._set == other._set

    def __hash__(self):
        return hash(self._set)

    def __repr__(self):
        return f"Stencil({len(self)} vectors)"

    def union(self, vectors: Iterable) -> "Stencil":
        return Stencil(list(self.vectors) + [vec(e) for e in vectors] + [-vec(e) for e in vectors])

    def half(self) -> tuple[LatticeVector, ...]:
        """One representative per pair ``{e, -e}`` (upper half plane)."""
        return tuple(e for e in self.vectors if canonical(e) == e)

    def is_parent_closed(self) -> bool:
        return all(parent(e) is None or parent(e) in self for e in self.vectors)


def stencil_ball(radius: float) -> Stencil:
    """All primitive vectors of Euclidean norm at most ``radius``."""
    if radius < 1:
        raise EmptyStencil(f"no primitive vector has norm <= {radius}")
    return _ball(int(math.floor(radius * radius)))


@lru_cache(maxsize=2048)
def _ball(r2: int) -> Stencil:
    r = math.isqrt(r2)
    return Stencil(
        (a, b)
        for a in range(-r, r + 1)
        for b in range(-r, r + 1)
        if (a, b) != (0, 0) and a * a + b * b <= r2 and math.gcd(a, b) == 1
    )


V8 = Stencil([(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (-1, -1), (1, -1), (-1, 1)])

# Radii at which stencil_ball reaches 8, 16, 24 and 48 elements.
STENCIL_RADII = {8: 1.5, 16: 2.3, 24: 3.2, 48: 5.0}


def stencil_with_points(count: int) -> Stencil:
    if count not in STENCIL_RADII:
        raise EmptyStencil(f"no predefined stencil with {count} points; choose from {sorted(STENCIL_RADII)}")
    return stencil_ball(STENCIL_RADII[count])


def enumerate_superbases(V: Stencil | Iterable) -> list[Superbase]:
    """One superbase ``(e, -f, -g)`` per decomposition ``e = f (+) g`` with
    ``e, f, g`` in ``V``.

    Every superbase with its three elements in a symmetric set ``V`` is a
    permutation of exactly one of these, so the list has one entry per
    unordered superbase.
    """
    if not isinstance(V, Stencil):
        V = Stencil(V)
    out = []
    for e in V:
        if e[0] == 0 or e[1] == 0:
            continue
        f, g = decompose(e)
        if f in V and g in V:
            out.append(Superbase(e, -f, -g))
    return out


def orthogonal_pairs(V: Stencil) -> list[tuple[LatticeVector, LatticeVector]]:
    """Unordered orthogonal pairs among the upper-half representatives of ``V``,
    the lexicographically smaller vector first."""
    # A primitive vector orthogonal to a primitive f is +-perp(f).
    out = []
    for f in sorted(V.half()):
        g = canonical(f.perp())
        if f < g and g in V:
            out.append((f, g))
    return out


# ---------------------------------------------------------------------------
# Area oracle


def _clip(poly: list, normal, bound) -> list:
    """Sutherland-Hodgman clip of a convex polygon by ``<normal, l> <= bound``."""
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        sp = normal[0] * p[0] + normal[1] * p[1] - bound
        sq = normal[0] * q[0] + normal[1] * q[1] - bound
        if sp <= 0:
            out.append(p)
        if (sp < 0 < sq) or (sq < 0 < sp):
            t = sp / (sp - sq)
            out.append((p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])))
    return out


def _shoelace(poly: list):
    s = 0
    for k in range(len(poly)):
        p, q = poly[k], poly[(k + 1) % len(poly)]
        s += p[0] * q[1] - p[1] * q[0]
    return abs(s) / 2


def polygon_area_oracle(delta: Sequence[float], sb: Sequence) -> float:
    """Area of ``{l in R^2 : |<l, e_i>| <= delta_i, i = 0, 1, 2}``.

    Computed by clipping a bounding square against the six half planes, in
    exact rational arithmetic.  Used to cross-check the closed form of ``h``.
    """
    ds = [Fraction(float(d)) if not isinstance(d, (int, Fraction)) else Fraction(d) for d in delta]
    if any(d < 0 for d in ds):
        raise ValueError("delta must be componentwise nonnegative")
    es = [vec(e) for e in sb]
    R = (sum(ds) + 1) * (max(max(abs(c) for c in e) for e in es) + 1)
    poly = [(-R, -R), (R, -R), (R, R), (-R, R)]
    for d, e in zip(ds, es):
        for s in (1, -1):
            poly = _clip(poly, (s * e[0], s * e[1]), d)
            if len(poly) < 3:
                return 0.0
    return float(_shoelace(poly))
