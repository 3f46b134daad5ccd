"""Convex domains, their discretization ``X = Omega cap Z^2`` and the
boundary-aware second differences used by every scheme.

All schemes work in lattice coordinates.  A physical domain is rescaled by the
grid size ``n`` (so the unit square becomes ``]0, n[^2``) and boundary data is
always evaluated at the physical point ``h * p``, ``h = 1/n``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .errors import DomainTooSmall, InvalidStencilConfig
from .lattice import (
    V8,
    LatticeVector,
    Stencil,
    ancestors,
    canonical,
    decompose,
    gcd_vec,
    parent,
    vec,
)

# ---------------------------------------------------------------------------
# Domains


class ConvexDomain:
    """Open bounded convex subset of the plane.

    Subclasses implement a strict membership test and the exit parameter of
    rays, both vectorized over arrays of points of shape ``(k, 2)``.
    """

    # Points closer than this to the boundary (relative to the domain size)
    # count as boundary points, so that rounding in the boundary description
    # never creates grid points at distance ~1e-16 from it.
    snap = 1e-9

    def signed_distance(self, P) -> np.ndarray:
        """Positive inside, negative outside, zero on the boundary."""
        raise NotImplementedError

    def contains(self, P) -> np.ndarray:
        lo, hi = self.bounds()
        tol = self.snap * max(1.0, float(np.max(hi - lo)))
        return self.signed_distance(P) > tol

    def exit_fraction(self, P, e) -> np.ndarray:
        """Smallest ``t > 0`` with ``P + t e`` on the boundary, for ``P`` inside."""
        raise NotImplementedError

    def scaled(self, s: float) -> "ConvexDomain":
        raise NotImplementedError

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def boundary_samples(self, spacing: float) -> np.ndarray:
        """Points on the boundary, consecutive ones at most ``spacing`` apart."""
        raise NotImplementedError

    def segments(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """Straight pieces of the boundary as ``(start, end)`` pairs."""
        return []

    @property
    def diameter(self) -> float:
        lo, hi = self.bounds()
        return float(np.hypot(*(hi - lo)))


def _as_points(P) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    return P.reshape(-1, 2)


def _sample_segment(a, b, spacing) -> np.ndarray:
    k = max(1, int(math.ceil(np.hypot(*(b - a)) / spacing)))
    t = np.arange(k) / k
    return a[None, :] + t[:, None] * (b - a)[None, :]


class ConvexPolygon(ConvexDomain):
    """Intersection of the open half planes ``<normal_i, x> < offset_i``."""

    def __init__(self, normals, offsets, vertices=None):
        self.normals = np.asarray(normals, dtype=float).reshape(-1, 2)
        self.offsets = np.asarray(offsets, dtype=float).reshape(-1)
        if len(self.normals) != len(self.offsets) or len(self.offsets) < 3:
            raise ValueError("a polygon needs at least three half planes")
        self._vertices = None if vertices is None else np.asarray(vertices, dtype=float)

    @classmethod
    def from_vertices(cls, vertices) -> "ConvexPolygon":
        """Polygon with the given vertices in counter-clockwise order."""
        V = np.asarray(vertices, dtype=float)
        nxt = np.roll(V, -1, axis=0)
        d = nxt - V
        normals = np.stack([d[:, 1], -d[:, 0]], axis=1)
        offsets = np.einsum("ij,ij->i", normals, V)
        if np.any(np.einsum("ij,ij->i", normals, V.mean(axis=0)[None, :] - V) >= 0):
            raise ValueError("vertices must be in counter-clockwise convex position")
        return cls(normals, offsets, V)

    def vertices(self) -> np.ndarray:
        if self._vertices is None:
            pts = []
            m = len(self.normals)
            for i in range(m):
                for j in range(i + 1, m):
                    A = np.stack([self.normals[i], self.normals[j]])
                    if abs(np.linalg.det(A)) < 1e-14:
                        continue
                    p = np.linalg.solve(A, [self.offsets[i], self.offsets[j]])
                    if np.all(self.normals @ p <= self.offsets + 1e-9 * (1 + np.abs(self.offsets))):
                        pts.append(p)
            pts = np.unique(np.round(np.array(pts), 12), axis=0)
            c = pts.mean(axis=0)
            order = np.argsort(np.arctan2(pts[:, 1] - c[1], pts[:, 0] - c[0]))
            self._vertices = pts[order]
        return self._vertices

    def signed_distance(self, P) -> np.ndarray:
        P = _as_points(P)
        norms = np.hypot(self.normals[:, 0], self.normals[:, 1])
        return np.min((self.offsets[None, :] - P @ self.normals.T) / norms[None, :], axis=1)

    def exit_fraction(self, P, e) -> np.ndarray:
        P = _as_points(P)
        ne = self.normals @ np.asarray(e, dtype=float)
        out = np.full(len(P), np.inf)
        for k in np.nonzero(ne > 0)[0]:
            out = np.minimum(out, (self.offsets[k] - P @ self.normals[k]) / ne[k])
        return out

    def scaled(self, s: float) -> "ConvexPolygon":
        V = None if self._vertices is None else self._vertices * s
        return ConvexPolygon(self.normals, self.offsets * s, V)

    def bounds(self):
        V = self.vertices()
        return V.min(axis=0), V.max(axis=0)

    def segments(self):
        V = self.vertices()
        return [(V[i], V[(i + 1) % len(V)]) for i in range(len(V))]

    def boundary_samples(self, spacing: float) -> np.ndarray:
        return np.concatenate([_sample_segment(a, b, spacing) for a, b in self.segments()])


class Box(ConvexPolygon):
    """Open axis-aligned rectangle ``]lo_0, hi_0[ x ]lo_1, hi_1[``."""

    def __init__(self, lo=(0.0, 0.0), hi=(1.0, 1.0)):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if np.any(self.hi <= self.lo):
            raise ValueError("empty box")
        normals = [(1, 0), (0, 1), (-1, 0), (0, -1)]
        offsets = [self.hi[0], self.hi[1], -self.lo[0], -self.lo[1]]
        verts = [self.lo, (self.hi[0], self.lo[1]), self.hi, (self.lo[0], self.hi[1])]
        super().__init__(normals, offsets, verts)

    def exit_fraction(self, P, e) -> np.ndarray:
        P = _as_points(P)
        out = np.full(len(P), np.inf)
        for i in range(2):
            if e[i] > 0:
                out = np.minimum(out, (self.hi[i] - P[:, i]) / e[i])
            elif e[i] < 0:
                out = np.minimum(out, (self.lo[i] - P[:, i]) / e[i])
        return out

    def scaled(self, s: float) -> "Box":
        return Box(self.lo * s, self.hi * s)

    def bounds(self):
        return self.lo.copy(), self.hi.copy()

    def __repr__(self):
        return f"Box({tuple(self.lo)}, {tuple(self.hi)})"


class Disk(ConvexDomain):
    """Open disk of given center and radius."""

    def __init__(self, center=(0.5, 0.5), radius=0.5):
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)
        if self.radius <= 0:
            raise ValueError("disk radius must be positive")

    def signed_distance(self, P) -> np.ndarray:
        D = _as_points(P) - self.center
        return self.radius - np.sqrt(np.einsum("ij,ij->i", D, D))

    def exit_fraction(self, P, e) -> np.ndarray:
        D = _as_points(P) - self.center
        e = np.asarray(e, dtype=float)
        a = e @ e
        b = D @ e
        c = np.einsum("ij,ij->i", D, D) - self.radius**2
        disc = np.sqrt(np.maximum(b * b - a * c, 0.0))
        # Larger root of a t^2 + 2 b t + c = 0 written without cancellation.
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(b >= 0, -c / (b + disc), (disc - b) / a)
        return t

    def scaled(self, s: float) -> "Disk":
        return Disk(self.center * s, self.radius * s)

    def bounds(self):
        return self.center - self.radius, self.center + self.radius

    def boundary_samples(self, spacing: float) -> np.ndarray:
        k = max(16, int(math.ceil(2 * math.pi * self.radius / spacing)))
        t = 2 * math.pi * np.arange(k) / k
        return self.center + self.radius * np.stack([np.cos(t), np.sin(t)], axis=1)

    def __repr__(self):
        return f"Disk({tuple(self.center)}, {self.radius})"


# ---------------------------------------------------------------------------
# Grid


class Grid:
    """Lattice points of a domain rescaled by ``n``.

    ``points`` is an ``(N, 2)`` integer array enumerated row-major (second
    coordinate outer, first inner); ``lookup`` maps lattice points back to
    their dense index, or -1 for points outside ``X``.
    """

    def __init__(self, domain_phys: ConvexDomain, n: int):
        self.domain_phys = domain_phys
        self.n = int(n)
        self.scale_h = 1.0 / self.n
        self.domain = domain_phys.scaled(self.n)
        lo, hi = self.domain.bounds()
        self.origin = np.floor(lo).astype(np.int64)
        top = np.ceil(hi).astype(np.int64)
        self.shape = tuple(int(s) for s in (top - self.origin + 1))
        xs = np.arange(self.origin[0], top[0] + 1)
        ys = np.arange(self.origin[1], top[1] + 1)
        Y, X = np.meshgrid(ys, xs, indexing="ij")
        cand = np.stack([X.ravel(), Y.ravel()], axis=1)
        inside = self.domain.contains(cand)
        self.points = cand[inside].astype(np.int64)
        if len(self.points) == 0:
            raise DomainTooSmall(f"no lattice point inside {domain_phys!r} at n={n}")
        self.index_map = np.full(self.shape, -1, dtype=np.int64)
        rel = self.points - self.origin
        self.index_map[rel[:, 0], rel[:, 1]] = np.arange(len(self.points))
        self.diameter = self.domain.diameter
        self._both: dict = {}

    def __len__(self):
        return len(self.points)

    @property
    def size(self) -> int:
        return len(self.points)

    def physical(self, P=None) -> np.ndarray:
        P = self.points if P is None else np.asarray(P)
        return self.scale_h * P

    def lookup(self, P) -> np.ndarray:
        """Dense index of each lattice point of ``P`` (shape ``(k, 2)``), -1 if
        the point is not in ``X``."""
        P = np.asarray(P, dtype=np.int64).reshape(-1, 2)
        rel = P - self.origin
        ok = (rel[:, 0] >= 0) & (rel[:, 0] < self.shape[0]) & (rel[:, 1] >= 0) & (rel[:, 1] < self.shape[1])
        out = np.full(len(P), -1, dtype=np.int64)
        out[ok] = self.index_map[rel[ok, 0], rel[ok, 1]]
        return out

    def index_of(self, x) -> int:
        i = int(self.lookup([x])[0])
        if i < 0:
            raise KeyError(f"{tuple(x)} is not a grid point")
        return i

    def shift(self, e, idx=None) -> np.ndarray:
        """Indices of ``x + e`` for the points ``x`` selected by ``idx``."""
        P = self.points if idx is None else self.points[idx]
        return self.lookup(P + np.asarray(e, dtype=np.int64))

    def both_inside(self, e) -> np.ndarray:
        """Per point, whether ``x + e`` and ``x - e`` are both in ``X``
        (memoized per direction)."""
        c = canonical(e)
        m = self._both.get(c)
        if m is None:
            m = (self.shift(c) >= 0) & (self.shift(-c) >= 0)
            self._both[c] = m
        return m

    def axis_distance(self) -> np.ndarray:
        """Per point, the floor of the smallest exit parameter along the four
        axis directions (a cheap distance to the boundary in pixels)."""
        d = np.full(len(self.points), np.inf)
        for e in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            d = np.minimum(d, self.domain.exit_fraction(self.points, e))
        return np.floor(d + 1e-9)


def discretize(domain_phys: ConvexDomain, n: int) -> Grid:
    """Grid of ``domain_phys`` at scale ``h = 1/n``."""
    if n < 4:
        raise ValueError("n must be at least 4")
    return Grid(domain_phys, n)


def boundary_fraction(grid: Grid, x, e) -> tuple[float, float]:
    """``(h+, h-)``: the largest step in ``]0, 1]`` along ``+e`` and ``-e``
    before leaving the closed domain."""
    out = []
    for s in (1, -1):
        d = (s * e[0], s * e[1])
        y = (x[0] + d[0], x[1] + d[1])
        if grid.domain.contains([y])[0]:
            out.append(1.0)
        else:
            out.append(float(min(1.0, grid.domain.exit_fraction([x], d)[0])))
    return out[0], out[1]


# ---------------------------------------------------------------------------
# Second differences


@dataclass
class DirectionData:
    """Geometry of the second difference along ``e`` at every grid point.

    ``ip``/``im`` are the indices of ``x +- e`` (-1 when that point is not in
    ``X``); in that case the boundary value ``bp``/``bm`` taken at
    ``x +- h e`` is used instead.  ``wp``, ``wm`` are the weights of the
    general formula ``wp (u+ - u0) + wm (u- - u0)``.
    """

    e: LatticeVector
    ip: np.ndarray
    im: np.ndarray
    hp: np.ndarray
    hm: np.ndarray
    bp: np.ndarray
    bm: np.ndarray
    unit: np.ndarray = dc_field(init=False)
    wp: np.ndarray = dc_field(init=False)
    wm: np.ndarray = dc_field(init=False)

    def __post_init__(self):
        self.unit = (self.hp == 1.0) & (self.hm == 1.0)
        s = self.hp + self.hm
        self.wp = 2.0 / (s * self.hp)
        self.wm = 2.0 / (s * self.hm)

    @property
    def interior(self) -> np.ndarray:
        return (self.ip >= 0) & (self.im >= 0)


def combine(u0, vp, vm, wp, wm, unit):
    """The one formula every code path uses for a second difference, so that
    vectorized and pointwise evaluations agree bit for bit."""
    general = wp * (vp - u0) + wm * (vm - u0)
    return np.where(unit, (vp + vm) - 2.0 * u0, general)


class DifferenceCache:
    """Per-direction :class:`DirectionData`, built on first use.

    Tied to a grid and a boundary trace; shared by all fields with the same
    boundary data.
    """

    def __init__(self, grid: Grid, sigma: Callable):
        self.grid = grid
        self.sigma = sigma
        self._data: dict = {}

    def direction(self, e) -> DirectionData:
        c = canonical(e)
        dd = self._data.get(c)
        if dd is None:
            dd = self._build(c)
            self._data[c] = dd
        return dd

    def _one_side(self, d):
        g = self.grid
        idx = g.shift(d)
        h = np.ones(len(g.points))
        b = np.zeros(len(g.points))
        out = idx < 0
        if np.any(out):
            P = g.points[out].astype(float)
            t = np.minimum(1.0, g.domain.exit_fraction(P, d))
            h[out] = t
            Q = P + t[:, None] * np.asarray(d, dtype=float)[None, :]
            b[out] = np.asarray(self.sigma(g.scale_h * Q), dtype=float)
        return idx, h, b

    def _build(self, e) -> DirectionData:
        ip, hp, bp = self._one_side(e)
        im, hm, bm = self._one_side(-e)
        return DirectionData(e, ip, im, hp, hm, bp, bm)

    def geometry(self, e, idx):
        """``(ip, im, bp, bm, wp, wm, unit)`` restricted to the points ``idx``.

        Directions seen for the first time are resolved by plain index lookups
        when both neighbours of every requested point lie in ``X``; only
        directions that touch the boundary are tabulated on the whole grid.
        """
        c = canonical(e)
        dd = self._data.get(c)
        if dd is None:
            ip = self.grid.shift(c, idx)
            im = self.grid.shift(-c, idx)
            if np.all(ip >= 0) and np.all(im >= 0):
                one = np.ones(len(ip))
                zero = np.zeros(len(ip))
                return ip, im, zero, zero, one, one, np.ones(len(ip), dtype=bool)
            dd = self.direction(c)
        return dd.ip[idx], dd.im[idx], dd.bp[idx], dd.bm[idx], dd.wp[idx], dd.wm[idx], dd.unit[idx]

    def diff(self, u: np.ndarray, e, idx=None) -> np.ndarray:
        """Second difference of ``u`` along ``e`` at all points (or at ``idx``)."""
        if idx is None:
            dd = self.direction(e)
            ip, im, bp, bm, wp, wm, unit = dd.ip, dd.im, dd.bp, dd.bm, dd.wp, dd.wm, dd.unit
            u0 = u
        else:
            ip, im, bp, bm, wp, wm, unit = self.geometry(e, idx)
            u0 = u[idx]
        vp = np.where(ip >= 0, u[ip], bp)
        vm = np.where(im >= 0, u[im], bm)
        return combine(u0, vp, vm, wp, wm, unit)


class Field:
    """Values of the unknown on ``X`` together with the boundary trace.

    ``sigma`` maps an array of physical points of shape ``(k, 2)`` to their
    boundary values.
    """

    def __init__(self, grid: Grid, values, sigma: Callable, cache: Optional[DifferenceCache] = None):
        values = np.asarray(values, dtype=float)
        if values.shape != (len(grid),):
            raise ValueError(f"expected {len(grid)} values, got shape {values.shape}")
        self.grid = grid
        self.values = values
        self.sigma = sigma
        self.cache = cache if cache is not None else DifferenceCache(grid, sigma)

    @classmethod
    def from_function(cls, grid: Grid, U: Callable, sigma: Optional[Callable] = None) -> "Field":
        """Field sampling ``U`` at the physical grid points, with ``U`` itself
        as boundary trace unless ``sigma`` is given."""
        return cls(grid, U(grid.physical()), U if sigma is None else sigma)

    def with_values(self, values) -> "Field":
        return Field(self.grid, values, self.sigma, self.cache)

    def diff(self, e, idx=None) -> np.ndarray:
        return self.cache.diff(self.values, e, idx)


def second_difference(grid: Grid, field: Field, x, e) -> float:
    """Boundary-aware second difference of ``field`` at the point ``x``."""
    i = grid.index_of(x)
    return float(field.cache.diff(field.values, e, np.array([i]))[0])


# ---------------------------------------------------------------------------
# The sets V_Omega(x)


def v_omega_contains(grid: Grid, x, e) -> bool:
    """Whether ``e = f (+) g`` with ``x +- e``, ``x +- f``, ``x +- g`` all in the
    domain."""
    e = vec(e)
    if e[0] == 0 or e[1] == 0 or gcd_vec(e) != 1:
        return False
    f, g = decompose(e)
    pts = [(x[0] + s * d[0], x[1] + s * d[1]) for d in (e, f, g) for s in (1, -1)]
    return bool(np.all(grid.domain.contains(pts)))


def primitive_vectors(radius: float):
    r = int(math.floor(radius))
    for a in range(-r, r + 1):
        for b in range(-r, r + 1):
            if (a, b) != (0, 0) and a * a + b * b <= radius * radius and math.gcd(a, b) == 1:
                yield LatticeVector(a, b)


def v_omega(grid: Grid, x) -> set:
    """All of ``V_Omega(x)``, by exhaustive scan up to the domain diameter."""
    return _scanner(grid).v_omega(grid.index_of(x))


# ---------------------------------------------------------------------------
# Stencil families


@dataclass
class StencilConfig:
    interior: Stencil = V8
    boundary: Stencil = V8
    boundary_layer_width: int = 4


class StencilFamily:
    """A stencil ``V(x)`` for each grid point.

    Distinct stencils are stored once in ``stencils``; ``stencil_id[i]`` is the
    stencil of point ``i``.  ``repairs`` lists ``(point index, added vectors)``
    for points whose stencil had to be enlarged to reach every direction that
    the adaptive extension cannot.
    """

    def __init__(self, grid: Grid, stencils: list, stencil_id: np.ndarray, repairs=()):
        self.grid = grid
        self.stencils = list(stencils)
        self.stencil_id = np.asarray(stencil_id, dtype=np.int64)
        self.repairs = list(repairs)
        dirs = set()
        for V in self.stencils:
            dirs.update(V.half())
        self.directions = tuple(sorted(dirs))
        self._member = {
            e: np.array([e in V for V in self.stencils], dtype=bool) for e in self.directions
        }

    @classmethod
    def uniform(cls, grid: Grid, V: Stencil) -> "StencilFamily":
        return cls(grid, [V], np.zeros(len(grid), dtype=np.int64))

    def stencil_at(self, i: int) -> Stencil:
        return self.stencils[self.stencil_id[i]]

    def membership(self, e, idx=None) -> np.ndarray:
        """Whether ``e`` belongs to ``V(x)``, per point (or per selected point)."""
        m = self._member.get(canonical(e))
        sid = self.stencil_id if idx is None else self.stencil_id[idx]
        if m is None:
            return np.zeros(len(sid), dtype=bool)
        return m[sid]


def _check_config_stencil(V: Stencil, name: str):
    if not all(e in V for e in V8):
        raise InvalidStencilConfig(f"{name} stencil must contain the eight-point stencil")
    if not V.is_parent_closed():
        missing = [e for e in V if parent(e) is not None and parent(e) not in V]
        raise InvalidStencilConfig(f"{name} stencil is not parent-closed, e.g. parent of {missing[0]} missing")


class _DirectionScanner:
    """Exhaustive vectorized scans over all primitive directions shorter than
    the domain diameter (upper half plane representatives)."""

    def __init__(self, grid: Grid):
        self.grid = grid
        cands = [e for e in primitive_vectors(grid.diameter) if canonical(e) == e]
        self.E = np.array(cands, dtype=np.int64).reshape(-1, 2)
        F, G = np.zeros_like(self.E), np.zeros_like(self.E)
        self.off_axis = (self.E[:, 0] != 0) & (self.E[:, 1] != 0)
        for k in np.nonzero(self.off_axis)[0]:
            f, g = decompose(self.E[k])
            F[k], G[k] = f, g
        self.F, self.G = F, G

    def _inside(self, x, D):
        g = self.grid
        return (g.lookup(x + D) >= 0) & (g.lookup(x - D) >= 0)

    def reach(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Indices of directions with ``x +- e`` in ``X``, and which of them
        belong to ``V_Omega(x)``."""
        x = self.grid.points[i]
        k = np.nonzero(self._inside(x, self.E))[0]
        vo = self.off_axis[k] & self._inside(x, self.F[k]) & self._inside(x, self.G[k])
        return k, vo

    def v_omega(self, i: int) -> set:
        k, vo = self.reach(i)
        out = set()
        for e in self.E[k[vo]]:
            e = LatticeVector(*e)
            out.add(e)
            out.add(-e)
        return out

    def gaps(self, i: int, V) -> list:
        """Directions ``e`` with ``x +- e`` in ``X``, outside ``V`` and outside
        ``V_Omega(x)``."""
        k, vo = self.reach(i)
        out = []
        for j in k[~vo]:
            e = LatticeVector(*self.E[j])
            if e not in V:
                out.append(e)
        return out


def _scanner(grid: Grid) -> _DirectionScanner:
    sc = getattr(grid, "_scanner", None)
    if sc is None:
        sc = grid._scanner = _DirectionScanner(grid)
    return sc


def build_stencil_family(grid: Grid, config: Optional[StencilConfig] = None) -> StencilFamily:
    """Boundary stencil on the layer ``axis_distance <= width``, interior stencil
    elsewhere, then enlarged where needed so that every direction joining two
    domain points is either in ``V(x)`` or recoverable adaptively."""
    config = config or StencilConfig()
    _check_config_stencil(config.interior, "interior")
    _check_config_stencil(config.boundary, "boundary")
    stencils = [config.interior, config.boundary]
    lookup = {config.interior: 0, config.boundary: 1}
    layer = grid.axis_distance() <= config.boundary_layer_width
    sid = np.where(layer, 1, 0).astype(np.int64)
    if config.interior == config.boundary:
        stencils, lookup = [config.interior], {config.interior: 0}
        sid[:] = 0
    # Only points with an axis neighbour outside the domain can have gaps.
    exposed = np.zeros(len(grid), dtype=bool)
    for e in ((1, 0), (0, 1)):
        exposed |= (grid.shift(e) < 0) | (grid.shift((-e[0], -e[1])) < 0)
    if isinstance(grid.domain, Box):
        # On a box, x +- (1, 0) and x +- (0, 1) stay in the closure for all
        # x, and the scan below provably finds nothing.
        exposed[:] = False
    repairs = []
    scanner = _scanner(grid) if np.any(exposed) else None
    for i in np.nonzero(exposed)[0]:
        V = stencils[sid[i]]
        gaps = scanner.gaps(int(i), V)
        if not gaps:
            continue
        extra = set()
        for e in gaps:
            extra.add(e)
            extra.update(ancestors(e))
        W = V.union(sorted(extra))
        if W not in lookup:
            lookup[W] = len(stencils)
            stencils.append(W)
        sid[i] = lookup[W]
        repairs.append((int(i), tuple(sorted(extra - set(V)))))
    return StencilFamily(grid, stencils, sid, repairs)


def hierarchy_holds(V) -> bool:
    """Every connected component of ``V``, as a subgraph of the Stern-Brocot
    graph, meets the eight-point stencil."""
    vs = set(vec(e) for e in V)
    if not all(e in vs for e in V8):
        return False
    seen = set()
    for start in vs:
        if start in seen:
            continue
        comp, stack = set(), [start]
        while stack:
            e = stack.pop()
            if e in comp:
                continue
            comp.add(e)
            nbrs = []
            p = parent(e)
            if p is not None:
                nbrs.append(p)
            if e[0] != 0 and e[1] != 0:
                f, g = decompose(e)
                nbrs += [f + e, e + g]
            stack.extend(n for n in nbrs if n in vs and n not in comp)
        seen |= comp
        if not any(e.norm2() <= 2 for e in comp):
            return False
    return True


def validate_family(family: StencilFamily, extended: bool = False) -> list[str]:
    """Check the structural properties at every point by direct means and
    return a list of violations (empty when the family is valid).

    With ``extended`` the sets ``V(x) | V_Omega(x)`` are checked instead.
    """
    grid = family.grid
    scanner = _scanner(grid)
    problems = []
    hier: dict = {}
    for i in range(len(grid)):
        V = set(family.stencil_at(i))
        x = grid.points[i]
        if extended:
            V |= scanner.v_omega(i)
        key = frozenset(V)
        if key not in hier:
            hier[key] = hierarchy_holds(V)
        if not hier[key]:
            problems.append(f"hierarchy fails at {tuple(x)}")
        for e in scanner.gaps(i, V):
            problems.append(f"reachability fails at {tuple(x)} for {e}")
    return problems
