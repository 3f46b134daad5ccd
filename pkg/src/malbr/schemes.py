"""Discrete Monge-Ampere operators.

* ``FD``: the centered finite-difference scheme (consistent, not monotone).
* ``WS``: the wide-stencil scheme, a minimum over orthogonal pairs.
* ``LBRExtensive``: minimum of ``h`` over the superbases of each stencil.
* ``LBRAdaptive``: the same minimum over stencils extended on the fly by a
  pruned depth-first walk of the Stern-Brocot tree.

Every scheme can evaluate the operator on a whole grid (``evaluate``) and
assemble the residual with a sparse Jacobian (``assemble``).  The Jacobian is
the derivative of the active branch: the minimizing superbase or pair, with
zero slope where a positive part ``max(0, .)`` is clamped.

The ``eval_*`` functions are pointwise reference implementations returning a
:class:`SchemeEval`; ``eval_lbr_adaptive`` follows the list-based traversal
step by step and is used to cross-check the vectorized code.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, InvalidStencil
from .grid import Field, Grid, StencilFamily
from .lattice import (
    LatticeVector,
    Stencil,
    SymMatrix2,
    canonical,
    enumerate_superbases,
    norm2,
    orthogonal_pairs,
    vec,
)

# ---------------------------------------------------------------------------
# The function h


def h_values(a, b, c):
    """Vectorized ``h``: ``b c`` when ``a >= b + c`` (and symmetrically), else
    ``(a b + b c + c a)/2 - (a^2 + b^2 + c^2)/4``.

    The second branch is evaluated as ``(s t + t w + w s)/4`` with
    ``s = b + c - a``, ``t = a + c - b``, ``w = a + b - c``, which avoids the
    cancellation of the expanded form.
    """
    a, b, c = np.asarray(a), np.asarray(b), np.asarray(c)
    s = b + c - a
    t = a + c - b
    w = a + b - c
    inner = (s * t + t * w + w * s) / 4
    return np.where(s <= 0, b * c, np.where(t <= 0, a * c, np.where(w <= 0, a * b, inner)))


def h_gradient_values(a, b, c):
    """Vectorized gradient of ``h``, as an array of shape ``(3, ...)``."""
    a, b, c = np.asarray(a), np.asarray(b), np.asarray(c)
    s = b + c - a
    t = a + c - b
    w = a + b - c
    zero = np.zeros_like(s)
    ga = np.where(s <= 0, zero, np.where(t <= 0, c, np.where(w <= 0, b, s / 2)))
    gb = np.where(s <= 0, c, np.where(t <= 0, zero, np.where(w <= 0, a, t / 2)))
    gc = np.where(s <= 0, b, np.where(t <= 0, a, np.where(w <= 0, zero, w / 2)))
    return np.stack([ga, gb, gc])


def _check_nonneg(a, b, c):
    if min(a, b, c) < 0:
        raise DomainError(f"h is defined for nonnegative arguments, got ({a}, {b}, {c})")


def h_func(a: float, b: float, c: float) -> float:
    _check_nonneg(a, b, c)
    return float(h_values(np.float64(a), np.float64(b), np.float64(c)))


def h_gradient(a: float, b: float, c: float) -> tuple[float, float, float]:
    _check_nonneg(a, b, c)
    g = h_gradient_values(np.float64(a), np.float64(b), np.float64(c))
    return float(g[0]), float(g[1]), float(g[2])


# ---------------------------------------------------------------------------
# Evaluation results


@dataclass
class SchemeEval:
    """Operator value at one point.

    ``active`` lists the directions of the minimizing branch; ``derivative``
    maps grid indices to partial derivatives, with key ``-1`` collecting the
    derivative with respect to a uniform shift of the boundary data.
    """

    value: float
    active: tuple
    derivative: dict = dc_field(default_factory=dict)


@dataclass
class BatchEval:
    """Vectorized evaluation on the points ``idx``.

    Row ``k`` of ``act`` holds indices into ``directions`` and row ``k`` of
    ``coef`` the derivative of the value with respect to the corresponding
    second differences (zero entries are unused slots).
    """

    idx: np.ndarray
    values: np.ndarray
    directions: list
    act: np.ndarray
    coef: np.ndarray


class _DirectionTable:
    def __init__(self):
        self.list: list = []
        self.ids: dict = {}

    def id(self, e) -> int:
        c = canonical(e)
        k = self.ids.get(c)
        if k is None:
            k = self.ids[c] = len(self.list)
            self.list.append(c)
        return k


def _jacobian(field: Field, be: BatchEval, shape) -> sp.csr_matrix:
    cache = field.cache
    rows, cols, vals = [], [], []
    for slot in range(be.act.shape[1]):
        ids = be.act[:, slot]
        for d in np.unique(ids):
            sel = np.nonzero((ids == d) & (be.coef[:, slot] != 0))[0]
            if sel.size == 0:
                continue
            pts = be.idx[sel]
            gm = be.coef[sel, slot]
            ip, im, _, _, wp, wm, unit = cache.geometry(be.directions[d], pts)
            wp = np.where(unit, 1.0, wp)
            wm = np.where(unit, 1.0, wm)
            for nb, w in ((ip, wp), (im, wm)):
                ok = nb >= 0
                rows.append(pts[ok])
                cols.append(nb[ok])
                vals.append((gm * w)[ok])
            rows.append(pts)
            cols.append(pts)
            vals.append(-gm * (wp + wm))
    if not rows:
        return sp.csr_matrix(shape)
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=shape
    )


def _row(field: Field, be: BatchEval, k: int) -> dict:
    """Derivative row of entry ``k`` of a batch evaluation, boundary slot
    included."""
    cache = field.cache
    i = int(be.idx[k])
    row: dict = {}

    def add(j, v):
        row[j] = row.get(j, 0.0) + v

    for slot in range(be.act.shape[1]):
        gm = float(be.coef[k, slot])
        if gm == 0:
            continue
        ip, im, _, _, wp, wm, unit = cache.geometry(be.directions[be.act[k, slot]], np.array([i]))
        wp = 1.0 if unit[0] else float(wp[0])
        wm = 1.0 if unit[0] else float(wm[0])
        add(int(ip[0]) if ip[0] >= 0 else -1, gm * wp)
        add(int(im[0]) if im[0] >= 0 else -1, gm * wm)
        add(i, -gm * (wp + wm))
    return row


class Scheme:
    """Common interface of the discrete operators."""

    name = "scheme"
    degenerate_elliptic = True

    def batch(self, field: Field, idx=None) -> BatchEval:
        raise NotImplementedError

    def evaluate(self, field: Field) -> np.ndarray:
        return self.batch(field).values

    def assemble(self, field: Field, rho) -> tuple[np.ndarray, sp.csr_matrix]:
        """Residual ``D u - rho`` and its Jacobian with respect to ``u``."""
        rho = np.asarray(rho, dtype=float)
        if rho.shape != field.values.shape:
            raise ValueError("rho must have one entry per grid point")
        be = self.batch(field)
        n = len(field.values)
        return be.values - rho, _jacobian(field, be, (n, n))

    def point(self, field: Field, i: int) -> SchemeEval:
        be = self.batch(field, np.array([i]))
        active = tuple(be.directions[d] for d, c in zip(be.act[0], be.coef[0]))
        return SchemeEval(float(be.values[0]), active, _row(field, be, 0))


def _full(field, idx):
    return np.arange(len(field.values)) if idx is None else np.asarray(idx, dtype=np.int64)


class FD(Scheme):
    """``D10 D01 - (D11 - D1,-1)^2 / 16``."""

    name = "fd"
    degenerate_elliptic = False
    DIRS = (LatticeVector(1, 0), LatticeVector(0, 1), LatticeVector(1, 1), LatticeVector(1, -1))

    def batch(self, field, idx=None):
        idx = _full(field, idx)
        d10, d01, d11, d1m = (field.diff(e, idx) for e in self.DIRS)
        q = d11 - d1m
        values = d10 * d01 - q * q / 16
        coef = np.stack([d01, d10, -q / 8, q / 8], axis=1)
        table = _DirectionTable()
        ids = [table.id(e) for e in self.DIRS]
        act = np.tile(np.array(ids), (len(idx), 1))
        return BatchEval(idx, values, table.list, act, coef)


class WS(Scheme):
    """Minimum over orthogonal pairs ``(f, g)`` of
    ``max(0, D_f) max(0, D_g) / (|f|^2 |g|^2)``."""

    name = "ws"

    def __init__(self, stencil: Stencil):
        self.stencil = stencil
        self.pairs = orthogonal_pairs(stencil)
        if not self.pairs:
            raise InvalidStencil("the stencil contains no orthogonal pair")

    def batch(self, field, idx=None):
        idx = _full(field, idx)
        table = _DirectionTable()
        cache = {}
        vals, cf, cg = [], [], []
        for f, g in self.pairs:
            for e in (f, g):
                if e not in cache:
                    cache[e] = field.diff(e, idx)
            Df, Dg = cache[f], cache[g]
            s = 1.0 / (norm2(f) * norm2(g))
            pf, pg = np.maximum(Df, 0), np.maximum(Dg, 0)
            vals.append(pf * pg * s)
            cf.append(np.where(Df > 0, pg * s, 0.0))
            cg.append(np.where(Dg > 0, pf * s, 0.0))
        vals = np.array(vals)
        k = np.argmin(vals, axis=0)
        r = np.arange(len(idx))
        ids = np.array([[table.id(f), table.id(g)] for f, g in self.pairs])
        act = ids[k]
        coef = np.stack([np.array(cf)[k, r], np.array(cg)[k, r]], axis=1)
        return BatchEval(idx, vals[k, r], table.list, act, coef)


def superbase_classes(V: Stencil) -> list[tuple[LatticeVector, LatticeVector, LatticeVector]]:
    """Triples ``(e, f, g)``, ``e = f (+) g``, one per superbase of ``V`` up to
    a global sign, in enumeration order."""
    seen, out = set(), []
    for sb in enumerate_superbases(V):
        e, f, g = sb[0], -sb[1], -sb[2]
        key = canonical(e)
        if key in seen:
            continue
        seen.add(key)
        out.append((e, f, g))
    return out


def _lbr_on_stencil(field, idx, V, table):
    """Extensive minimum of ``h`` over the superbases of ``V`` at ``idx``."""
    classes = superbase_classes(V)
    diffs = {}
    for e in V.half():
        diffs[e] = field.diff(e, idx)

    def D(e):
        return diffs[canonical(e)]

    H, A, G = [], [], []
    for e, f, g in classes:
        De, Df, Dg = D(e), D(f), D(g)
        a, b, c = np.maximum(De, 0), np.maximum(Df, 0), np.maximum(Dg, 0)
        H.append(h_values(a, b, c))
        G.append(h_gradient_values(a, b, c) * np.stack([De > 0, Df > 0, Dg > 0]))
        A.append([table.id(e), table.id(f), table.id(g)])
    H = np.array(H)
    k = np.argmin(H, axis=0)
    r = np.arange(len(idx))
    G = np.array(G)  # (classes, 3, points)
    return H[k, r], np.array(A)[k], G[k, :, r]


class LBRExtensive(Scheme):
    """Minimum of ``h(D+_e, D+_f, D+_g)`` over superbases of ``V(x)``."""

    name = "lbr_extensive"

    def __init__(self, family):
        self.family = family

    def batch(self, field, idx=None):
        idx = _full(field, idx)
        table = _DirectionTable()
        values = np.empty(len(idx))
        act = np.zeros((len(idx), 3), dtype=np.int64)
        coef = np.zeros((len(idx), 3))
        fam = self.family
        if isinstance(fam, Stencil):
            groups = [(fam, np.arange(len(idx)))]
        else:
            sid = fam.stencil_id[idx]
            groups = [(fam.stencils[s], np.nonzero(sid == s)[0]) for s in np.unique(sid)]
        for V, sel in groups:
            v, a, c = _lbr_on_stencil(field, idx[sel], V, table)
            values[sel], act[sel], coef[sel] = v, a, c
        return BatchEval(idx, values, table.list, act, coef)


class LBRAdaptive(Scheme):
    """Hierarchical evaluation: each ``V(x)`` is completed by the directions
    ``e = f (+) g`` found by a depth-first walk of the Stern-Brocot tree that
    descends while ``D_e < D_f + D_g`` (and ``x +- e, x +- f, x +- g`` lie in
    the domain).  Directions of ``V(x)`` are always accepted."""

    name = "lbr_adaptive"

    def __init__(self, family: StencilFamily):
        self.family = family

    def batch(self, field, idx=None):
        idx = _full(field, idx)
        grid, fam, u = field.grid, self.family, field.values
        cache = field.cache
        table = _DirectionTable()
        k = len(idx)
        best = np.full(k, np.inf)
        act = np.zeros((k, 3), dtype=np.int64)
        coef = np.zeros((k, 3))
        limit = grid.diameter + 2 + max((np.sqrt(norm2(e)) for e in fam.directions), default=0)

        def inside(e, pts):
            return grid.both_inside(e)[pts]

        def visit(e, f, g, pos, Df, Dg, Of, Og):
            if norm2(e) > limit * limit:
                raise AssertionError(f"adaptive traversal reached {e}, beyond the domain diameter")
            pts = idx[pos]
            inV = fam.membership(e, pts)
            Oe = inside(e, pts)
            inVO = Oe & Of & Og
            need = inV | inVO
            De = np.zeros(len(pos))
            if np.any(need):
                De[need] = cache.diff(u, e, pts[need])
            accept = inV | (inVO & (De < Df + Dg))
            if not np.any(accept):
                return
            pos, De, Df, Dg = pos[accept], De[accept], Df[accept], Dg[accept]
            Oe, Of, Og = Oe[accept], Of[accept], Og[accept]
            a, b, c = np.maximum(De, 0), np.maximum(Df, 0), np.maximum(Dg, 0)
            H = h_values(a, b, c)
            better = H < best[pos]
            if np.any(better):
                w = pos[better]
                best[w] = H[better]
                act[w] = (table.id(e), table.id(f), table.id(g))
                gr = h_gradient_values(a[better], b[better], c[better])
                sign = np.stack([De[better] > 0, Df[better] > 0, Dg[better] > 0])
                coef[w] = (gr * sign).T
            visit(f + e, f, e, pos, Df, De, Of, Oe)
            visit(e + g, e, g, pos, De, Dg, Oe, Og)

        ex, ey = LatticeVector(1, 0), LatticeVector(0, 1)
        D10, D01 = cache.diff(u, ex, idx), cache.diff(u, ey, idx)
        O10, O01 = inside(ex, idx), inside(ey, idx)
        allpos = np.arange(k)
        visit(LatticeVector(1, 1), ex, ey, allpos, D10, D01, O10, O01)
        visit(LatticeVector(-1, 1), ey, -ex, allpos, D01, D10, O01, O10)
        return BatchEval(idx, best, table.list, act, coef)


class Perturbed(Scheme):
    """``D u - eps u``: a strictly proper variant of a degenerate elliptic
    scheme."""

    def __init__(self, scheme: Scheme, eps: float = 0.0):
        self.scheme = scheme
        self.eps = float(eps)
        self.name = scheme.name
        self.degenerate_elliptic = scheme.degenerate_elliptic

    def batch(self, field, idx=None):
        be = self.scheme.batch(field, idx)
        be.values = be.values - self.eps * field.values[be.idx]
        return be

    def assemble(self, field, rho):
        r, J = self.scheme.assemble(field, rho)
        n = len(field.values)
        return r - self.eps * field.values, (J - self.eps * sp.identity(n, format="csr")).tocsr()

    def point(self, field, i):
        ev = self.scheme.point(field, i)
        ev.value -= self.eps * field.values[i]
        ev.derivative[i] = ev.derivative.get(i, 0.0) - self.eps
        return ev


# ---------------------------------------------------------------------------
# Pointwise reference evaluators


def eval_fd(grid: Grid, field: Field, x) -> SchemeEval:
    return FD().point(field, grid.index_of(x))


def eval_ws(grid: Grid, field: Field, x, V: Stencil) -> SchemeEval:
    return WS(V).point(field, grid.index_of(x))


def eval_lbr_extensive(grid: Grid, field: Field, x, V: Stencil) -> SchemeEval:
    return LBRExtensive(V).point(field, grid.index_of(x))


def eval_lbr_adaptive(grid: Grid, field: Field, x, family: StencilFamily) -> SchemeEval:
    """Hierarchical operator at ``x`` by the list-based traversal: ``f`` is the
    current left vector and ``G`` a stack of right vectors; ``e = f + g`` is
    pushed when accepted and otherwise ``f`` advances to the popped ``g``."""
    i = grid.index_of(x)
    pt = np.array([i])
    cache, u = field.cache, field.values
    V = family.stencil_at(i)
    memo: dict = {}

    def D(e):
        c = canonical(e)
        if c not in memo:
            memo[c] = float(cache.diff(u, c, pt)[0])
        return memo[c]

    def inside(e):
        return bool(np.all(grid.lookup([grid.points[i] + np.array(e), grid.points[i] - np.array(e)]) >= 0))

    f = LatticeVector(1, 0)
    G = [LatticeVector(0, 1), LatticeVector(-1, 0)]
    best, active = np.inf, None
    while G:
        g = G[0]
        e = f + g
        if e in V:
            accept = True
        elif inside(e) and inside(f) and inside(g):
            accept = D(e) < D(f) + D(g)
        else:
            accept = False
        if accept:
            G.insert(0, e)
            trip = (max(D(e), 0.0), max(D(f), 0.0), max(D(g), 0.0))
            val = h_func(*trip)
            if val < best:
                best, active = val, (e, f, g)
        else:
            G.pop(0)
            f = g
    e, f, g = active
    Ds = [D(e), D(f), D(g)]
    grad = h_gradient(*(max(d, 0.0) for d in Ds))
    table = _DirectionTable()
    be = BatchEval(
        pt,
        np.array([best]),
        table.list,
        np.array([[table.id(e), table.id(f), table.id(g)]]),
        np.array([[gr if d > 0 else 0.0 for gr, d in zip(grad, Ds)]]),
    )
    return SchemeEval(best, tuple(canonical(v) for v in active), _row(field, be, 0))


# ---------------------------------------------------------------------------
# Operators applied to quadratic functions


@lru_cache(maxsize=2048)
def _stencil_tables(V: Stencil):
    """Direction array of ``V`` (upper half) with superbase triples and
    orthogonal pairs as index arrays into it."""
    half = list(V.half())
    pos = {e: k for k, e in enumerate(half)}
    E = np.array(half, dtype=np.int64).reshape(-1, 2)
    triples = np.array([[pos[canonical(v)] for v in t] for t in superbase_classes(V)], dtype=np.int64)
    pairs = np.array([[pos[f], pos[g]] for f, g in orthogonal_pairs(V)], dtype=np.int64)
    return E, triples.reshape(-1, 3), pairs.reshape(-1, 2)


def _quad_ld(M: SymMatrix2, E):
    m11, m12, m22 = (np.longdouble(v) for v in (M.m11, M.m12, M.m22))
    E = np.asarray(E, dtype=np.longdouble).reshape(-1, 2)
    a, b = E[:, 0], E[:, 1]
    return m11 * a * a + 2 * m12 * a * b + m22 * b * b


def det_ld(M: SymMatrix2):
    m11, m12, m22 = (np.longdouble(v) for v in (M.m11, M.m12, M.m22))
    return m11 * m22 - m12 * m12


def quadratic_value(kind: str, M: SymMatrix2, V: Optional[Stencil] = None):
    """Operator applied to ``u_M(x) = <x, M x>/2``, whose second difference
    along ``e`` is ``<e, M e>`` everywhere.  Extended precision keeps the
    rounding error of the result near ``1e-17`` relative."""
    if kind == "fd":
        d10, d01, d11, d1m = _quad_ld(M, [(1, 0), (0, 1), (1, 1), (1, -1)])
        q = d11 - d1m
        return d10 * d01 - q * q / 16
    if V is None:
        raise ValueError(f"scheme {kind!r} needs a stencil")
    E, triples, pairs = _stencil_tables(V)
    d = np.maximum(_quad_ld(M, E), np.longdouble(0))
    if kind == "ws":
        if len(pairs) == 0:
            raise InvalidStencil("the stencil contains no orthogonal pair")
        n2 = (E[:, 0] ** 2 + E[:, 1] ** 2).astype(np.longdouble)
        return np.min(d[pairs[:, 0]] * d[pairs[:, 1]] / (n2[pairs[:, 0]] * n2[pairs[:, 1]]))
    if kind == "lbr":
        if len(triples) == 0:
            raise InvalidStencil("the stencil contains no superbase")
        return np.min(h_values(d[triples[:, 0]], d[triples[:, 1]], d[triples[:, 2]]))
    raise ValueError(f"unknown scheme {kind!r}")


def relative_consistency_error(kind: str, M: SymMatrix2, V: Optional[Stencil] = None) -> float:
    """``(D u_M - det M) / D u_M``."""
    val = quadratic_value(kind, M, V)
    return float((val - det_ld(M)) / val)
