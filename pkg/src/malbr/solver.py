"""Convex initialization from boundary data and the damped Newton solver."""

from __future__ import annotations

import time
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable, Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.spatial import ConvexHull, QhullError

from .errors import InitializationFailed, InvalidProblem, LinearSolveFailed, StallDetected
from .grid import Field, Grid
from .lattice import V8
from .schemes import Scheme, WS

# ---------------------------------------------------------------------------
# Initialization


def _segment_convex(sigma, a, b, eps, samples=64, tol=1e-12) -> bool:
    """Whether ``sigma - eps |x|^2`` is convex along the segment ``[a, b]``,
    judged from second differences of equispaced samples."""
    t = np.linspace(0.0, 1.0, samples + 1)
    P = a[None, :] + t[:, None] * (b - a)[None, :]
    v = np.asarray(sigma(P), dtype=float) - eps * np.einsum("ij,ij->i", P, P)
    d2 = v[:-2] - 2 * v[1:-1] + v[2:]
    scale = max(1.0, float(np.max(np.abs(v))))
    return bool(np.all(d2 >= -tol * scale))


def choose_epsilon(domain_phys, sigma, sweep: Iterable[int] = range(0, 21)) -> float:
    """Largest ``eps = 2^-k * range(sigma)`` keeping ``sigma - eps |x|^2``
    convex on every straight piece of the boundary.

    Raises :class:`InitializationFailed` when ``sigma`` itself is not convex
    on some straight piece.  When ``sigma`` is convex but no ``eps`` of the
    sweep qualifies (``sigma`` affine along a side) the smallest one is used:
    the lower envelope then still yields a strictly convex start.  When
    ``sigma`` is constant on the boundary the sweep is scaled by
    ``max(1, max |sigma|)`` instead of the range.
    """
    samples = domain_phys.boundary_samples(0.01)
    vals = np.asarray(sigma(samples), dtype=float)
    size = max(1.0, float(np.max(np.abs(vals))))
    scale = float(vals.max() - vals.min())
    if scale <= 1e-8 * size:
        # Constant data (up to rounding): measure eps against the data size.
        scale = size
    segs = domain_phys.segments()
    ks = list(sweep)
    for k in ks:
        eps = scale * 2.0**-k
        if all(_segment_convex(sigma, a, b, eps) for a, b in segs):
            return eps
    if all(_segment_convex(sigma, a, b, 0.0) for a, b in segs):
        return scale * 2.0 ** -max(ks)
    raise InitializationFailed("boundary data is not convex along a straight piece of the boundary")


def _boundary_points(grid: Grid, directions) -> np.ndarray:
    """Physical boundary points: a uniform sampling with at least ``8 n``
    points, plus every exit point of the rays ``x + t e`` used by second
    differences."""
    dom = grid.domain
    lo, hi = dom.bounds()
    spacing = min(0.5, 2 * float(np.sum(hi - lo)) / (8 * grid.n))
    pts = [dom.boundary_samples(spacing)]
    dirs = set()
    for e in directions:
        dirs.add((e[0], e[1]))
        dirs.add((-e[0], -e[1]))
    for e in sorted(dirs):
        out = grid.shift(e) < 0
        if np.any(out):
            P = grid.points[out].astype(float)
            t = np.minimum(1.0, dom.exit_fraction(P, e))
            pts.append(P + t[:, None] * np.asarray(e, dtype=float)[None, :])
    return grid.scale_h * np.concatenate(pts)


def lower_envelope(points: np.ndarray, values: np.ndarray, query: np.ndarray) -> np.ndarray:
    """Largest convex function below the data ``(points, values)``, evaluated
    at ``query`` (which must lie in the convex hull of ``points``)."""
    lifted = np.column_stack([points, values])
    try:
        hull = ConvexHull(lifted)
        eq = hull.equations
        lower = eq[eq[:, 2] < -1e-12]
        if len(lower) == 0:
            raise QhullError("no lower facet")
    except QhullError:
        # Coplanar data: the envelope is the least-squares plane itself.
        A = np.column_stack([points, np.ones(len(points))])
        coef = np.linalg.lstsq(A, values, rcond=None)[0]
        return query @ coef[:2] + coef[2]
    # Facet plane n . (x, y, z) + d = 0 gives z = -(n_x x + n_y y + d) / n_z.
    slopes = -lower[:, :2] / lower[:, 2:3]
    offsets = -lower[:, 3] / lower[:, 2]
    out = np.full(len(query), -np.inf)
    for s in range(0, len(query), 2048):
        q = query[s:s + 2048]
        out[s:s + 2048] = np.max(q @ slopes.T + offsets[None, :], axis=1)
    return out


def convex_init(grid: Grid, sigma: Callable, directions: Optional[Iterable] = None,
                eps: Optional[float] = None) -> Field:
    """Strictly convex field matching the boundary data.

    With ``eps`` from :func:`choose_epsilon`, the data ``sigma - eps |x|^2`` is
    extended inside by its lower convex envelope (a lower 3D convex hull of
    the lifted boundary samples) and ``eps |x|^2`` is added back.
    ``directions`` lists the stencil directions whose boundary exit points
    are included among the samples (the eight-point stencil by default).
    """
    directions = list(V8) if directions is None else list(directions)
    if eps is None:
        eps = choose_epsilon(grid.domain_phys, sigma)
    B = _boundary_points(grid, directions)
    lift = np.asarray(sigma(B), dtype=float) - eps * np.einsum("ij,ij->i", B, B)
    X = grid.physical().astype(float)
    values = lower_envelope(B, lift, X) + eps * np.einsum("ij,ij->i", X, X)
    if not np.all(np.isfinite(values)):
        raise InitializationFailed("convex envelope is not finite on the grid")
    field = Field(grid, values, sigma)
    for e in V8.half():
        if not np.all(field.diff(e) > 0):
            raise InitializationFailed(f"initial field is not strictly convex along {e}")
    return field


# ---------------------------------------------------------------------------
# Linear algebra


def sparse_solve(J, r) -> np.ndarray:
    """Solve ``J v = r`` by sparse LU with one step of iterative refinement.

    The normwise backward error ``|J v - r| / (|J| |v| + |r|)`` (infinity
    norms) must not exceed 1e-12.
    """
    J = sp.csc_matrix(J)
    r = np.asarray(r, dtype=float)
    if J.shape[0] != J.shape[1] or J.shape[0] != len(r):
        raise ValueError("J must be square with one row per entry of r")
    try:
        lu = spla.splu(J)
    except RuntimeError as exc:
        raise LinearSolveFailed(f"sparse factorization failed: {exc}") from exc
    v = lu.solve(r)
    v = v + lu.solve(r - J @ v)
    res = np.max(np.abs(J @ v - r), initial=0.0)
    normJ = float(abs(J).sum(axis=1).max()) if J.nnz else 0.0
    denom = normJ * np.max(np.abs(v), initial=0.0) + np.max(np.abs(r), initial=0.0)
    if not np.all(np.isfinite(v)) or res > 1e-12 * max(denom, np.finfo(float).tiny):
        raise LinearSolveFailed(f"linear solve inaccurate (residual {res:.3e})")
    return v


# ---------------------------------------------------------------------------
# Newton


@dataclass
class NewtonOptions:
    """``tol`` is relative: iterations stop once
    ``max |D u - rho| <= tol * max |rho|``.  ``line_search`` is ``"local"``
    (first local minimum in ``k`` of the residual along ``u + delta^k v``) or
    ``"global"`` (best residual over ``k <= k_max``)."""

    delta: float = 0.7
    max_iterations: int = 200
    k_max: int = 40
    tol: float = 1e-10
    require_positivity: Optional[bool] = None
    line_search: str = "local"

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.tol <= 0 or self.k_max < 0 or self.max_iterations < 0:
            raise ValueError("tolerances and iteration counts must be positive")
        if self.line_search not in ("local", "global"):
            raise ValueError("line_search must be 'local' or 'global'")


@dataclass
class NewtonReport:
    iterations: int = 0
    residual_history: list = dc_field(default_factory=list)
    scaled_residual_history: list = dc_field(default_factory=list)
    damping_history: list = dc_field(default_factory=list)
    nonmonotone: list = dc_field(default_factory=list)
    converged: bool = False
    wall_time: float = 0.0
    message: str = ""


def scheme_directions(scheme: Scheme):
    fam = getattr(scheme, "family", None)
    if fam is not None:
        return list(fam.directions) if hasattr(fam, "directions") else list(fam.half())
    if isinstance(scheme, WS):
        return list(scheme.stencil.half())
    return list(V8.half())


def _choose_step(evaluate, n_steps, delta, gate, mode):
    """Pick the damping exponent ``k`` from residuals of ``u + delta^k v``.

    ``evaluate(k)`` returns ``(passes_gate, residual)``.  Returns
    ``(k, residual)`` or ``None`` when no ``k`` passes the gate.
    """
    cache = {}

    def at(k):
        if k not in cache:
            cache[k] = evaluate(k)
        return cache[k]

    if mode == "local":
        first = None
        for k in range(n_steps + 1):
            ok, r = at(k)
            if not ok:
                continue
            if first is None:
                first = k
            if k > first and r > at(k - 1)[1]:
                continue
            if k == n_steps:
                break
            ok1, r1 = at(k + 1)
            if not ok1 or r <= r1:
                return k, r
    candidates = [(r, k) for k in range(n_steps + 1) for ok, r in [at(k)] if ok]
    if not candidates:
        return None
    r, k = min(candidates)
    return k, r


def damped_newton(grid: Grid, scheme: Scheme, rho, sigma: Callable,
                  opts: Optional[NewtonOptions] = None, init: Optional[Field] = None):
    """Solve ``D u = rho`` on the grid, with ``rho`` in lattice units.

    Each step ``u + delta^k v`` uses the Newton direction ``v`` and the
    smallest ``k`` at which the residual is a local minimum in ``k`` among
    the steps keeping ``D u > 0`` everywhere (this positivity gate is skipped
    for the finite-difference scheme).  Returns ``(field, report)``.
    """
    opts = opts or NewtonOptions()
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (len(grid),):
        raise InvalidProblem(f"rho must have {len(grid)} entries")
    if not np.all(rho > 0):
        raise InvalidProblem("the right-hand side must be positive on the grid")
    gate = opts.require_positivity
    if gate is None:
        gate = scheme.degenerate_elliptic
    start = time.perf_counter()
    field = init if init is not None else convex_init(grid, sigma, scheme_directions(scheme))
    h4 = grid.scale_h**4
    target = opts.tol * float(np.max(np.abs(rho)))
    report = NewtonReport()

    def finish(msg):
        report.wall_time = time.perf_counter() - start
        report.message = msg
        return field, report

    while True:
        r, J = scheme.assemble(field, rho)
        res = float(np.max(np.abs(r)))
        report.residual_history.append(res)
        report.scaled_residual_history.append(res / h4)
        if res <= target:
            report.converged = True
            return finish("converged")
        if report.iterations >= opts.max_iterations:
            return finish("iteration limit reached")
        try:
            v = sparse_solve(J, -r)
        except LinearSolveFailed as exc:
            report.wall_time = time.perf_counter() - start
            report.message = str(exc)
            raise LinearSolveFailed(str(exc), state=(field, report)) from exc
        trials = {}

        def evaluate(k):
            cand = field.with_values(field.values + opts.delta**k * v)
            D = scheme.evaluate(cand)
            ok = bool(np.all(D > 0)) if gate else bool(np.all(np.isfinite(D)))
            trials[k] = cand
            return ok, float(np.max(np.abs(D - rho)))

        step = _choose_step(evaluate, opts.k_max, opts.delta, gate, opts.line_search)
        if step is None:
            report.wall_time = time.perf_counter() - start
            report.message = "no damped step keeps the operator positive"
            raise StallDetected(report.message, state=(field, report))
        k, new_res = step
        field = trials[k]
        report.iterations += 1
        report.damping_history.append(k)
        report.nonmonotone.append(new_res >= res)
