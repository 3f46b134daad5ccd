"""Benchmark harness: the synthetic test cases on the unit square,
convergence sweeps and consistency maps, with CSV output."""

from __future__ import annotations

import csv
import io
import json
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy

from . import __version__
from .errors import ConfigError, MALBRError, UnknownCase
from .grid import Box, StencilConfig, build_stencil_family, discretize
from .lattice import SymMatrix2, stencil_with_points
from .schemes import FD, WS, LBRAdaptive, LBRExtensive, relative_consistency_error
from .solver import NewtonOptions, damped_newton

# ---------------------------------------------------------------------------
# Test cases


@dataclass
class TestCase:
    """Exact solution ``U``, its Hessian determinant ``rho`` and the boundary
    data ``sigma = U``; all callables take physical points of shape ``(k, 2)``."""

    __test__ = False  # not a pytest class

    name: str
    U: Callable
    rho: Callable
    params: dict = dc_field(default_factory=dict)

    @property
    def sigma(self) -> Callable:
        return self.U


def _radius(P, x0):
    D = np.asarray(P, dtype=float) - np.asarray(x0, dtype=float)
    return np.sqrt(np.einsum("ij,ij->i", D, D))


def _quadratic(kappa=10.0, theta=math.pi / 3):
    M = SymMatrix2.from_kappa_theta(kappa, theta)
    A = M.array()
    return TestCase(
        "quadratic",
        lambda P: 0.5 * np.einsum("ij,jk,ik->i", np.asarray(P, float), A, np.asarray(P, float)),
        lambda P: np.full(len(P), M.det()),
        {"kappa": kappa, "theta": theta},
    )


def _smoothed_cone(delta=0.1, x0=(0.5, 0.5)):
    d2 = delta * delta
    return TestCase(
        "smoothed_cone",
        lambda P: np.sqrt(d2 + _radius(P, x0) ** 2),
        lambda P: d2 / (d2 + _radius(P, x0) ** 2) ** 2,
        {"delta": delta, "x0": list(x0)},
    )


def _flat(r0=0.2, eps=1e-6, x0=(0.5, 0.5)):
    # Radial profile f(r) = (r - r0)_+^2 + eps r^2 / 2; the Hessian determinant
    # of a radial function is f''(r) f'(r) / r.
    def U(P):
        r = _radius(P, x0)
        return np.maximum(r - r0, 0.0) ** 2 + 0.5 * eps * r * r

    def rho(P):
        r = _radius(P, x0)
        outside = r > r0
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(outside, 2 * (r - r0) / np.where(outside, r, 1.0), 0.0)
        return (2.0 * outside + eps) * (ratio + eps)

    return TestCase("flat", U, rho, {"r0": r0, "eps": eps, "x0": list(x0)})


def _singular():
    def U(P):
        P = np.asarray(P, dtype=float)
        return -np.sqrt(2.0 - np.einsum("ij,ij->i", P, P))

    def rho(P):
        P = np.asarray(P, dtype=float)
        return 2.0 / (2.0 - np.einsum("ij,ij->i", P, P)) ** 2

    return TestCase("singular", U, rho, {})


CASES = {
    "quadratic": _quadratic,
    "smoothed_cone": _smoothed_cone,
    "flat": _flat,
    "singular": _singular,
}


def make_case(name: str, **params) -> TestCase:
    try:
        return CASES[name](**params)
    except KeyError:
        raise UnknownCase(f"unknown case {name!r}; choose from {sorted(CASES)}") from None


# ---------------------------------------------------------------------------
# Configuration

SCHEMES = ("lbr", "lbr_extensive", "ws", "fd")


@dataclass
class RunConfig:
    case: str = "quadratic"
    scheme: str = "lbr"
    interior_points: int = 8
    boundary_points: int = 48
    layer: int = 4
    ws_points: int = 48
    sizes: list = dc_field(default_factory=lambda: [17, 33, 65])
    delta: float = 0.7
    tol: float = 1e-10
    max_iterations: int = 200
    output_dir: str = "results"
    timings: bool = True
    jobs: int = 1

    def validate(self) -> "RunConfig":
        if self.case not in CASES:
            raise ConfigError(f"unknown case {self.case!r}; choose from {sorted(CASES)}")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from {list(SCHEMES)}")
        for pts in (self.interior_points, self.boundary_points, self.ws_points):
            try:
                stencil_with_points(pts)
            except MALBRError as exc:
                raise ConfigError(str(exc)) from None
        if not self.sizes or any(n < 4 for n in self.sizes):
            raise ConfigError("sizes must be a nonempty list of integers >= 4")
        if self.layer < 0:
            raise ConfigError("stencil.layer must be nonnegative")
        if not 0 < self.delta < 1:
            raise ConfigError("newton.delta must lie in (0, 1)")
        if self.tol <= 0:
            raise ConfigError("newton.tol must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        return self


# Keys of the flat ``key = value`` config file, with their parsers.
CONFIG_KEYS = {
    "case": ("case", str),
    "scheme": ("scheme", str),
    "stencil.interior_points": ("interior_points", int),
    "stencil.boundary_points": ("boundary_points", int),
    "stencil.layer": ("layer", int),
    "stencil.ws_points": ("ws_points", int),
    "sizes": ("sizes", lambda s: [int(t) for t in s.replace(" ", "").split(",") if t]),
    "newton.delta": ("delta", float),
    "newton.tol": ("tol", float),
    "newton.max_iterations": ("max_iterations", int),
    "output.dir": ("output_dir", str),
    "output.timings": ("timings", lambda s: s.strip().lower() in ("1", "true", "yes", "on")),
    "jobs": ("jobs", int),
}


def parse_config(text: str, base: Optional[RunConfig] = None) -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    cfg = base or RunConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        apply_setting(cfg, key, value, where=f"line {lineno}")
    return cfg


def apply_setting(cfg: RunConfig, key: str, value: str, where: str = "") -> None:
    if key not in CONFIG_KEYS:
        raise ConfigError(f"{where + ': ' if where else ''}unknown key {key!r}")
    attr, conv = CONFIG_KEYS[key]
    try:
        setattr(cfg, attr, conv(value))
    except ValueError as exc:
        raise ConfigError(f"{where + ': ' if where else ''}bad value for {key}: {value!r}") from exc


# ---------------------------------------------------------------------------
# Runs


def make_scheme(name: str, grid, cfg: RunConfig):
    if name == "fd":
        return FD()
    if name == "ws":
        return WS(stencil_with_points(cfg.ws_points))
    stencils = StencilConfig(
        stencil_with_points(cfg.interior_points),
        stencil_with_points(cfg.boundary_points),
        cfg.layer,
    )
    family = build_stencil_family(grid, stencils)
    return LBRAdaptive(family) if name == "lbr" else LBRExtensive(family)


@dataclass
class RunResult:
    case: str
    scheme: str
    n: int
    error_linf: float
    error_l2: float
    error_l1: float
    newton_iters: int
    wall_seconds: float
    status: str
    report: object = None
    values: object = None


def solve_case(case_name: str, scheme_name: str, n: int, cfg: Optional[RunConfig] = None) -> RunResult:
    """Solve one test case on the ``n``-grid of the unit square and measure
    the error against the exact solution at the grid points."""
    cfg = cfg or RunConfig()
    case = make_case(case_name)
    start = time.perf_counter()
    grid = discretize(Box(), n)
    scheme = make_scheme(scheme_name, grid, cfg)
    X = grid.physical()
    rho = grid.scale_h**4 * case.rho(X)
    opts = NewtonOptions(delta=cfg.delta, tol=cfg.tol, max_iterations=cfg.max_iterations)
    nan = float("nan")
    try:
        field, report = damped_newton(grid, scheme, rho, case.sigma, opts)
    except MALBRError as exc:
        state = getattr(exc, "state", None)
        iters = state[1].iterations if state else 0
        return RunResult(case_name, scheme_name, n, nan, nan, nan, iters,
                         time.perf_counter() - start, f"failed:{type(exc).__name__}")
    err = field.values - case.U(X)
    h2 = grid.scale_h**2
    status = "converged" if report.converged else "not_converged"
    return RunResult(
        case_name, scheme_name, n,
        float(np.max(np.abs(err))),
        float(np.sqrt(h2 * np.sum(err * err))),
        float(h2 * np.sum(np.abs(err))),
        report.iterations,
        time.perf_counter() - start,
        status,
        report,
        field.values,
    )


def _solve_job(args):
    case_name, scheme_name, n, cfg = args
    r = solve_case(case_name, scheme_name, n, cfg)
    r.report, r.values = None, None
    return r


SWEEP_COLUMNS = ["case", "scheme", "n", "error_linf", "error_l2", "error_l1",
                 "newton_iters", "wall_seconds", "status"]


def run_convergence(cfg: RunConfig) -> list[RunResult]:
    """Solve ``cfg.case`` with ``cfg.scheme`` at every size; failures become
    rows with a ``failed:...`` status and the sweep goes on."""
    cfg.validate()
    jobs = [(cfg.case, cfg.scheme, n, cfg) for n in cfg.sizes]
    if cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            return list(pool.map(_solve_job, jobs))
    return [_solve_job(j) for j in jobs]


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def sweep_csv(rows: list[RunResult], timings: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow([
            r.case, r.scheme, r.n, _fmt(r.error_linf), _fmt(r.error_l2), _fmt(r.error_l1),
            r.newton_iters, _fmt(r.wall_seconds) if timings else "", r.status,
        ])
    return buf.getvalue()


def convergence_order(sizes, errors) -> float:
    """Least-squares slope of ``log(error)`` against ``log(h)``."""
    h = 1.0 / np.asarray(sizes, dtype=float)
    return float(np.polyfit(np.log(h), np.log(np.asarray(errors, dtype=float)), 1)[0])


# ---------------------------------------------------------------------------
# Consistency maps


@dataclass
class ConsistencyMap:
    kappas: np.ndarray
    thetas: np.ndarray
    errors: np.ndarray  # shape (len(kappas), len(thetas))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["kappa\\theta"] + [repr(float(t)) for t in self.thetas])
        for k, row in zip(self.kappas, self.errors):
            w.writerow([repr(float(k))] + [repr(float(v)) for v in row])
        return buf.getvalue()


def consistency_map(scheme: str, stencil, kappas, thetas) -> ConsistencyMap:
    """Relative error ``(D u_M - det M) / D u_M`` for ``M = M(kappa, theta)``,
    with ``D`` applied to the quadratic ``u_M`` through its exact second
    differences ``<e, M e>``."""
    kappas = np.asarray(kappas, dtype=float)
    thetas = np.asarray(thetas, dtype=float)
    if np.any(kappas < 1):
        raise ValueError("kappa samples must be >= 1")
    kind = "lbr" if scheme.startswith("lbr") else scheme
    E = np.array([
        [relative_consistency_error(kind, SymMatrix2.from_kappa_theta(k, t), stencil) for t in thetas]
        for k in kappas
    ])
    return ConsistencyMap(kappas, thetas, E)


# ---------------------------------------------------------------------------
# Output


def manifest(cfg: RunConfig, command: str, extra: Optional[dict] = None) -> dict:
    m = {
        "command": command,
        "config": asdict(cfg),
        "versions": {
            "malbr": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
    }
    if extra:
        m.update(extra)
    return m


def write_outputs(out_dir, name: str, csv_text: str, man: dict) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    p = out / f"{name}.csv"
    p.write_text(csv_text)
    q = out / f"{name}.manifest.json"
    q.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return p, q
