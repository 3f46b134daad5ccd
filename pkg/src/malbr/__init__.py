"""Monge-Ampere solvers on Cartesian grids built on lattice basis reduction."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .lattice import (  # noqa: F401
    V8,
    LatticeVector,
    Stencil,
    Superbase,
    SymMatrix2,
    children,
    decompose,
    enumerate_superbases,
    gcd_vec,
    parent,
    polygon_area_oracle,
    selling_reduce,
    stencil_ball,
    stencil_with_points,
)
from .grid import (  # noqa: F401
    Box,
    ConvexPolygon,
    Disk,
    Field,
    Grid,
    StencilConfig,
    StencilFamily,
    boundary_fraction,
    build_stencil_family,
    discretize,
    second_difference,
    v_omega_contains,
)
from .schemes import (  # noqa: F401
    FD,
    WS,
    LBRAdaptive,
    LBRExtensive,
    Perturbed,
    SchemeEval,
    eval_fd,
    eval_lbr_adaptive,
    eval_lbr_extensive,
    eval_ws,
    h_func,
    h_gradient,
)
from .solver import NewtonOptions, NewtonReport, convex_init, damped_newton, sparse_solve  # noqa: F401
