"""Command line interface: ``malbr {solve,sweep,consistency-map,selftest}``.

Exit codes: 0 on success, 2 for configuration or usage errors, 3 when the
solver fails in ``solve`` mode.
"""

from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path

import numpy as np

from . import selftest
from .errors import ConfigError
from .harness import (
    RunConfig,
    apply_setting,
    consistency_map,
    manifest,
    parse_config,
    run_convergence,
    sweep_csv,
    write_outputs,
)
from .lattice import stencil_with_points


def _load_config(args) -> RunConfig:
    cfg = RunConfig()
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        cfg = parse_config(text, cfg)
    overrides = {
        "case": args.case,
        "scheme": args.scheme,
        "sizes": args.sizes,
        "output.dir": args.out,
    }
    for key, value in overrides.items():
        if value is not None:
            apply_setting(cfg, key, value)
    for item in args.set or []:
        if "=" not in item:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        apply_setting(cfg, key.strip(), value.strip())
    if getattr(args, "jobs", None):
        cfg.jobs = args.jobs
    return cfg.validate()


def _run_sweep(args, command: str) -> int:
    cfg = _load_config(args)
    if command == "solve":
        cfg.sizes = cfg.sizes[:1]
    rows = run_convergence(cfg)
    text = sweep_csv(rows, timings=cfg.timings)
    name = f"{command}_{cfg.case}_{cfg.scheme}"
    path, _ = write_outputs(cfg.output_dir, name, text, manifest(cfg, command))
    sys.stdout.write(text)
    print(f"wrote {path}", file=sys.stderr)
    if command == "solve" and any(r.status != "converged" for r in rows):
        return 3
    return 0


def _run_map(args) -> int:
    if args.kappa_max < 1:
        raise ConfigError("--kappa-max must be >= 1")
    stencil = None if args.scheme == "fd" else stencil_with_points(args.stencil_points)
    kappas = np.linspace(1.0, args.kappa_max, args.kappa_samples)
    thetas = np.linspace(0.0, math.pi, args.theta_samples)
    cmap = consistency_map(args.scheme, stencil, kappas, thetas)
    cfg = RunConfig(scheme=args.scheme if args.scheme != "lbr_extensive" else "lbr", output_dir=args.out or "results")
    extra = {"map": {"scheme": args.scheme, "stencil_points": args.stencil_points,
                     "kappa_max": args.kappa_max, "kappa_samples": args.kappa_samples,
                     "theta_samples": args.theta_samples}}
    name = f"consistency_{args.scheme}_{args.stencil_points}"
    path, _ = write_outputs(cfg.output_dir, name, cmap.to_csv(), manifest(cfg, "consistency-map", extra))
    print(f"wrote {path}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="malbr", description="Monge-Ampere solvers and benchmarks")
    sub = p.add_subparsers(dest="command", required=True)
    for name, helptext in (("solve", "solve one case at one grid size"),
                           ("sweep", "convergence sweep over grid sizes")):
        s = sub.add_parser(name, help=helptext)
        s.add_argument("--config", help="flat key = value configuration file")
        s.add_argument("--case")
        s.add_argument("--scheme")
        s.add_argument("--sizes", help="comma separated grid sizes")
        s.add_argument("--out", help="output directory")
        s.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config key")
        s.add_argument("--jobs", type=int, help="worker processes")
    m = sub.add_parser("consistency-map", help="relative consistency error on quadratic functions")
    m.add_argument("--scheme", choices=["lbr", "ws", "fd"], required=True)
    m.add_argument("--stencil-points", type=int, default=8, choices=[8, 16, 24, 48])
    m.add_argument("--kappa-max", type=float, default=12.0)
    m.add_argument("--kappa-samples", type=int, default=50)
    m.add_argument("--theta-samples", type=int, default=50)
    m.add_argument("--out", help="output directory")
    t = sub.add_parser("selftest", help="run the built-in invariant suite")
    t.add_argument("--seed", type=int, default=0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command in ("solve", "sweep"):
            return _run_sweep(args, args.command)
        if args.command == "consistency-map":
            return _run_map(args)
        return 0 if selftest.run(args.seed) else 1
    except ConfigError as exc:
        print(f"malbr: config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
