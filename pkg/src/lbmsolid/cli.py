"""Command line entry point: ``lbmsolid describe`` and ``lbmsolid run``."""

from __future__ import annotations

import argparse
import logging
import sys

from .driver import run
from .scenario import ConfigError, PRESETS, dump_config, open_scenario, resolve

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ABORT = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="lbmsolid",
        description="2D plane-strain elastodynamics with lattice-Boltzmann wave fields.",
    )
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("describe", help="print the resolved scenario and derived parameters")
    d.add_argument("config", help=f"YAML file or preset name ({', '.join(PRESETS)})")
    d.add_argument("--yaml", action="store_true", help="print the full scenario as YAML")

    r = sub.add_parser("run", help="run a scenario and write CSV/VTK output")
    r.add_argument("config", help=f"YAML file or preset name ({', '.join(PRESETS)})")
    r.add_argument("--solver", choices=("lbm", "oracle", "both"), default="lbm")
    r.add_argument("--sync", type=int, metavar="N", help="synchronization period (0 disables)")
    r.add_argument("--out", default="out", metavar="DIR")
    r.add_argument("--snapshot-at", type=float, nargs="+", metavar="T", default=None)
    r.add_argument("--nodes", type=int, help="override the node count along the width")
    r.add_argument("--t-final", type=float, help="override the final time")
    r.add_argument("--serial", action="store_true",
                   help="single-threaded execution (the solvers are serial numpy sweeps)")
    return p


def _describe(args) -> int:
    sc = open_scenario(args.config)
    if args.yaml:
        print(dump_config(sc), end="")
        return EXIT_OK
    res = resolve(sc)
    der = res.derived()
    print(f"scenario {sc.name}: {sc.width} x {sc.height}, {len(sc.holes)} hole(s), "
          f"t_final {sc.t_final}, sync period {sc.sync_period}")
    print(res.lattice.describe())
    print(f"material: lambda={der['lambda']:.6g} mu={der['mu']:.6g} rho={der['rho']:.6g} "
          f"c_d={der['c_d']:.6g} c_s={der['c_s']:.6g}")
    print(f"lbm: a0_phi={der['a0_phi']:.6g} a_phi={der['a_phi']:.6g} "
          f"a0_psi={der['a0_psi']:.6g} a_psi={der['a_psi']:.6g}")
    print(f"dt={der['dt']:.6g} (c_d dt/dh = {der['courant_d']:.6g}), steps={der['n_steps']}")
    for lab, b in sc.boundary.items():
        print(f"  {lab}: {b.type} {b.vector} x {b.load}")
    for name, p in der["probes"].items():
        print(f"  probe {name}: requested {tuple(p['requested'])} -> node {tuple(p['node'])} "
              f"at {tuple(round(c, 12) for c in p['position'])}")
    return EXIT_OK


def _run(args) -> int:
    sc = open_scenario(args.config)
    try:
        sc = sc.with_overrides(nodes=args.nodes, t_final=args.t_final,
                               snapshot_times=args.snapshot_at)
    except ConfigError:
        raise
    manifest = run(sc, args.solver, args.out, sync_period=args.sync, serial=args.serial)
    status = EXIT_OK
    for s, entry in manifest["runs"].items():
        if entry["aborted"]:
            a = entry["aborted"]
            print(f"{s}: aborted at step {a['step']} (t={a['t']:.4g}): {a['reason']}")
            status = EXIT_ABORT
        else:
            print(f"{s}: {entry['steps']} steps to t={entry['t_end']:.4g} "
                  f"in {entry['wall_clock_s']:.1f} s")
    print(f"output in {args.out}")
    return status


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "describe":
            return _describe(args)
        return _run(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValueError as exc:
        # geometry or parameter combinations rejected while building the lattice
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
