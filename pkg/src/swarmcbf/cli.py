"""Command-line entry point: ``swarmcbf run|presets|compare``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import scenario as scn
from .engine import simulate
from .errors import InvariantViolation, ScenarioError, SimulationAborted
from .output import emit_outputs

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3



def _load(spec: str) -> scn.Scenario:
    """A preset name or a path to a JSON scenario file."""
    if spec in scn.PRESETS and not Path(spec).exists():
        return scn.preset(spec)
    return scn.parse_scenario(spec)


def _cmd_run(args) -> int:
    try:
        sc = _load(args.scenario)
        if args.horizon is not None:
            doc = sc.to_dict()
            doc["horizon"] = args.horizon
            sc = scn.parse_dict(doc)
    except (ScenarioError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID

    world = scn.build_world(sc)
    snap = scn.initial_snapshot(sc, world)
    try:
        metrics = simulate(world, snap, sc.dt, sc.n_steps, sc.settle_tol, sc.settle_window,
                           verify=args.verify, abort_ok=True)
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT

    want_csv = args.csv or not args.svg
    out = Path(args.out) if args.out else Path("runs") / sc.name
    written = emit_outputs(out, sc, world, metrics, csv_files=want_csv, svg=args.svg,
                           frames_stride=args.frames_stride)
    print(f"{sc.name}: {metrics.n_steps} steps, final J = {metrics.final_cost:.6g}, "
          f"settling time = {metrics.settling_time}")
    print(f"wrote {len(written)} files to {out}")
    if metrics.aborted:
        print(f"aborted: {metrics.aborted}", file=sys.stderr)
        return EXIT_INFEASIBLE
    return EXIT_OK


def _cmd_presets(args) -> int:
    if args.show:
        if args.show not in scn.PRESETS:
            print(f"error: unknown preset {args.show!r}", file=sys.stderr)
            return EXIT_INVALID
        print(scn.serialize(scn.preset(args.show)))
        return EXIT_OK
    for name in scn.PRESETS:
        sc = scn.preset(name)
        print(f"{name:20s} task={sc.task:13s} robots={sc.n_robots} horizon={sc.horizon:g}s")
    return EXIT_OK


def _cmd_compare(args) -> int:
    from .compare import compare_tvd

    try:
        sc = _load(args.scenario)
        res = compare_tvd(sc, args.steady_fraction)
    except (ScenarioError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SimulationAborted as exc:
        print(f"aborted: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    print(f"decentralized QP   steady mean ||x-G|| = {res.qp_steady:.6f}  (max mean {res.qp_max_mean:.6f})")
    print(f"truncated series   steady mean ||x-G|| = {res.neumann_steady:.6f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="swarmcbf", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="simulate a scenario file or preset")
    r.add_argument("scenario", help="path to a JSON scenario or a preset name")
    r.add_argument("--out", help="output directory (default runs/<name>)")
    r.add_argument("--frames-stride", type=int, default=100, help="steps between SVG frames")
    r.add_argument("--csv", action="store_true", help="write metrics.csv and trajectory.csv")
    r.add_argument("--svg", action="store_true", help="write SVG frames (and the energy chart)")
    r.add_argument("--verify", action="store_true", help="assert runtime invariants every step")
    r.add_argument("--horizon", type=float, help="override the scenario horizon in seconds")
    r.set_defaults(func=_cmd_run)

    pr = sub.add_parser("presets", help="list built-in scenarios")
    pr.add_argument("--show", metavar="NAME", help="print a preset's full materialized JSON")
    pr.set_defaults(func=_cmd_presets)

    c = sub.add_parser("compare", help="QP vs truncated-series tracking on a tvd_coverage scenario")
    c.add_argument("scenario")
    c.add_argument("--steady-fraction", type=float, default=0.5)
    c.set_defaults(func=_cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
