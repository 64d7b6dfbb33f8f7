"""Command line: ``evshare gen|solve|check|map``.

Exit codes: 0 success, 2 usage error (including unreadable files), 3 invalid input
(including a failed check), 4 time limit reached without an incumbent.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .bcsa import run_bcsa
from .capacity import capacity_profile
from .enumeration import CatalogTooLarge, run_ee
from .instance import InstanceError, ServiceParameters, generate_synthetic, load_instance, save_instance
from .master import StationError, build_master, node_stations, solve_integer
from .solution import check_solution, solution_from_dict, solution_to_dict, write_solution
from .solver import TIME_LIMIT, SolverError
from .svgmap import write_map

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_NO_INCUMBENT = 0, 2, 3, 4


def _csv(kind):
    def parse(text: str):
        try:
            return [kind(v) for v in text.split(",") if v.strip()]
        except ValueError as exc:
            raise argparse.ArgumentTypeError(str(exc)) from exc

    return parse


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="evshare", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="write a synthetic instance")
    g.add_argument("--nodes", type=_positive_int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--width", type=float, default=5.0, help="km")
    g.add_argument("--height", type=float, default=5.0, help="km")
    g.add_argument("--periods", type=_csv(float), default=[3, 6, 4, 5, 6], help="period lengths in hours")
    g.add_argument("--trips", type=_csv(int), default=[400, 1200, 800, 900, 600], help="trips per period")
    g.add_argument("--decay", type=float, default=1.0, help="gravity decay length, km")
    g.add_argument("--walk-radius", type=float, default=0.5)
    g.add_argument("--budget", type=float, default=None, help="default 0.3 * cost @ capacity")
    g.add_argument("--out", required=True)

    s = sub.add_parser("solve", help="solve an instance")
    s.add_argument("instance")
    s.add_argument("--method", choices=["bcsa", "ee", "nodes"], default="bcsa")
    s.add_argument("--time-limit", type=float, default=None, help="seconds for the integer solve")
    s.add_argument("--cg-time-limit", type=float, default=None, help="seconds for the column generation loop")
    s.add_argument("--max-iterations", type=int, default=None)
    s.add_argument("--threads", type=_positive_int, default=1)
    s.add_argument("--out", default="solution.json")
    s.add_argument("--report", default=None, help="default: <out>.report.json")
    s.add_argument("--map", default=None, help="default: <out>.svg")

    c = sub.add_parser("check", help="re-validate a solution against its instance")
    c.add_argument("instance")
    c.add_argument("solution")

    m = sub.add_parser("map", help="draw a solution as SVG")
    m.add_argument("instance")
    m.add_argument("solution")
    m.add_argument("--out", required=True)
    return ap


def _sibling(out: Path, suffix: str) -> Path:
    return out.with_name(out.stem + suffix)


def cmd_gen(args) -> int:
    if len(args.periods) != len(args.trips):
        print("error: --periods and --trips need the same number of entries", file=sys.stderr)
        return EXIT_USAGE
    base = ServiceParameters(walk_radius=args.walk_radius, budget=args.budget if args.budget is not None else float("inf"))
    net, econ, params = generate_synthetic(
        args.nodes, args.seed, args.width, args.height, args.trips, args.periods, decay_km=args.decay, params=base
    )
    save_instance(args.out, net, econ, params)
    return EXIT_OK


def solve_instance(net, econ, params, method: str, time_limit=None, cg_time_limit=None, max_iterations=None, threads=1):
    """Library entry used by ``solve``: returns (stations, solution, profile, extras)."""
    profile = capacity_profile(net, params)
    extras: dict = {}
    if method == "nodes":
        stations = node_stations(net, econ)
        sol = solve_integer(build_master(net, econ, params, profile, stations, relax=False), time_limit=time_limit)
    elif method == "ee":
        res = run_ee(net, econ, params, profile, time_limit=time_limit, threads=threads)
        stations, sol = res.catalog.stations, res.solution
        extras["catalog"] = res.catalog
    elif method == "bcsa":
        trace = run_bcsa(net, econ, params, profile, max_iterations=max_iterations, time_limit=cg_time_limit,
                         milp_time_limit=time_limit)
        stations, sol = trace.pool, trace.solution
        extras["trace"] = trace
    else:
        raise ValueError(f"unknown method {method!r}")
    return stations, sol, profile, extras


def cmd_solve(args) -> int:
    net, econ, params = load_instance(args.instance)
    t0 = time.perf_counter()
    stations, sol, profile, extras = solve_instance(
        net, econ, params, args.method, args.time_limit, args.cg_time_limit, args.max_iterations, args.threads
    )
    wall = time.perf_counter() - t0
    out = Path(args.out)
    report_path = Path(args.report) if args.report else _sibling(out, ".report.json")
    map_path = Path(args.map) if args.map else _sibling(out, ".svg")
    write_solution(out, solution_to_dict(net, stations, sol, profile, method=args.method))
    write_map(map_path, net, stations, sol.pairs, title=f"{args.method} stations")
    outputs = {"solution": str(out), "report": str(report_path), "map": str(map_path)}
    if "trace" in extras:
        outputs["trace"] = str(extras["trace"].write_jsonl(_sibling(out, ".trace.jsonl")))
    report = {
        "method": args.method,
        "status": sol.status,
        "objective": sol.objective,
        "wall_time": wall,
        "station_count": len(stations),
        "stations_built": int(sum(1 for z in sol.pairs if z > 0.5)),
        "pairs_built": float(sum(sol.pairs)),
        "outputs": outputs,
    }
    if "trace" in extras:
        report["complete"] = extras["trace"].complete
        report["relaxation_objective"] = extras["trace"].relaxation_objective
    Path(report_path).write_text(json.dumps(report, indent=1) + "\n", encoding="utf-8")
    print(json.dumps({k: report[k] for k in ("method", "status", "objective", "station_count")}))
    if sol.status == TIME_LIMIT and sol.trivial:
        print("time limit reached before the solver found an incumbent", file=sys.stderr)
        return EXIT_NO_INCUMBENT
    return EXIT_OK


def cmd_check(args) -> int:
    net, econ, params = load_instance(args.instance)
    doc = json.loads(Path(args.solution).read_text(encoding="utf-8"))
    stations, sol, stored = solution_from_dict(doc, net)
    profile = capacity_profile(net, params)
    results = check_solution(net, econ, params, profile, stations, sol)
    if stored is not None:
        same = tuple(stored.pair_capacity) == tuple(profile.pair_capacity)
        results.insert(0, type(results[0])("capacity profile", same, f"stored {list(stored.pair_capacity)}"))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}: {r.detail}")
    return EXIT_OK if all(r.passed for r in results) else EXIT_INVALID


def cmd_map(args) -> int:
    net, _, _ = load_instance(args.instance)
    doc = json.loads(Path(args.solution).read_text(encoding="utf-8"))
    stations, sol, _ = solution_from_dict(doc, net)
    write_map(args.out, net, stations, sol.pairs, title=doc.get("method", ""))
    return EXIT_OK


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    handlers = {"gen": cmd_gen, "solve": cmd_solve, "check": cmd_check, "map": cmd_map}
    try:
        return handlers[args.command](args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (InstanceError, StationError, CatalogTooLarge, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (SolverError, AssertionError) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
