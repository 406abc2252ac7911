"""Command-line front end.

Exit status: 0 on success, 1 when the problem is infeasible, 2 on bad input.
Every output records the effective configuration with all defaults filled
in. Timings live apart from results (a ``metadata`` field in JSON, a
``.meta.json`` sidecar next to CSV) so repeated runs give identical results.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .costfit import FitOptions, fit_curve, load_curves
from .errors import CurveError, FleetValidationError, InfeasibleError
from .fleet import DEFAULT_SIGMA_FRACTION, Fleet, load_fleet, make_fleet, replicate_fleet, write_fleet
from .oracle import DEFAULT_N_CAP, exhaustive_uc
from .rounding import rruc
from .stats import BenchRecord, CompositionRecord, bench_scaling, deviation, load_sweep, write_records

log = logging.getLogger("ucround")

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT = 0, 1, 2
DEFAULT_SEED = 0


def _positive_int(raw: str) -> int:
    value = int(raw)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {raw}")
    return value


def _positive_float(raw: str) -> float:
    value = float(raw)
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {raw}")
    return value


def _int_list(raw: str) -> list[int]:
    try:
        values = [int(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {raw!r}") from None
    if not values or min(values) < 1:
        raise argparse.ArgumentTypeError("multipliers must be positive integers")
    return values


def _add_fleet_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--fleet", required=True, type=Path, help="fleet file (.csv or .json)")
    p.add_argument("--demand", type=float, help="demand D in MW (default: from JSON, else 0.8 x total P_max)")
    p.add_argument("--sigma", type=float, help="demand standard deviation sigma_D in MW (default: 0.02 x D)")


def _add_solver_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=_positive_float, default=1e-6, help="relaxed-solve KKT tolerance (default 1e-6)")
    p.add_argument("--max-iter", type=_positive_int, default=200, help="relaxed-solve iteration cap (default 200)")
    p.add_argument("--relaxation", choices=("perspective", "bilinear"), default="perspective",
                   help="relaxed formulation (default perspective)")
    p.add_argument("--reserve-policy", choices=("fleet", "committed"), default="fleet",
                   help="range of max P_max in the reserve D + 3 sigma_D + max P_max (default fleet)")
    p.add_argument("--threads", type=int, default=0, help="worker threads, 0 = one per CPU (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ucround",
        description="Relax-and-round unit commitment. Power in MW, costs in USD/h, prices in USD/MWh.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit quadratic costs to bid curves and write a fleet CSV")
    p.add_argument("--curves", required=True, type=Path, help="JSON array of bid curves (MW, USD/MWh, USD/h)")
    p.add_argument("--out", required=True, type=Path, help="fleet file to write (.csv or .json)")
    p.add_argument("--grid-points", type=_positive_int, default=20,
                   help="uniform samples over [eco_min, eco_max] MW, plus breakpoints (default 20)")
    p.add_argument("--amortize-startup", action="store_true",
                   help="add startup cost (USD) to the fixed cost c (USD/h) as a one-hour amortization")
    p.add_argument("--allow-nonmonotone", action="store_true", help="fit curves whose step prices decrease")

    p = sub.add_parser("solve", help="run relax-and-round on a fleet")
    _add_fleet_args(p)
    _add_solver_args(p)
    p.add_argument("--stride", type=_positive_int, default=1, help="check every stride-th cut point (default 1)")
    p.add_argument("--trace", action="store_true", help="include the objective (USD/h) of every cut point")
    p.add_argument("--out", type=Path, help="result JSON (default stdout)")

    p = sub.add_parser("compare", help="run relax-and-round and the exhaustive oracle")
    _add_fleet_args(p)
    _add_solver_args(p)
    p.add_argument("--n-cap", type=_positive_int, default=DEFAULT_N_CAP,
                   help=f"largest fleet the oracle accepts (default {DEFAULT_N_CAP})")
    p.add_argument("--out", type=Path, help="result JSON (default stdout)")

    p = sub.add_parser("bench", help="time methods on replicated fleets")
    _add_fleet_args(p)
    p.add_argument("--multipliers", type=_int_list, default=[1], help="comma-separated replication factors")
    p.add_argument("--methods", default="rruc", help="comma-separated subset of rruc,oracle (default rruc)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"replication seed (default {DEFAULT_SEED})")
    p.add_argument("--deviation", type=float, default=0.01,
                   help="relative parameter perturbation of replicas (default 0.01)")
    p.add_argument("--trials", type=_positive_int, default=5, help="timed runs per point, median kept (default 5)")
    p.add_argument("--warmup", type=int, default=1, help="untimed runs per point (default 1)")
    p.add_argument("--threads", type=int, default=1, help="worker threads, 0 = one per CPU (default 1)")
    p.add_argument("--n-cap", type=_positive_int, default=DEFAULT_N_CAP, help="oracle size cap")
    p.add_argument("--out", required=True, type=Path, help="CSV of BenchRecord rows (wall_time in s)")

    p = sub.add_parser("replicate", help="write a replicated, perturbed fleet")
    _add_fleet_args(p)
    p.add_argument("--multiplier", type=_positive_int, required=True, help="number of copies")
    p.add_argument("--deviation", type=float, default=0.01, help="relative perturbation (default 0.01)")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED, help=f"RNG seed (default {DEFAULT_SEED})")
    p.add_argument("--out", required=True, type=Path, help="fleet file to write (.csv or .json)")

    p = sub.add_parser("sweep-stats", help="composition of committed vs remaining units over load levels")
    p.add_argument("--fleet", required=True, type=Path, help="fleet file (.csv or .json)")
    p.add_argument("--load-start", type=_positive_float, required=True, help="first load level in MW")
    p.add_argument("--load-step", type=_positive_float, required=True, help="load increment in MW")
    p.add_argument("--load-end", type=_positive_float, required=True, help="last load level in MW")
    p.add_argument("--sigma-fraction", type=float, default=DEFAULT_SIGMA_FRACTION,
                   help=f"sigma_D as a fraction of each load level (default {DEFAULT_SIGMA_FRACTION})")
    p.add_argument("--reserve-policy", choices=("fleet", "committed"), default="fleet")
    p.add_argument("--threads", type=int, default=0, help="worker threads, 0 = one per CPU (default 0)")
    p.add_argument("--out", required=True, type=Path, help="CSV of CompositionRecord rows")
    return parser


def _effective_config(args: argparse.Namespace, **resolved) -> dict:
    cfg = {k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(vars(args).items())}
    cfg.pop("verbose", None)
    if "threads" in cfg:
        cfg["threads"] = cfg["threads"] if cfg["threads"] > 0 else (os.cpu_count() or 1)
    cfg.update(resolved)
    return cfg


def _load(args: argparse.Namespace) -> Fleet:
    fleet = load_fleet(args.fleet)
    if args.demand is not None:
        sigma = args.sigma if args.sigma is not None else DEFAULT_SIGMA_FRACTION * args.demand
        return make_fleet(fleet.generators, args.demand, sigma)
    if args.sigma is not None:
        return fleet.with_demand(sigma_d=args.sigma)
    return fleet


def _fleet_summary(fleet: Fleet) -> dict:
    return {"n_units": len(fleet), "demand_mw": fleet.demand, "sigma_d_mw": fleet.sigma_d}


def _emit_json(doc: dict, out: Optional[Path]) -> None:
    text = json.dumps(doc, indent=2, allow_nan=False) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _write_meta(out: Path, config: dict, metadata: dict) -> None:
    meta = out.with_name(out.name + ".meta.json")
    meta.write_text(json.dumps({"config": config, "metadata": metadata}, indent=2) + "\n")


def _cmd_fit(args) -> int:
    curves = load_curves(args.curves)
    opts = FitOptions(args.grid_points, args.amortize_startup, args.allow_nonmonotone)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        reports = [fit_curve(c, opts) for c in curves]
    if not reports:
        raise CurveError(f"{args.curves}: no curves")
    fleet = make_fleet([r.generator for r in reports])
    write_fleet(fleet, args.out)
    units = [{"id": r.generator.id, "r_squared": r.fit.r_squared, "notes": list(r.notes)} for r in reports]
    _write_meta(
        args.out,
        _effective_config(args),
        {"units": units, "min_r_squared": min(r.fit.r_squared for r in reports),
         "warnings": [str(w.message) for w in caught]},
    )
    return EXIT_OK


def _solver_kwargs(args) -> dict:
    return {
        "workers": args.threads,
        "tol": args.tol,
        "max_iter": args.max_iter,
        "relaxation": args.relaxation,
        "reserve_policy": args.reserve_policy,
    }


def _cmd_solve(args) -> int:
    fleet = _load(args)
    sol = rruc(fleet, stride=args.stride, **_solver_kwargs(args))
    doc = {
        "config": _effective_config(args, fleet=_fleet_summary(fleet)),
        "result": sol.to_dict(fleet, trace=args.trace),
        "metadata": {"wall_time_s": sol.wall_time},
    }
    _emit_json(doc, args.out)
    return EXIT_OK


def _cmd_compare(args) -> int:
    fleet = _load(args)
    if len(fleet) > args.n_cap:
        raise ValueError(f"compare needs at most {args.n_cap} units for the oracle, fleet has {len(fleet)}")
    sol = rruc(fleet, **_solver_kwargs(args))
    exact = exhaustive_uc(fleet, n_cap=args.n_cap, workers=args.threads, policy=args.reserve_policy)
    doc = {
        "config": _effective_config(args, fleet=_fleet_summary(fleet)),
        "result": {
            "rruc": sol.to_dict(fleet),
            "oracle": {
                "u": [int(v) for v in exact.u],
                "p_mw": [float(v) for v in exact.p],
                "objective_usd_per_h": exact.objective,
                "evaluated": exact.evaluated,
            },
            "rruc_objective_usd_per_h": sol.objective,
            "oracle_objective_usd_per_h": exact.objective,
            "deviation": deviation(sol.objective, exact.objective),
        },
        "metadata": {"rruc_wall_time_s": sol.wall_time, "oracle_wall_time_s": exact.wall_time},
    }
    _emit_json(doc, args.out)
    return EXIT_OK


def _cmd_bench(args) -> int:
    fleet = _load(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    t0 = time.perf_counter()
    records = bench_scaling(
        fleet, args.multipliers, methods, seed=args.seed, trials=args.trials, warmup=args.warmup,
        perturbation=args.deviation, workers=args.threads, n_cap=args.n_cap,
    )
    write_records(records, args.out, BenchRecord)
    _write_meta(args.out, _effective_config(args, fleet=_fleet_summary(fleet)),
                {"total_wall_time_s": time.perf_counter() - t0})
    return EXIT_OK


def _cmd_replicate(args) -> int:
    fleet = _load(args)
    out = replicate_fleet(fleet, args.multiplier, args.deviation, args.seed)
    write_fleet(out, args.out)
    if args.out.suffix.lower() == ".csv":
        _write_meta(args.out, _effective_config(args, fleet=_fleet_summary(out)), {})
    return EXIT_OK


def _cmd_sweep(args) -> int:
    fleet = load_fleet(args.fleet)
    t0 = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        records = load_sweep(fleet, args.load_start, args.load_step, args.load_end,
                             sigma_fraction=args.sigma_fraction, workers=args.threads,
                             reserve_policy=args.reserve_policy)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    write_records(records, args.out, CompositionRecord)
    _write_meta(args.out, _effective_config(args),
                {"total_wall_time_s": time.perf_counter() - t0, "warnings": [str(w.message) for w in caught]})
    return EXIT_OK


COMMANDS = {
    "fit": _cmd_fit,
    "solve": _cmd_solve,
    "compare": _cmd_compare,
    "bench": _cmd_bench,
    "replicate": _cmd_replicate,
    "sweep-stats": _cmd_sweep,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (FleetValidationError, CurveError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
