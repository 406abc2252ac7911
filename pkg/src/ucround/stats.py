"""Experiment harnesses: scaling benchmarks, capacity deltas, load sweeps."""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
import statistics
import time
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import InfeasibleError
from .fleet import DEFAULT_SIGMA_FRACTION, Fleet, replicate_fleet
from .oracle import DEFAULT_N_CAP, exhaustive_uc
from .rounding import rruc

log = logging.getLogger(__name__)

METHODS = ("rruc", "oracle")


@dataclass(frozen=True)
class BenchRecord:
    n_units: int
    method: str
    wall_time: float
    objective: float
    deviation: float = math.nan


@dataclass(frozen=True)
class CompositionRecord:
    load_step: float
    committed_avg_first_step_price: float
    remaining_avg_first_step_price: float
    committed_avg_max_price: float
    remaining_avg_max_price: float
    committed_total_startup: float
    remaining_total_startup: float
    committed_p_min_total: float
    committed_p_max_total: float


def deviation(rruc_objective: float, exact_objective: float) -> float:
    return (rruc_objective - exact_objective) / exact_objective


def _timed(fn, trials: int, warmup: int):
    for _ in range(warmup):
        fn()
    times, result = [], None
    for _ in range(trials):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), result


def bench_scaling(
    base: Fleet,
    multipliers: Sequence[int],
    methods: Iterable[str] = ("rruc",),
    seed: int = 0,
    trials: int = 5,
    warmup: int = 1,
    perturbation: float = 0.01,
    workers: Optional[int] = 1,
    n_cap: int = DEFAULT_N_CAP,
) -> list[BenchRecord]:
    """Replicate ``base`` by each multiplier and time each method.

    Wall time is the median over ``trials`` runs after ``warmup`` discarded
    runs. When both methods run, both records carry the deviation.
    """
    methods = [m for m in METHODS if m in set(methods)]
    unknown = set(methods) - set(METHODS)
    if unknown or not methods:
        raise ValueError(f"methods must be a non-empty subset of {METHODS}")
    if trials < 1 or warmup < 0:
        raise ValueError("need trials >= 1 and warmup >= 0")
    records = []
    for mult in multipliers:
        if int(mult) != mult or mult < 1:
            raise ValueError(f"multiplier must be a positive integer, got {mult}")
        fleet = replicate_fleet(base, int(mult), perturbation, seed)
        if "oracle" in methods and len(fleet) > n_cap:
            raise ValueError(f"oracle requested on {len(fleet)} units; cap is {n_cap}")
        timing = {}
        if "rruc" in methods:
            timing["rruc"] = _timed(lambda: rruc(fleet, workers=workers), trials, warmup)
        if "oracle" in methods:
            timing["oracle"] = _timed(lambda: exhaustive_uc(fleet, n_cap=n_cap, workers=workers), trials, warmup)
        dev = math.nan
        if len(timing) == 2:
            dev = deviation(timing["rruc"][1].objective, timing["oracle"][1].objective)
        for method in methods:
            wall, result = timing[method]
            records.append(BenchRecord(len(fleet), method, wall, result.objective, dev))
            log.info("n=%d %s %.4fs objective=%.6g", len(fleet), method, wall, result.objective)
    return records


def capacity_delta(a, b, fleet: Fleet) -> tuple[float, float]:
    """Relative differences ``(a - b) / b`` of committed sum P_min and sum P_max.

    ``a`` and ``b`` are anything with a binary ``u`` over ``fleet``.
    """
    ua = np.asarray(a.u, dtype=bool)
    ub = np.asarray(b.u, dtype=bool)
    if ua.shape != (len(fleet),) or ub.shape != (len(fleet),):
        raise ValueError("commitments do not match the fleet size")
    if not ub.any():
        raise ZeroDivisionError("reference commitment is empty")
    pmin_a, pmin_b = math.fsum(fleet.p_min[ua]), math.fsum(fleet.p_min[ub])
    pmax_a, pmax_b = math.fsum(fleet.p_max[ua]), math.fsum(fleet.p_max[ub])
    d_min = (pmin_a - pmin_b) / pmin_b if pmin_b else (0.0 if pmin_a == 0 else math.inf)
    return d_min, (pmax_a - pmax_b) / pmax_b


def _mean(values: list[float]) -> float:
    return statistics.fmean(values) if values else math.nan


def composition(fleet: Fleet, u, load: float) -> CompositionRecord:
    """Split the fleet into committed and remaining units and summarise each side."""
    on = [g for g, ui in zip(fleet.generators, u) if ui]
    off = [g for g, ui in zip(fleet.generators, u) if not ui]

    def avg(group, attr):
        return _mean([getattr(g, attr) for g in group if getattr(g, attr) is not None])

    return CompositionRecord(
        load_step=float(load),
        committed_avg_first_step_price=avg(on, "first_step_price"),
        remaining_avg_first_step_price=avg(off, "first_step_price"),
        committed_avg_max_price=avg(on, "max_step_price"),
        remaining_avg_max_price=avg(off, "max_step_price"),
        committed_total_startup=math.fsum(g.startup_cost for g in on),
        remaining_total_startup=math.fsum(g.startup_cost for g in off),
        committed_p_min_total=math.fsum(g.p_min for g in on),
        committed_p_max_total=math.fsum(g.p_max for g in on),
    )


def load_levels(load_start: float, load_step: float, load_end: float) -> list[float]:
    if load_step <= 0:
        raise ValueError("load_step must be positive")
    if load_end < load_start:
        raise ValueError("load_end must be at least load_start")
    count = int(math.floor((load_end - load_start) / load_step * (1 + 1e-12))) + 1
    return [load_start + i * load_step for i in range(count)]


def load_sweep(
    fleet: Fleet,
    load_start: float,
    load_step: float,
    load_end: float,
    sigma_fraction: float = DEFAULT_SIGMA_FRACTION,
    workers: Optional[int] = 1,
    reserve_policy: str = "fleet",
) -> list[CompositionRecord]:
    """Run rruc at each load level and record committed vs remaining composition.

    The sweep stops at the first infeasible level with a warning; records
    already computed are returned.
    """
    records = []
    for load in load_levels(load_start, load_step, load_end):
        level = fleet.with_demand(load, sigma_fraction * load)
        try:
            sol = rruc(level, workers=workers, reserve_policy=reserve_policy)
        except InfeasibleError as exc:
            warnings.warn(f"load sweep truncated at {load:g} MW: {exc}", stacklevel=2)
            break
        records.append(composition(fleet, sol.u, load))
    return records


def _csv_value(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return v


def write_records(records: Sequence, path, record_type=None) -> None:
    """Write dataclass records as CSV with the field names as header."""
    record_type = record_type or (type(records[0]) if records else None)
    if record_type is None:
        raise ValueError("cannot infer columns for an empty record list")
    names = [f.name for f in dataclasses.fields(record_type)]
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for rec in records:
            writer.writerow([_csv_value(getattr(rec, name)) for name in names])


def read_records(path, record_type) -> list:
    types = {f.name: f.type for f in dataclasses.fields(record_type)}
    out = []
    with open(Path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            vals = {}
            for name, raw in row.items():
                kind = types[name]
                if kind in ("int", int):
                    vals[name] = int(raw)
                elif kind in ("str", str):
                    vals[name] = raw
                else:
                    vals[name] = float(raw) if raw != "" else math.nan
            out.append(record_type(**vals))
    return out
