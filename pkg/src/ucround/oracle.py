"""Exact unit commitment by exhaustive enumeration of subsets.

Every subset meeting the reserve gets an economic dispatch, except those a
valid lower bound proves cannot win: a committed unit costs at least its
P_min cost, and any output beyond P_min is priced at least at the smallest
P_min marginal cost of the subset. Candidates are visited in bound order,
so the search stops once the bound exceeds the best objective found.
"""

from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .dispatch import solve_dispatch
from .errors import InfeasibleError
from .fleet import Fleet
from .rounding import TIE_RTOL

DEFAULT_N_CAP = 20
_CHUNK = 1 << 15
_BATCH = 64


@dataclass(frozen=True)
class OracleResult:
    u: np.ndarray
    p: np.ndarray
    objective: float
    evaluated: int
    wall_time: float
    dispatch_solves: int = 0


def _subset_bits(masks: np.ndarray, n: int) -> np.ndarray:
    return ((masks[:, None] >> np.arange(n, dtype=np.int64)) & 1).astype(bool)


def _feasible_subsets(fleet: Fleet, policy: str):
    """Masks of reserve-feasible subsets with their dispatch lower bounds."""
    n = len(fleet)
    pmin, pmax, a, b, c = fleet.p_min, fleet.p_max, fleet.a, fleet.b, fleet.c
    base = fleet.demand + 3.0 * fleet.sigma_d
    floor_cost = a * pmin * pmin + b * pmin + c
    mc_floor = 2.0 * a * pmin + b
    masks_out, bounds_out = [], []
    for lo in range(1, 1 << n, _CHUNK):
        masks = np.arange(lo, min(lo + _CHUNK, 1 << n), dtype=np.int64)
        bits = _subset_bits(masks, n)
        cap = bits @ pmax
        if policy == "fleet":
            req = np.full(masks.size, base + float(pmax.max()))
        elif policy == "committed":
            req = base + np.where(bits, pmax, 0.0).max(axis=1)
        else:
            raise ValueError(f"unknown reserve policy {policy!r}")
        ok = (cap >= req - 1e-12 * np.maximum(1.0, req)) & (cap >= fleet.demand)
        if not np.any(ok):
            continue
        bits = bits[ok]
        short = np.maximum(fleet.demand - bits @ pmin, 0.0)
        cheapest = np.where(bits, mc_floor, np.inf).min(axis=1)
        bounds_out.append(bits @ floor_cost + short * cheapest)
        masks_out.append(masks[ok])
    if not masks_out:
        return np.empty(0, dtype=np.int64), np.empty(0)
    return np.concatenate(masks_out), np.concatenate(bounds_out)


def exhaustive_uc(
    fleet: Fleet,
    n_cap: int = DEFAULT_N_CAP,
    workers: Optional[int] = 1,
    policy: str = "fleet",
) -> OracleResult:
    """Global optimum over all 2^n commitments.

    Objectives within a relative 1e-9 of the best are ties, resolved by
    fewest committed units and then the lexicographically smallest u.
    """
    start = time.perf_counter()
    n = len(fleet)
    if n == 0:
        raise ValueError("empty fleet")
    if n > n_cap:
        raise ValueError(f"fleet has {n} units, exhaustive search is capped at {n_cap}")
    masks, bounds = _feasible_subsets(fleet, policy)
    if masks.size == 0:
        raise InfeasibleError("reserve constraint infeasible: no subset of the fleet meets it")
    visit = np.argsort(bounds, kind="stable")
    cols = [fleet.p_min, fleet.p_max, fleet.a, fleet.b, fleet.c]
    id_rank = np.empty(n, dtype=int)
    id_rank[np.argsort(np.array(fleet.ids, dtype=object), kind="stable")] = np.arange(n)

    def evaluate(mask: int):
        idx = np.flatnonzero(_subset_bits(np.array([mask], dtype=np.int64), n)[0])
        res = solve_dispatch(*(col[idx] for col in cols), fleet.demand, tie_rank=id_rank[idx])
        return idx, res

    n_workers = (os.cpu_count() or 1) if not workers or workers <= 0 else workers
    pool = ThreadPoolExecutor(max_workers=n_workers) if n_workers > 1 else None
    scored = []
    best = np.inf
    solves = 0
    try:
        for lo in range(0, visit.size, _BATCH):
            batch = visit[lo:lo + _BATCH]
            limit = best + 2 * TIE_RTOL * max(1.0, abs(best)) if np.isfinite(best) else np.inf
            batch = batch[bounds[batch] <= limit]
            if batch.size == 0:
                break
            mapper = pool.map if pool is not None else map
            for mask, (idx, res) in zip(masks[batch], mapper(evaluate, masks[batch].tolist())):
                solves += 1
                scored.append((res.objective, int(mask), idx, res.p))
                best = min(best, res.objective)
    finally:
        if pool is not None:
            pool.shutdown()

    limit = best + TIE_RTOL * max(1.0, abs(best))

    def key(item):
        _, mask, idx, _ = item
        # lexicographically smallest u: compare u_1 first, 0 before 1
        u = np.zeros(n, dtype=np.int8)
        u[idx] = 1
        return (idx.size, tuple(u.tolist()))

    winner = min((s for s in scored if s[0] <= limit), key=key)
    objective, _, idx, p_sub = winner
    u = np.zeros(n, dtype=np.int8)
    u[idx] = 1
    p = np.zeros(n)
    p[idx] = p_sub
    return OracleResult(
        u=u,
        p=p,
        objective=float(objective),
        evaluated=int(masks.size),
        wall_time=time.perf_counter() - start,
        dispatch_solves=solves,
    )
