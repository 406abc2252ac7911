"""Relax-and-round unit commitment.

The relaxed solve ranks units by fractional commitment. Only prefixes of
that ranking are candidate commitments: the shortest prefix meeting the
reserve (length ``m``) and every longer one up to the whole fleet. Each
prefix needs one economic dispatch and the cheapest wins.
"""

from __future__ import annotations

import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .dispatch import solve_dispatch
from .errors import InfeasibleError
from .fleet import Fleet, check_full_fleet_feasible
from .relaxed import RelaxedSolution, solve_relaxed

#: objectives within this relative distance of the best count as tied
TIE_RTOL = 1e-9
#: y values closer than this are treated as equal when ordering
Y_TIE_TOL = 1e-9
_RESERVE_RTOL = 1e-12


@dataclass(frozen=True)
class CommitmentSolution:
    u: np.ndarray
    p: np.ndarray
    objective: float
    k_star: int
    m: int
    order: np.ndarray
    relaxed_objective: float
    wall_time: float
    dispatch_solves: int = 0
    sweep: tuple[tuple[int, float], ...] = field(default=(), repr=False)
    demand_price: Optional[float] = None

    @property
    def committed(self) -> np.ndarray:
        return np.flatnonzero(self.u)

    def to_dict(self, fleet: Fleet, trace: bool = False) -> dict:
        ids = fleet.ids
        out = {
            "u": [int(v) for v in self.u],
            "committed_ids": [ids[i] for i in self.committed],
            "p_mw": [float(v) for v in self.p],
            "objective_usd_per_h": self.objective,
            "relaxed_objective_usd_per_h": self.relaxed_objective,
            "k_star": self.k_star,
            "m": self.m,
            "order": [int(i) for i in self.order],
            "dispatch_solves": self.dispatch_solves,
            "demand_price_usd_per_mwh": self.demand_price,
            "committed_p_min_mw": float(np.sum(fleet.p_min[self.committed])),
            "committed_p_max_mw": float(np.sum(fleet.p_max[self.committed])),
        }
        if trace:
            out["sweep"] = [{"k": k, "objective_usd_per_h": obj} for k, obj in self.sweep]
        return out


Orderer = Callable[[RelaxedSolution, Fleet], np.ndarray]


def order_by_y(relaxed: RelaxedSolution | Sequence[float], fleet: Fleet) -> np.ndarray:
    """Indices sorted by y descending, then cost at P_max ascending, then index.

    ``relaxed`` may be a RelaxedSolution or a bare y vector.
    """
    y = np.asarray(getattr(relaxed, "y", relaxed), dtype=float)
    if y.shape != (len(fleet),):
        raise ValueError(f"y has shape {y.shape}, fleet has {len(fleet)} units")
    # snap to a grid so solver noise does not decide between equal y
    y_key = np.round(y / Y_TIE_TOL)
    cost_max = fleet.a * fleet.p_max**2 + fleet.b * fleet.p_max + fleet.c
    idx = np.arange(len(fleet))
    # lexsort keys run from least to most significant
    return np.lexsort((idx, cost_max, -y_key))


def _requirements(order: np.ndarray, fleet: Fleet, policy: str) -> np.ndarray:
    base = fleet.demand + 3.0 * fleet.sigma_d
    pmax = fleet.p_max[order]
    if policy == "fleet":
        return np.full(len(order), base + float(np.max(fleet.p_max)))
    if policy == "committed":
        return base + np.maximum.accumulate(pmax)
    raise ValueError(f"unknown reserve policy {policy!r}")


def minimal_prefix(order: Sequence[int], fleet: Fleet, policy: str = "fleet") -> int:
    """Smallest m such that the first m units of ``order`` meet the reserve."""
    order = np.asarray(order, dtype=int)
    cum = np.cumsum(fleet.p_max[order])
    req = _requirements(order, fleet, policy)
    ok = np.flatnonzero(cum >= req - _RESERVE_RTOL * np.maximum(1.0, req))
    if ok.size == 0:
        raise InfeasibleError("reserve constraint infeasible: no prefix of the order meets it")
    return int(ok[0]) + 1


def candidate_cuts(m: int, n: int, stride: int = 1) -> list[int]:
    if stride < 1:
        raise ValueError(f"stride must be a positive integer, got {stride}")
    ks = list(range(m, n + 1, stride))
    if ks[-1] != n:
        ks.append(n)
    return ks


def _resolve_workers(workers: Optional[int]) -> int:
    if workers is None or workers <= 0:
        return os.cpu_count() or 1
    return int(workers)


def select_best(objectives: Sequence[tuple[int, float]]) -> tuple[int, float]:
    """Cheapest (k, objective); near-ties go to the smallest k.

    ``objectives`` must be in ascending k; infeasible cuts carry ``inf``.
    """
    finite = [obj for _, obj in objectives if np.isfinite(obj)]
    if not finite:
        raise InfeasibleError("no candidate cut point admits a feasible dispatch")
    best = min(finite)
    limit = best + TIE_RTOL * max(1.0, abs(best))
    for k, obj in objectives:
        if obj <= limit:
            return k, obj
    raise AssertionError("unreachable")


def rruc(
    fleet: Fleet,
    stride: int = 1,
    workers: Optional[int] = 1,
    tol: float = 1e-6,
    max_iter: int = 200,
    relaxation: str = "perspective",
    reserve_policy: str = "fleet",
    orderer: Orderer = order_by_y,
) -> CommitmentSolution:
    """Relax, order, and sweep prefix commitments.

    ``workers`` sizes the thread pool for the sweep (``None`` or 0 means one
    per CPU). The result does not depend on it.
    """
    start = time.perf_counter()
    check_full_fleet_feasible(fleet, reserve_policy)
    relaxed = solve_relaxed(fleet, tol=tol, max_iter=max_iter, relaxation=relaxation, reserve_policy=reserve_policy)
    order = np.asarray(orderer(relaxed, fleet), dtype=int)
    if sorted(order.tolist()) != list(range(len(fleet))):
        raise ValueError("orderer did not return a permutation of the fleet")
    n = len(fleet)
    m = minimal_prefix(order, fleet, reserve_policy)
    ks = candidate_cuts(m, n, stride)

    cols = [np.ascontiguousarray(getattr(fleet, name)[order]) for name in ("p_min", "p_max", "a", "b", "c")]
    id_rank = np.empty(n, dtype=int)
    id_rank[np.argsort(np.array(fleet.ids, dtype=object), kind="stable")] = np.arange(n)
    tie_rank = id_rank[order]

    counter = [0]
    lock = threading.Lock()

    def evaluate(k: int):
        with lock:
            counter[0] += 1
        try:
            return solve_dispatch(*(col[:k] for col in cols), fleet.demand, tie_rank=tie_rank[:k])
        except InfeasibleError:
            return None

    n_workers = _resolve_workers(workers)
    if n_workers == 1 or len(ks) == 1:
        results = [evaluate(k) for k in ks]
    else:
        with ThreadPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(evaluate, ks))

    # reduction in ascending k, independent of completion order
    sweep = tuple((k, r.objective if r is not None else float("inf")) for k, r in zip(ks, results))
    k_star, objective = select_best(sweep)
    best = results[ks.index(k_star)]

    u = np.zeros(n, dtype=np.int8)
    u[order[:k_star]] = 1
    p = np.zeros(n)
    p[order[:k_star]] = best.p
    for arr in (u, p, order):
        arr.setflags(write=False)
    return CommitmentSolution(
        u=u,
        p=p,
        objective=objective,
        k_star=k_star,
        m=m,
        order=order,
        relaxed_objective=relaxed.objective,
        wall_time=time.perf_counter() - start,
        dispatch_solves=counter[0],
        sweep=sweep,
        demand_price=best.lam,
    )


def rruc_with_stride(fleet: Fleet, stride: int, **kwargs) -> CommitmentSolution:
    """Sweep only k in {m, m + stride, ...} plus k = n."""
    return rruc(fleet, stride=stride, **kwargs)
