"""Economic dispatch of a fixed committed set.

Minimises ``sum(a*P**2 + b*P + c)`` over ``P_min <= P <= P_max`` subject to
``sum(P) >= D``. Costs are nondecreasing in P, so the optimum supplies
exactly ``max(D, sum(P_min))``. Below that the problem is solved exactly by
walking the breakpoints of the aggregate supply function ``S(lambda)``:
quadratic units follow ``clamp((lambda - b) / 2a)``, linear units jump from
P_min to P_max at ``lambda = b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InfeasibleError
from .fleet import Generator, ReserveRequirement

#: relative slack accepted on sum(P_max) >= D before declaring infeasibility
_CAPACITY_RTOL = 1e-12


@dataclass(frozen=True)
class DispatchResult:
    p: np.ndarray
    objective: float
    lam: Optional[float]
    binding: tuple[str, ...]

    @property
    def total(self) -> float:
        return float(np.sum(self.p))


def _supply(lam, p_min, p_max, a, b, quad, inclusive):
    """Aggregate output at price ``lam``; ``inclusive`` puts linear units with b == lam at P_max."""
    out = np.empty_like(p_min)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[quad] = np.clip((lam - b[quad]) / (2.0 * a[quad]), p_min[quad], p_max[quad])
    lin = ~quad
    on = b[lin] <= lam if inclusive else b[lin] < lam
    out[lin] = np.where(on, p_max[lin], p_min[lin])
    return out


def solve_dispatch(p_min, p_max, a, b, c, demand, tie_rank=None) -> DispatchResult:
    """Array kernel behind :func:`dispatch`.

    ``tie_rank`` orders linear units that share the marginal price; the
    lowest rank is filled first. Defaults to position.
    """
    p_min = np.asarray(p_min, dtype=float)
    p_max = np.asarray(p_max, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    n = p_min.size
    if n == 0:
        raise ValueError("dispatch needs at least one committed unit")
    total_min = float(p_min.sum())
    total_max = float(p_max.sum())
    if demand > total_max * (1.0 + _CAPACITY_RTOL):
        raise InfeasibleError(
            f"demand {demand:.6g} MW exceeds committed capacity {total_max:.6g} MW"
        )

    if total_min >= demand:
        p = p_min.copy()
        lam = None
    else:
        demand = min(demand, total_max)
        quad = a > 0
        bps = np.unique(
            np.concatenate(
                (b[quad] + 2.0 * a[quad] * p_min[quad], b[quad] + 2.0 * a[quad] * p_max[quad], b[~quad])
            )
        )
        # smallest breakpoint whose right-limit supply covers demand
        lo, hi = 0, bps.size - 1
        while lo < hi:
            mid = (lo + hi) // 2
            if _supply(bps[mid], p_min, p_max, a, b, quad, True).sum() >= demand:
                hi = mid
            else:
                lo = mid + 1
        k = lo
        lam_k = float(bps[k])
        left = _supply(lam_k, p_min, p_max, a, b, quad, False)
        s_left = float(left.sum())
        if s_left >= demand and k > 0:
            # crossing lies strictly inside (bps[k-1], bps[k]] where S is linear
            lam_prev = float(bps[k - 1])
            s_prev = float(_supply(lam_prev, p_min, p_max, a, b, quad, True).sum())
            if s_left > s_prev:
                lam = lam_prev + (lam_k - lam_prev) * (demand - s_prev) / (s_left - s_prev)
            else:
                lam = lam_k
            lam = min(max(lam, lam_prev), lam_k)
            p = _supply(lam, p_min, p_max, a, b, quad, False)
            lin = ~quad
            p[lin] = np.where(b[lin] <= lam_prev, p_max[lin], p_min[lin])
        else:
            lam = lam_k
            p = left
            ties = np.flatnonzero(~quad & (b == lam_k))
            remaining = demand - s_left
            if tie_rank is not None:
                ties = ties[np.argsort(np.asarray(tie_rank)[ties], kind="stable")]
            for j in ties:
                if remaining <= 0:
                    break
                extra = min(p_max[j] - p_min[j], remaining)
                p[j] = p_min[j] + extra
                remaining -= extra

    objective = float(np.sum(a * p * p + b * p + c))
    mc = 2.0 * a * p + b
    binding = []
    for j in range(n):
        at_lo = p[j] <= p_min[j]
        at_hi = p[j] >= p_max[j]
        if at_lo and at_hi:
            binding.append("upper" if lam is not None and mc[j] <= lam else "lower")
        elif at_lo:
            binding.append("lower")
        elif at_hi:
            binding.append("upper")
        else:
            binding.append("interior")
    p.setflags(write=False)
    return DispatchResult(p=p, objective=objective, lam=lam, binding=tuple(binding))


def dispatch(committed: Sequence[Generator], demand: float) -> DispatchResult:
    """Optimal outputs of ``committed`` units meeting ``demand`` MW.

    Linear-cost units tied at the marginal price are filled in ascending id
    order. Raises InfeasibleError if the committed capacity is short.
    """
    committed = list(committed)
    if not committed:
        raise ValueError("dispatch needs at least one committed unit")
    order = sorted(range(len(committed)), key=lambda j: committed[j].id)
    rank = np.empty(len(committed), dtype=int)
    rank[order] = np.arange(len(committed))
    return solve_dispatch(
        [g.p_min for g in committed],
        [g.p_max for g in committed],
        [g.a for g in committed],
        [g.b for g in committed],
        [g.c for g in committed],
        demand,
        tie_rank=rank,
    )


def check_reserve(committed: Sequence[Generator], requirement: ReserveRequirement) -> bool:
    total = math.fsum(g.p_max for g in committed)
    return total >= requirement.value - 1e-12 * max(1.0, abs(requirement.value))


def kkt_violations(committed: Sequence[Generator], result: DispatchResult, tol: float = 1e-6) -> list[str]:
    """Check the equal-incremental-cost certificate of a dispatch result."""
    out = []
    lam = result.lam
    for g, p, kind in zip(committed, result.p, result.binding):
        if p < g.p_min - 1e-9 * max(1.0, g.p_min) or p > g.p_max + 1e-9 * g.p_max:
            out.append(f"{g.id}: output {p} outside [{g.p_min}, {g.p_max}]")
        if lam is None:
            if kind != "lower":
                out.append(f"{g.id}: demand slack but unit not at P_min")
            continue
        mc = g.marginal_cost(p)
        slack = tol * max(1.0, abs(lam))
        if kind == "interior" and abs(mc - lam) > slack:
            out.append(f"{g.id}: interior marginal cost {mc} != lambda {lam}")
        elif kind == "lower" and mc < lam - slack:
            out.append(f"{g.id}: at P_min with marginal cost {mc} < lambda {lam}")
        elif kind == "upper" and mc > lam + slack:
            out.append(f"{g.id}: at P_max with marginal cost {mc} > lambda {lam}")
    return out
