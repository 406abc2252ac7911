"""Independent feasibility checker for commitments.

Deliberately plain Python over Generator objects: no numpy, no shared code
with the solvers, so a bookkeeping bug there cannot hide here.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

from .fleet import Fleet


def verify_commitment(
    fleet: Fleet,
    u: Sequence[int],
    p: Sequence[float],
    objective: Optional[float] = None,
    policy: str = "fleet",
    rtol: float = 1e-9,
) -> list[str]:
    """Return every violated constraint; an empty list means feasible."""
    gens = fleet.generators
    u = [int(v) for v in u]
    p = [float(v) for v in p]
    problems = []
    if len(u) != len(gens) or len(p) != len(gens):
        return [f"length mismatch: {len(u)} commitments, {len(p)} outputs, {len(gens)} units"]

    committed = []
    for g, ui, pi in zip(gens, u, p):
        if ui not in (0, 1):
            problems.append(f"{g.id}: commitment {ui} is not binary")
            continue
        if ui == 0:
            if pi != 0.0:
                problems.append(f"{g.id}: uncommitted unit has output {pi}")
            continue
        committed.append(g)
        slack = rtol * max(1.0, g.p_max)
        if pi < g.p_min - slack:
            problems.append(f"{g.id}: output {pi} below P_min {g.p_min}")
        if pi > g.p_max + slack:
            problems.append(f"{g.id}: output {pi} above P_max {g.p_max}")

    if not committed:
        problems.append("no unit committed")
        return problems

    supplied = math.fsum(pi for ui, pi in zip(u, p) if ui == 1)
    if supplied < fleet.demand - rtol * max(1.0, fleet.demand):
        problems.append(f"demand: supplied {supplied} MW < D = {fleet.demand} MW")

    if policy == "fleet":
        largest = max(g.p_max for g in gens)
    elif policy == "committed":
        largest = max(g.p_max for g in committed)
    else:
        raise ValueError(f"unknown reserve policy {policy!r}")
    required = fleet.demand + 3.0 * fleet.sigma_d + largest
    capacity = math.fsum(g.p_max for g in committed)
    if capacity < required - rtol * max(1.0, required):
        problems.append(f"reserve: committed P_max {capacity} MW < requirement {required} MW")

    if objective is not None:
        cost = math.fsum(g.a * pi * pi + g.b * pi + g.c for g, ui, pi in zip(gens, u, p) if ui == 1)
        if abs(cost - objective) > 1e-9 * max(1.0, abs(cost)):
            problems.append(f"objective: reported {objective} but outputs cost {cost}")
    return problems
