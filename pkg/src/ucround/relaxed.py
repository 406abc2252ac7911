"""Continuous relaxation of the commitment problem.

Commitment ``u_i`` in {0, 1} is relaxed to ``y_i`` in [0, 1]. Written with
``q_i = y_i * P_i`` the relaxed cost becomes the perspective

    a_i * q_i**2 / y_i + b_i * q_i + c_i * y_i

which is jointly convex, so an interior-point method reaches the global optimum and
the result is a true lower bound on every binary commitment. The literal
bilinear form ``y_i * (a_i P_i**2 + b_i P_i + c_i)`` is available as a local
solve for comparison.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import minimize, nnls

from .dispatch import solve_dispatch
from .errors import InfeasibleError
from .fleet import Fleet, check_full_fleet_feasible

log = logging.getLogger(__name__)

#: smoothing added to y in the perspective denominator
EPS = 1e-8
#: units below this commitment report P = P_min
Y_FLOOR = 1e-6
#: minimum width of the q-interval of a unit with P_min == P_max (scaled units)
_MIN_WIDTH = 1e-7


@dataclass(frozen=True)
class RelaxedSolution:
    """Fractional commitments and dispatch of the relaxed problem.

    ``objective`` is ``sum(y * cost(p))`` in USD/h. ``dual_bound`` is the
    Lagrangian bound at the returned demand and reserve prices; it never
    exceeds the relaxed optimum.
    """

    y: np.ndarray
    p: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    demand_price: float = 0.0
    reserve_price: float = 0.0
    dual_bound: float = -math.inf
    relaxation: str = "perspective"


def relaxation_reserve(fleet: Fleet, policy: str = "fleet") -> float:
    """Reserve level enforced in the relaxation.

    Under the committed-set policy the true requirement depends on the
    commitment; the smallest P_max in the fleet keeps the relaxation valid.
    """
    base = fleet.demand + 3.0 * fleet.sigma_d
    if policy == "fleet":
        return base + float(np.max(fleet.p_max))
    if policy == "committed":
        return base + float(np.min(fleet.p_max))
    raise ValueError(f"unknown reserve policy {policy!r}")


def lagrangian_bound(fleet: Fleet, demand_price: float, reserve_price: float, reserve: float) -> float:
    """Dual function of the perspective relaxation at the given prices.

    Each unit independently chooses ``y`` in [0, 1] and output in its
    bounds, so the per-unit term is ``min(0, min_p cost(p) - lam*p - nu*P_max)``.
    """
    lam, nu = max(demand_price, 0.0), max(reserve_price, 0.0)
    a, b, c = fleet.a, fleet.b, fleet.c
    lo, hi = fleet.p_min, fleet.p_max
    with np.errstate(divide="ignore", invalid="ignore"):
        p_star = np.where(a > 0, (lam - b) / (2.0 * np.where(a > 0, a, 1.0)), np.where(b < lam, hi, lo))
    p_star = np.clip(p_star, lo, hi)
    unit = a * p_star**2 + (b - lam) * p_star + c - nu * hi
    return lam * fleet.demand + nu * reserve + float(np.minimum(unit, 0.0).sum())


class _Scaled:
    """Dimensionless copy of the problem data."""

    def __init__(self, fleet: Fleet, reserve: float):
        self.p_scale = float(np.max(fleet.p_max))
        cost_at_max = fleet.a * fleet.p_max**2 + fleet.b * fleet.p_max + fleet.c
        self.f_scale = float(np.mean(cost_at_max)) or 1.0
        ps, fs = self.p_scale, self.f_scale
        self.cap = fleet.p_max / ps
        self.hi = self.cap.copy()
        lo = fleet.p_min / ps
        narrow = self.hi - lo < _MIN_WIDTH
        # widening the q-interval only enlarges the feasible set
        self.lo = np.where(narrow, np.maximum(self.hi - _MIN_WIDTH, 0.0), lo)
        self.a = fleet.a * ps * ps / fs
        self.b = fleet.b * ps / fs
        self.c = fleet.c / fs
        self.demand = fleet.demand / ps
        self.reserve = reserve / ps


class _Barrier:
    """Log-barrier Newton method on the perspective problem.

    All constraints are linear and iterates stay strictly feasible. The
    Newton matrix is block diagonal (one 2x2 block per unit) plus a rank-2
    term from the demand and reserve rows, so each step costs O(n) through
    the Woodbury identity. With ``free_y=False`` the commitments are frozen
    and only q moves.

    The residual is a relative optimality bound: half the squared Newton
    decrement (distance to the barrier minimiser) plus the barrier duality
    gap ``m * mu``, both over ``max(1, |f|)``.
    """

    def __init__(self, data: _Scaled, y0, q0, free_y: bool = True):
        self.d = data
        self.free_y = free_y
        self.y = np.array(y0, dtype=float)
        self.q = np.array(q0, dtype=float)
        n = self.y.size
        self.m = 4 * n + 2 if free_y else 2 * n + 1

    def slacks(self, y, q):
        d = self.d
        s = [q - d.lo * y, d.hi * y - q, np.atleast_1d(q.sum() - d.demand)]
        if self.free_y:
            s += [y, 1.0 - y, np.atleast_1d(d.cap @ y - d.reserve)]
        return s

    def slack_directions(self, dy, dq):
        d = self.d
        ds = [dq - d.lo * dy, d.hi * dy - dq, np.atleast_1d(dq.sum())]
        if self.free_y:
            ds += [dy, -dy, np.atleast_1d(d.cap @ dy)]
        return ds

    def objective(self, y, q):
        d = self.d
        return float(np.sum(d.a * q * q / (y + EPS) + d.b * q + d.c * y))

    def barrier(self, y, q, mu):
        s = self.slacks(y, q)
        if any(np.any(si <= 0) for si in s):
            return math.inf
        return self.objective(y, q) - mu * sum(float(np.log(si).sum()) for si in s)

    def newton(self, mu):
        """Newton direction of the barrier function and its decrement squared."""
        d, y, q = self.d, self.y, self.q
        w = y + EPS
        s = self.slacks(y, q)
        s1, s2, s5 = s[0], s[1], s[2][0]
        gq = 2.0 * d.a * q / w + d.b - mu * (1.0 / s1 - 1.0 / s2 + 1.0 / s5)
        hqq = 2.0 * d.a / w + mu * (1.0 / s1**2 + 1.0 / s2**2)
        w5 = mu / s5**2
        if not self.free_y:
            hinv = 1.0 / hqq
            d0 = -gq * hinv
            dq = d0 - hinv * (d0.sum() / (1.0 / w5 + hinv.sum()))
            return np.zeros_like(y), dq, -float(gq @ dq)

        s3, s4, s6 = s[3], s[4], s[5][0]
        gy = -d.a * q * q / (w * w) + d.c - mu * (
            -d.lo / s1 + d.hi / s2 + 1.0 / s3 - 1.0 / s4 + d.cap / s6
        )
        hyy = 2.0 * d.a * q * q / w**3 + mu * (
            d.lo**2 / s1**2 + d.hi**2 / s2**2 + 1.0 / s3**2 + 1.0 / s4**2
        )
        hyq = -2.0 * d.a * q / w**2 - mu * (d.lo / s1**2 + d.hi / s2**2)
        w6 = mu / s6**2
        det = hyy * hqq - hyq * hyq

        def block_solve(ry, rq):
            return (hqq * ry - hyq * rq) / det, (hyy * rq - hyq * ry) / det

        cap = d.cap
        dy0, dq0 = block_solve(-gy, -gq)
        z5y, z5q = block_solve(np.zeros_like(cap), np.ones_like(cap))
        z6y, z6q = block_solve(cap, np.zeros_like(cap))
        k = np.array(
            [
                [1.0 / w5 + z5q.sum(), z6q.sum()],
                [cap @ z5y, 1.0 / w6 + cap @ z6y],
            ]
        )
        alpha = np.linalg.solve(k, [dq0.sum(), cap @ dy0])
        dy = dy0 - alpha[0] * z5y - alpha[1] * z6y
        dq = dq0 - alpha[0] * z5q - alpha[1] * z6q
        return dy, dq, -float(gy @ dy + gq @ dq)

    def max_step(self, dy, dq):
        step = 1.0
        for si, dsi in zip(self.slacks(self.y, self.q), self.slack_directions(dy, dq)):
            neg = dsi < 0
            if np.any(neg):
                step = min(step, 0.99 * float(np.min(-si[neg] / dsi[neg])))
        return step

    def duals(self, mu):
        s = self.slacks(self.y, self.q)
        z5 = mu / float(s[2][0])
        z6 = mu / float(s[5][0]) if self.free_y else 0.0
        return z5, z6

    def polish(self, mu, max_steps: int = 12) -> int:
        """Extra centering at the final mu; duals mu/s need a tightly centred iterate.

        Barrier values are at rounding level here, so full Newton steps are
        accepted while the decrement keeps shrinking.
        """
        steps = 0
        dy, dq, dec2 = self.newton(mu)
        floor = 1e-18 * max(1.0, abs(self.objective(self.y, self.q)))
        while steps < max_steps and math.isfinite(dec2) and dec2 > floor:
            step = self.max_step(dy, dq)
            saved = self.y, self.q
            self.y, self.q = self.y + step * dy, self.q + step * dq
            dy_n, dq_n, dec2_n = self.newton(mu)
            if not (math.isfinite(dec2_n) and dec2_n < dec2):
                self.y, self.q = saved
                break
            dy, dq, dec2 = dy_n, dq_n, dec2_n
            steps += 1
        return steps

    def run(self, tol: float, max_iter: int):
        scale = lambda: max(1.0, abs(self.objective(self.y, self.q)))
        mu = scale() / self.m
        iterations = 0
        while True:
            while True:
                dy, dq, dec2 = self.newton(mu)
                # centred in the self-concordant sense, or at rounding level
                if not math.isfinite(dec2) or dec2 <= min(1e-2 * mu, 0.5 * tol * scale()) \
                        or dec2 <= 1e-15 * scale():
                    break
                if iterations >= max_iter:
                    break
                step = self.max_step(dy, dq)
                phi0 = self.barrier(self.y, self.q, mu)
                while step > 1e-14:
                    trial = self.barrier(self.y + step * dy, self.q + step * dq, mu)
                    if trial <= phi0 - 1e-4 * step * dec2:
                        break
                    step *= 0.5
                iterations += 1
                if step <= 1e-14:
                    break
                self.y = self.y + step * dy
                self.q = self.q + step * dq
            res = (0.5 * max(dec2, 0.0) + self.m * mu) / scale()
            if res <= tol:
                iterations += self.polish(mu)
                return True, iterations, res, mu
            if iterations >= max_iter or not math.isfinite(dec2):
                return False, iterations, res, mu
            floor = 0.5 * tol * scale() / self.m
            mu = max(0.1 * mu, floor) if mu > floor else 0.1 * mu


def _interior_start(data: _Scaled, y_fixed: Optional[np.ndarray] = None):
    cap_total = float(data.cap.sum())
    if y_fixed is None:
        slack = (cap_total - data.reserve) / cap_total
        theta = min(0.1, 0.5 * slack)
        y = np.full(data.cap.size, 1.0 - theta)
    else:
        y = np.asarray(y_fixed, dtype=float)
    s_min = float(data.lo @ y)
    s_max = float(data.hi @ y)
    target = 0.5 * (data.demand + s_max)
    alpha = (target - s_min) / (s_max - s_min) if target > s_min else 0.5
    q = y * (data.lo + alpha * (data.hi - data.lo))
    return y, q


def _recover(fleet: Fleet, data: _Scaled, y, q):
    y = np.clip(y, 0.0, 1.0)
    p = np.clip(q * data.p_scale / np.maximum(y, EPS), fleet.p_min, fleet.p_max)
    p = np.where(y < Y_FLOOR, fleet.p_min, p)
    cost = fleet.a * p * p + fleet.b * p + fleet.c
    return y, p, float(np.sum(y * cost))


def _solve_perspective(fleet: Fleet, reserve: float, tol: float, max_iter: int) -> RelaxedSolution:
    data = _Scaled(fleet, reserve)
    cap_total = float(data.cap.sum())
    if cap_total - data.reserve <= 1e-9 * cap_total:
        # reserve row forces every unit fully on
        res = solve_dispatch(fleet.p_min, fleet.p_max, fleet.a, fleet.b, fleet.c, fleet.demand)
        y = np.ones(len(fleet))
        lam = res.lam or 0.0
        return RelaxedSolution(
            y=y, p=np.array(res.p), objective=res.objective, kkt_residual=0.0,
            iterations=0, converged=True, demand_price=lam, reserve_price=0.0,
            dual_bound=res.objective,
        )
    y0, q0 = _interior_start(data)
    solver = _Barrier(data, y0, q0)
    converged, iterations, res, mu = solver.run(tol, max_iter)
    if not converged:
        log.warning("relaxed solve hit the iteration limit (%d) with residual %.3g", max_iter, res)
    z5, z6 = solver.duals(mu)
    lam, nu, bound = _refine_prices(
        fleet, z5 * data.f_scale / data.p_scale, z6 * data.f_scale / data.p_scale, reserve
    )
    y, p, obj = _recover(fleet, data, solver.y, solver.q)
    return RelaxedSolution(
        y=y, p=p, objective=obj, kkt_residual=res, iterations=iterations,
        converged=converged, demand_price=lam, reserve_price=nu, dual_bound=bound,
    )


def _refine_prices(fleet: Fleet, lam: float, nu: float, reserve: float):
    """Polish the barrier's price estimates by maximising the dual function.

    ``mu / slack`` loses accuracy once the demand slack is near rounding
    level, so the estimate only seeds a 2-D concave maximisation. Any
    nonnegative prices give a valid bound; the best one found is kept.
    """
    mc_max = float(np.max(2.0 * fleet.a * fleet.p_max + fleet.b))
    seeds = [(lam, nu), (min(lam, mc_max), min(nu, mc_max)), (mc_max / 2, 0.0)]

    def neg(x):
        return -lagrangian_bound(fleet, abs(x[0]), abs(x[1]), reserve)

    best = max(seeds, key=lambda s: -neg(s))
    best_val = -neg(best)
    step = max(1.0, 0.05 * (abs(best[0]) + abs(best[1])))
    simplex = [best, (best[0] + step, best[1]), (best[0], best[1] + step)]
    r = minimize(neg, best, method="Nelder-Mead",
                 options={"initial_simplex": simplex, "xatol": 1e-9,
                          "fatol": 1e-12 * max(1.0, abs(best_val)), "maxiter": 2000})
    if -r.fun > best_val:
        best, best_val = (abs(r.x[0]), abs(r.x[1])), -r.fun
    return float(best[0]), float(best[1]), float(best_val)


def solve_fixed_commitment(fleet: Fleet, y, tol: float = 1e-6, max_iter: int = 200) -> RelaxedSolution:
    """Optimise dispatch only, with commitments frozen at ``y``.

    Runs the same barrier machinery as the relaxed solve on the q block
    alone; with ``y`` all ones it is an independent route to the
    full-fleet economic dispatch.
    """
    y = np.asarray(y, dtype=float)
    if float(fleet.p_max @ y) < fleet.demand:
        raise InfeasibleError("frozen commitment cannot cover demand")
    data = _Scaled(fleet, 0.0)
    y0, q0 = _interior_start(data, y)
    solver = _Barrier(data, y0, q0, free_y=False)
    converged, iterations, res, mu = solver.run(tol, max_iter)
    z5, _ = solver.duals(mu)
    y, p, obj = _recover(fleet, data, solver.y, solver.q)
    return RelaxedSolution(
        y=y, p=p, objective=obj, kkt_residual=res, iterations=iterations,
        converged=converged, demand_price=z5 * data.f_scale / data.p_scale,
    )


def _solve_bilinear(fleet: Fleet, reserve: float, tol: float, max_iter: int) -> RelaxedSolution:
    n = len(fleet)
    ps = float(np.max(fleet.p_max))
    fs = float(np.mean(fleet.a * fleet.p_max**2 + fleet.b * fleet.p_max + fleet.c)) or 1.0
    a, b, c = fleet.a * ps * ps / fs, fleet.b * ps / fs, fleet.c / fs
    lo, hi = fleet.p_min / ps, fleet.p_max / ps
    demand, res_req = fleet.demand / ps, reserve / ps

    def fun(x):
        y, p = x[:n], x[n:]
        return float(np.sum(y * (a * p * p + b * p + c)))

    def jac(x):
        y, p = x[:n], x[n:]
        return np.concatenate((a * p * p + b * p + c, y * (2.0 * a * p + b)))

    cons = [
        {"type": "ineq", "fun": lambda x: np.array([x[:n] @ x[n:] - demand]),
         "jac": lambda x: np.concatenate((x[n:], x[:n]))[None, :]},
        {"type": "ineq", "fun": lambda x: np.array([hi @ x[:n] - res_req]),
         "jac": lambda x: np.concatenate((hi, np.zeros(n)))[None, :]},
    ]
    bounds = [(0.0, 1.0)] * n + list(zip(lo, hi))
    x0 = np.concatenate((np.ones(n), np.clip(np.full(n, demand / n), lo, hi)))
    if x0[n:].sum() < demand:
        x0[n:] = hi
    out = minimize(fun, x0, jac=jac, method="SLSQP", bounds=bounds, constraints=cons,
                   options={"maxiter": max_iter, "ftol": tol * 1e-3})
    x = out.x
    y = np.clip(x[:n], 0.0, 1.0)
    p = np.clip(x[n:] * ps, fleet.p_min, fleet.p_max)
    p = np.where(y < Y_FLOOR, fleet.p_min, p)
    res = _bilinear_residual(x, jac(x), lo, hi, demand, res_req, n)
    obj = float(np.sum(y * (fleet.a * p * p + fleet.b * p + fleet.c)))
    return RelaxedSolution(
        y=y, p=p, objective=obj, kkt_residual=res, iterations=int(out.nit),
        converged=bool(out.success) and res <= tol, relaxation="bilinear",
    )


def _bilinear_residual(x, grad, lo, hi, demand, reserve, n, active_tol=1e-7) -> float:
    """Stationarity residual with multipliers fitted by NNLS on the active set."""
    y, p = x[:n], x[n:]
    rows = []
    for i in range(n):
        if y[i] <= active_tol:
            rows.append(("e", i, 1.0))
        if y[i] >= 1.0 - active_tol:
            rows.append(("e", i, -1.0))
        if p[i] <= lo[i] + active_tol:
            rows.append(("e", n + i, 1.0))
        if p[i] >= hi[i] - active_tol:
            rows.append(("e", n + i, -1.0))
    cols = []
    for _, j, sign in rows:
        col = np.zeros(2 * n)
        col[j] = sign
        cols.append(col)
    if y @ p - demand <= active_tol * max(1.0, demand):
        cols.append(np.concatenate((p, y)))
    if hi @ y - reserve <= active_tol * max(1.0, reserve):
        cols.append(np.concatenate((hi, np.zeros(n))))
    if cols:
        g_mat = np.column_stack(cols)
        _, rnorm = nnls(g_mat, grad)
        r = rnorm
    else:
        r = float(np.linalg.norm(grad))
    return float(r) / (1.0 + float(np.max(np.abs(grad))))


def solve_relaxed(
    fleet: Fleet,
    tol: float = 1e-6,
    max_iter: int = 200,
    relaxation: str = "perspective",
    reserve_policy: str = "fleet",
) -> RelaxedSolution:
    """Solve the relaxed commitment problem.

    Raises InfeasibleError when even the full fleet misses the reserve
    requirement. When ``max_iter`` Newton steps are exhausted the best
    iterate is returned with ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    check_full_fleet_feasible(fleet, reserve_policy)
    reserve = relaxation_reserve(fleet, reserve_policy)
    if relaxation == "perspective":
        return _solve_perspective(fleet, reserve, tol, max_iter)
    if relaxation == "bilinear":
        return _solve_bilinear(fleet, reserve, tol, max_iter)
    raise ValueError(f"unknown relaxation {relaxation!r}")
