import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_random_fleets
from ucround.dispatch import dispatch
from ucround.errors import InfeasibleError
from ucround.fleet import Fleet, Generator, random_fleet
from ucround.oracle import exhaustive_uc
from ucround.relaxed import relaxation_reserve, solve_fixed_commitment, solve_relaxed


def perspective_oracle(fleet: Fleet, reserve: float) -> float:
    """The convex relaxation written directly in cvxpy."""
    n = len(fleet)
    y = cp.Variable(n)
    q = cp.Variable(n)
    a, b, c = fleet.a, fleet.b, fleet.c
    terms = [a[i] * cp.quad_over_lin(q[i], y[i]) for i in range(n) if a[i] > 0]
    obj = cp.sum(cp.hstack(terms)) if terms else 0
    cons = [
        y >= 0, y <= 1,
        q >= cp.multiply(fleet.p_min, y), q <= cp.multiply(fleet.p_max, y),
        cp.sum(q) >= fleet.demand, fleet.p_max @ y >= reserve,
    ]
    prob = cp.Problem(cp.Minimize(obj + b @ q + c @ y), cons)
    prob.solve(solver=cp.CLARABEL, tol_gap_abs=1e-10, tol_gap_rel=1e-10, tol_feas=1e-10)
    return prob.value


def dual_function(fleet: Fleet, lam: float, nu: float, reserve: float) -> float:
    """Lagrangian dual with demand price lam and reserve price nu, unit by unit.

    Written as a scan over candidate outputs so it shares nothing with the solver.
    """
    total = lam * fleet.demand + nu * reserve
    for g in fleet.generators:
        cands = [g.p_min, g.p_max]
        if g.a > 0:
            cands.append(min(max((lam - g.b) / (2 * g.a), g.p_min), g.p_max))
        best = min(g.a * p * p + (g.b - lam) * p + g.c for p in cands) - nu * g.p_max
        total += min(best, 0.0)
    return total


def test_single_unit_infeasible():
    fleet = Fleet((Generator("u", 10, 100, 0.01, 10, 5),), demand=50.0)
    with pytest.raises(InfeasibleError, match="reserve"):
        solve_relaxed(fleet)


def test_two_identical_units_symmetric():
    gens = (Generator("u", 0, 100, 0.01, 10, 5), Generator("v", 0, 100, 0.01, 10, 5))
    sol = solve_relaxed(Fleet(gens, demand=80.0, sigma_d=0.0))
    # interior iterates approach the bound y = 1 to barrier accuracy
    assert sol.y == pytest.approx([1.0, 1.0], abs=1e-5)
    assert sol.p == pytest.approx([40.0, 40.0], rel=1e-5)
    assert sol.p[0] == pytest.approx(sol.p[1], rel=1e-9)
    assert sol.converged


def test_rejects_bad_tolerance():
    with pytest.raises(ValueError):
        solve_relaxed(random_fleet(4, np.random.default_rng(0)), tol=0.0)


def test_iteration_limit_flags_nonconverged():
    fleet = random_fleet(10, np.random.default_rng(7))
    sol = solve_relaxed(fleet, max_iter=3)
    assert not sol.converged
    assert np.all((sol.y >= 0) & (sol.y <= 1))


def test_matches_cvxpy_perspective():
    for fleet in make_random_fleets(25, seed=31, n_hi=15):
        sol = solve_relaxed(fleet)
        ref = perspective_oracle(fleet, relaxation_reserve(fleet))
        assert sol.converged
        assert sol.objective == pytest.approx(ref, rel=2e-6)


def test_solution_invariants_and_certificate():
    for fleet in make_random_fleets(40, seed=32, n_hi=30):
        sol = solve_relaxed(fleet)
        reserve = relaxation_reserve(fleet)
        assert sol.converged and sol.kkt_residual <= 1e-6
        assert np.all((sol.y >= 0) & (sol.y <= 1))
        assert np.all((sol.p >= fleet.p_min) & (sol.p <= fleet.p_max))
        tol = 1e-6 * max(1.0, fleet.demand)
        assert float(sol.y @ sol.p) >= fleet.demand - tol
        assert float(sol.y @ fleet.p_max) >= reserve - 1e-6 * reserve
        recomputed = math.fsum(y * (g.a * p * p + g.b * p + g.c) for g, y, p in zip(fleet.generators, sol.y, sol.p))
        assert sol.objective == pytest.approx(recomputed, rel=1e-8)
        # weak duality: any prices bound the optimum from below
        bound = dual_function(fleet, sol.demand_price, sol.reserve_price, reserve)
        assert bound <= sol.objective * (1 + 1e-9)
        assert sol.objective - bound <= 1e-5 * sol.objective
        assert sol.dual_bound == pytest.approx(bound, rel=1e-9)


def test_lower_bound_on_oracle():
    for fleet in make_random_fleets(40, seed=33, n_lo=4, n_hi=8):
        assert solve_relaxed(fleet).objective <= exhaustive_uc(fleet).objective * (1 + 1e-6)


def test_fixed_commitment_matches_dispatch():
    for fleet in make_random_fleets(25, seed=34, n_hi=20):
        fixed = solve_fixed_commitment(fleet, np.ones(len(fleet)))
        ref = dispatch(fleet.generators, fleet.demand)
        assert fixed.objective == pytest.approx(ref.objective, rel=1e-6)
        assert fixed.p == pytest.approx(np.asarray(ref.p), abs=1e-3 * max(1.0, float(fleet.p_max.max())))


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(3, 14))
def test_permutation_invariance(seed, n):
    rng = np.random.default_rng(seed)
    fleet = random_fleet(n, rng)
    perm = rng.permutation(n)
    shuffled = Fleet(tuple(fleet.generators[i] for i in perm), fleet.demand, fleet.sigma_d)
    a = solve_relaxed(fleet).objective
    b = solve_relaxed(shuffled).objective
    assert b == pytest.approx(a, rel=1e-6)


def test_committed_policy_relaxation_is_a_bound():
    for fleet in make_random_fleets(20, seed=35, n_lo=4, n_hi=8):
        sol = solve_relaxed(fleet, reserve_policy="committed")
        exact = exhaustive_uc(fleet, policy="committed")
        assert sol.objective <= exact.objective * (1 + 1e-6)


def test_bilinear_form_is_feasible_and_not_below_convex():
    for fleet in make_random_fleets(10, seed=36, n_lo=4, n_hi=8):
        convex = solve_relaxed(fleet)
        local = solve_relaxed(fleet, relaxation="bilinear")
        reserve = relaxation_reserve(fleet)
        assert np.all((local.y >= -1e-9) & (local.y <= 1 + 1e-9))
        assert float(local.y @ local.p) >= fleet.demand * (1 - 1e-6)
        assert float(local.y @ fleet.p_max) >= reserve * (1 - 1e-6)
        # the perspective form is the convex envelope, so no local point beats it
        assert local.objective >= convex.objective * (1 - 1e-6)


def test_large_fleet_converges():
    fleet = random_fleet(2000, np.random.default_rng(37))
    sol = solve_relaxed(fleet)
    assert sol.converged
    assert sol.objective - sol.dual_bound <= 1e-5 * sol.objective


def test_unknown_options():
    fleet = random_fleet(4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        solve_relaxed(fleet, relaxation="nope")
    with pytest.raises(ValueError):
        solve_relaxed(fleet, reserve_policy="nope")
