import numpy as np
import pytest

from ucround.audit import verify_commitment
from ucround.fleet import Fleet, Generator
from ucround.rounding import rruc


@pytest.fixture
def fleet():
    gens = (
        Generator("a", 10, 100, 0.01, 10, 50),
        Generator("b", 20, 80, 0.02, 8, 40),
        Generator("c", 5, 60, 0.0, 30, 20),
    )
    return Fleet(gens, demand=90.0)  # requirement 190


def test_accepts_valid(fleet):
    u = [1, 1, 1]
    p = [40.0, 30.0, 20.0]
    obj = sum(g.cost(x) for g, x in zip(fleet.generators, p))
    assert verify_commitment(fleet, u, p, obj) == []


@pytest.mark.parametrize(
    "u,p,needle",
    [
        ([1, 1, 0], [50.0, 40.0, 0.0], "reserve"),
        ([1, 1, 1], [40.0, 30.0, 10.0], "demand"),
        ([1, 1, 1], [5.0, 45.0, 40.0], "below P_min"),
        ([1, 1, 1], [10.0, 20.0, 70.0], "above P_max"),
        ([1, 1, 2], [40.0, 30.0, 20.0], "binary"),
        ([1, 1, 0], [60.0, 30.0, 5.0], "uncommitted"),
        ([0, 0, 0], [0.0, 0.0, 0.0], "no unit"),
        ([1, 1], [1.0, 2.0], "length"),
    ],
)
def test_flags_violations(fleet, u, p, needle):
    problems = verify_commitment(fleet, u, p)
    assert any(needle in msg for msg in problems), problems


def test_flags_wrong_objective(fleet):
    problems = verify_commitment(fleet, [1, 1, 1], [40.0, 30.0, 20.0], objective=1.0)
    assert any("objective" in msg for msg in problems)


def test_committed_policy_is_looser(fleet):
    gens = fleet.generators + (Generator("huge", 0, 500, 0, 1, 0),)
    big = Fleet(gens, demand=90.0)
    u, p = [1, 1, 1, 0], [40.0, 30.0, 20.0, 0.0]
    assert any("reserve" in m for m in verify_commitment(big, u, p, policy="fleet"))
    assert verify_commitment(big, u, p, policy="committed") == []


def test_tampered_solution_is_caught():
    from conftest import make_random_fleets

    fleet = make_random_fleets(1, seed=71, n_lo=10, n_hi=10)[0]
    sol = rruc(fleet)
    assert verify_commitment(fleet, sol.u, sol.p, sol.objective) == []
    p = np.array(sol.p)
    on = np.flatnonzero(sol.u)
    p[on[0]] = fleet.p_max[on[0]] * 1.01
    assert verify_commitment(fleet, sol.u, p)
