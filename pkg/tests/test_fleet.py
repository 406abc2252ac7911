import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ucround.errors import FleetValidationError, InfeasibleError
from ucround.fleet import (
    CSV_COLUMNS,
    Fleet,
    Generator,
    check_full_fleet_feasible,
    load_fleet,
    make_fleet,
    random_fleet,
    replicate_fleet,
    reserve_requirement,
    write_fleet,
)

HEADER = ",".join(CSV_COLUMNS)


def _write(tmp_path, text, name="fleet.csv"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_generator_rejects_inverted_bounds():
    with pytest.raises(FleetValidationError, match="g7"):
        Generator("g7", 120.0, 100.0, 0.0, 1.0, 0.0)


@pytest.mark.parametrize("field,value", [("a", -1e-3), ("b", -0.5), ("p_max", 0.0), ("p_min", -1.0)])
def test_generator_invariants(field, value):
    kwargs = dict(id="u", p_min=10.0, p_max=100.0, a=0.01, b=10.0, c=5.0)
    kwargs[field] = value
    with pytest.raises(FleetValidationError, match=field):
        Generator(**kwargs)


def test_generator_cost():
    g = Generator("u", 10.0, 100.0, 0.01, 10.0, 5.0)
    assert g.cost(50.0) == pytest.approx(0.01 * 2500 + 500 + 5)
    assert g.marginal_cost(50.0) == pytest.approx(11.0)


def test_load_minimal_csv(tmp_path):
    path = _write(tmp_path, "id,p_min_mw,p_max_mw,a_usd_per_mw2h,b_usd_per_mwh,c_usd_per_h\nu1,10,100,0.01,10,5\n")
    fleet = load_fleet(path)
    assert len(fleet) == 1
    g = fleet.generators[0]
    assert (g.p_min, g.p_max, g.a, g.b, g.c) == (10, 100, 0.01, 10, 5)
    assert g.first_step_price is None and g.startup_cost == 0.0


def test_load_csv_with_blank_optionals(tmp_path):
    path = _write(tmp_path, f"{HEADER}\nu1,10,100,0.01,10,5,,,\nu2,5,50,0,20,300,80,25,90\n")
    fleet = load_fleet(path)
    assert fleet.ids == ["u1", "u2"]
    assert fleet.generators[1].max_step_price == 90.0


def test_load_csv_names_offending_unit(tmp_path):
    path = _write(tmp_path, f"{HEADER}\nok,10,100,0.01,10,5,,,\nbad,150,100,0.01,10,5,,,\n")
    with pytest.raises(FleetValidationError, match="bad"):
        load_fleet(path)


def test_load_csv_duplicate_id(tmp_path):
    path = _write(tmp_path, f"{HEADER}\nu,10,100,0.01,10,5,,,\nu,10,100,0.01,10,5,,,\n")
    with pytest.raises(FleetValidationError, match="duplicate"):
        load_fleet(path)


@pytest.mark.parametrize(
    "text",
    [
        "id,p_min_mw,p_max_mw\nu,1,2\n",
        f"{HEADER},extra\nu,10,100,0.01,10,5,,,,1\n",
        f"{HEADER}\nu,10,abc,0.01,10,5,,,\n",
        f"{HEADER}\nu,10,100,0.01,10,5,,,,,\n",
    ],
)
def test_load_csv_parse_errors(tmp_path, text):
    with pytest.raises(FleetValidationError):
        load_fleet(_write(tmp_path, text))


def test_json_round_trip(tmp_path):
    fleet = random_fleet(7, np.random.default_rng(2))
    write_fleet(fleet, tmp_path / "f.json")
    back = load_fleet(tmp_path / "f.json")
    assert back == fleet


def test_csv_round_trip_uses_default_demand(tmp_path):
    fleet = random_fleet(5, np.random.default_rng(4))
    write_fleet(fleet, tmp_path / "f.csv")
    back = load_fleet(tmp_path / "f.csv")
    assert back.generators == fleet.generators
    assert back.demand == pytest.approx(0.8 * math.fsum(fleet.p_max))
    assert back.sigma_d == pytest.approx(0.02 * back.demand)


def test_json_requires_generators(tmp_path):
    path = _write(tmp_path, json.dumps({"demand_mw": 3}), "f.json")
    with pytest.raises(FleetValidationError):
        load_fleet(path)


def test_reserve_requirement_single_unit():
    fleet = Fleet((Generator("u", 0, 50, 0, 1, 0),), demand=100.0, sigma_d=0.0)
    assert reserve_requirement(fleet).value == 150.0


def test_reserve_requirement_two_units():
    gens = (Generator("u", 0, 50, 0, 1, 0), Generator("v", 0, 80, 0, 1, 0))
    fleet = Fleet(gens, demand=100.0, sigma_d=10.0)
    assert reserve_requirement(fleet).value == 210.0
    assert reserve_requirement(fleet, "committed", committed=[0]).value == 180.0


def test_reserve_requirement_empty_fleet():
    with pytest.raises(FleetValidationError):
        reserve_requirement(Fleet((), demand=0.0))


def test_infeasible_fleet_names_reserve():
    fleet = Fleet((Generator("u", 10, 100, 0.01, 10, 5),), demand=50.0)
    with pytest.raises(InfeasibleError, match="reserve"):
        check_full_fleet_feasible(fleet)


def test_replicate_identity():
    base = random_fleet(6, np.random.default_rng(0))
    rep = replicate_fleet(base, 1, deviation=0.0, seed=9)
    for g, h in zip(base.generators, rep.generators):
        assert h.id == f"{g.id}#r0"
        assert (h.p_min, h.p_max, h.a, h.b, h.c) == (g.p_min, g.p_max, g.a, g.b, g.c)
    assert rep.demand == pytest.approx(base.demand, rel=1e-15)
    assert rep.sigma_d == pytest.approx(base.sigma_d, rel=1e-15)


def test_replicate_sizes():
    base = make_fleet(random_fleet(46, np.random.default_rng(1)).generators)
    assert len(replicate_fleet(base, 6)) == 276
    assert len(replicate_fleet(base, 40)) == 1840


def test_replicate_is_seeded():
    base = random_fleet(8, np.random.default_rng(5))
    assert replicate_fleet(base, 3, 0.05, seed=11) == replicate_fleet(base, 3, 0.05, seed=11)
    assert replicate_fleet(base, 3, 0.05, seed=11) != replicate_fleet(base, 3, 0.05, seed=12)


@pytest.mark.parametrize("mult,dev", [(0, 0.01), (2, 1.0), (2, -0.1), (1.5, 0.0)])
def test_replicate_preconditions(mult, dev):
    base = random_fleet(3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        replicate_fleet(base, mult, dev)


@given(
    seed=st.integers(0, 2**32 - 1),
    mult=st.integers(1, 5),
    dev=st.floats(0.0, 0.9),
    n=st.integers(1, 8),
)
def test_replicate_properties(seed, mult, dev, n):
    base = random_fleet(n, np.random.default_rng(seed))
    rep = replicate_fleet(base, mult, dev, seed)
    assert len(rep) == mult * n
    for r in range(mult):
        for i, g in enumerate(base.generators):
            h = rep.generators[r * n + i]
            assert 0 <= h.p_min <= h.p_max and h.a >= 0 and h.b >= 0
            for name in ("a", "b", "c", "p_max"):
                lo, hi = sorted(((1 - dev) * getattr(g, name), (1 + dev) * getattr(g, name)))
                assert lo * (1 - 1e-12) <= getattr(h, name) <= hi * (1 + 1e-12) + 1e-300


@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 40))
def test_random_fleet_is_feasible(seed, n):
    fleet = random_fleet(n, np.random.default_rng(seed))
    check_full_fleet_feasible(fleet)
    assert all(g.c >= 200 for g in fleet.generators)
