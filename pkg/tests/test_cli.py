import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import make_random_fleets
from ucround.audit import verify_commitment
from ucround.cli import main
from ucround.costfit import BidCurve, write_curves
from ucround.fleet import Fleet, Generator, load_fleet, write_fleet


@pytest.fixture
def fleet_json(tmp_path):
    gens = (Generator("g1", 10, 100, 0.01, 10, 200), Generator("g2", 10, 100, 0.02, 8, 250))
    path = tmp_path / "two.json"
    write_fleet(Fleet(gens, demand=60.0, sigma_d=0.0), path)
    return path


@pytest.fixture
def random_json(tmp_path):
    path = tmp_path / "ten.json"
    write_fleet(make_random_fleets(1, seed=91, n_lo=10, n_hi=10)[0], path)
    return path


def test_solve_two_units(fleet_json, tmp_path):
    out = tmp_path / "res.json"
    assert main(["solve", "--fleet", str(fleet_json), "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    res = doc["result"]
    assert res["u"] == [1, 1]
    assert sum(res["p_mw"]) == pytest.approx(60.0)
    assert res["objective_usd_per_h"] > 0
    fleet = load_fleet(fleet_json)
    assert verify_commitment(fleet, res["u"], res["p_mw"], res["objective_usd_per_h"]) == []


def test_solve_reports_effective_config(fleet_json, tmp_path):
    out = tmp_path / "res.json"
    main(["solve", "--fleet", str(fleet_json), "--out", str(out), "--trace"])
    cfg = json.loads(out.read_text())["config"]
    for key in ("tol", "max_iter", "stride", "threads", "relaxation", "reserve_policy"):
        assert cfg[key] is not None
    assert cfg["fleet"]["demand_mw"] == 60.0
    assert "sweep" in json.loads(out.read_text())["result"]


def test_solve_infeasible_exit_code(fleet_json, capsys):
    assert main(["solve", "--fleet", str(fleet_json), "--demand", "150"]) == 1
    assert "reserve" in capsys.readouterr().err


def test_input_errors_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("id,p_min_mw,p_max_mw,a_usd_per_mw2h,b_usd_per_mwh,c_usd_per_h\nx,50,10,0,1,0\n")
    assert main(["solve", "--fleet", str(bad)]) == 2
    assert "x" in capsys.readouterr().err
    assert main(["solve", "--fleet", str(tmp_path / "missing.csv")]) == 2
    with pytest.raises(SystemExit) as exc:
        main(["solve"])
    assert exc.value.code == 2


def test_compare_random_fleet(random_json, tmp_path):
    out = tmp_path / "cmp.json"
    assert main(["compare", "--fleet", str(random_json), "--out", str(out)]) == 0
    res = json.loads(out.read_text())["result"]
    assert res["deviation"] >= -1e-6
    assert res["oracle_objective_usd_per_h"] <= res["rruc_objective_usd_per_h"] * (1 + 1e-6)


def test_compare_rejects_large_fleet(tmp_path):
    path = tmp_path / "big.json"
    write_fleet(make_random_fleets(1, seed=92, n_lo=25, n_hi=25)[0], path)
    assert main(["compare", "--fleet", str(path)]) == 2


def test_same_config_same_bytes(random_json, tmp_path):
    outs = []
    for i in range(2):
        out = tmp_path / f"r{i}.json"
        main(["solve", "--fleet", str(random_json), "--out", str(tmp_path / "same.json")])
        out.write_text((tmp_path / "same.json").read_text())
        doc = json.loads(out.read_text())
        doc.pop("metadata")
        outs.append(json.dumps(doc, sort_keys=True))
    assert outs[0] == outs[1]


def test_replicate_is_reproducible(random_json, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert main(["replicate", "--fleet", str(random_json), "--multiplier", "3", "--out", str(out)]) == 0
    assert a.read_bytes() == b.read_bytes()
    assert len(load_fleet(a)) == 30
    assert json.loads((tmp_path / "a.csv.meta.json").read_text())["config"]["seed"] == 0


def test_fit_writes_fleet(tmp_path):
    curves = [
        BidCurve("peaker", 210.0, 227.0, 7.0, 20.0, ((20.0, 768.0),)),
        BidCurve("mid", 600.0, 5066.0, 50.0, 83.0, ((60.0, 143.0), (83.0, 171.0))),
    ]
    write_curves(curves, tmp_path / "c.json")
    out = tmp_path / "fleet.csv"
    assert main(["fit", "--curves", str(tmp_path / "c.json"), "--out", str(out)]) == 0
    fleet = load_fleet(out)
    assert fleet.ids == ["peaker", "mid"]
    assert fleet.generators[0].first_step_price == 768.0
    meta = json.loads((tmp_path / "fleet.csv.meta.json").read_text())
    assert meta["metadata"]["min_r_squared"] > 0.9
    first = out.read_bytes()
    main(["fit", "--curves", str(tmp_path / "c.json"), "--out", str(out)])
    assert out.read_bytes() == first


def test_fit_rejects_nonmonotone(tmp_path):
    write_curves([BidCurve("x", 0, 0, 0, 20, ((10, 50), (20, 40)))], tmp_path / "c.json")
    assert main(["fit", "--curves", str(tmp_path / "c.json"), "--out", str(tmp_path / "f.csv")]) == 2
    assert main(["fit", "--curves", str(tmp_path / "c.json"), "--out", str(tmp_path / "f.csv"),
                 "--allow-nonmonotone"]) == 0


def test_bench_csv(random_json, tmp_path):
    out = tmp_path / "bench.csv"
    args = ["bench", "--fleet", str(random_json), "--multipliers", "1,2", "--methods", "rruc,oracle",
            "--trials", "1", "--warmup", "0", "--out", str(out)]
    assert main(args) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "n_units,method,wall_time,objective,deviation"
    assert len(rows) == 5


def test_sweep_stats_csv(random_json, tmp_path):
    out = tmp_path / "sweep.csv"
    fleet = load_fleet(random_json)
    top = float(np.sum(fleet.p_max))
    args = ["sweep-stats", "--fleet", str(random_json), "--load-start", str(0.1 * top),
            "--load-step", str(0.2 * top), "--load-end", str(0.5 * top), "--out", str(out)]
    assert main(args) == 0
    header = out.read_text().splitlines()[0].split(",")
    assert header[0] == "load_step" and "committed_total_startup" in header
    first = out.read_bytes()
    main(args)
    assert out.read_bytes() == first


def test_module_entry_point_help():
    proc = subprocess.run([sys.executable, "-m", "ucround", "solve", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "MW" in proc.stdout
