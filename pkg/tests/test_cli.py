import csv
import json
import math
from pathlib import Path

import pytest

from ehbuffer import cli
from ehbuffer.eh_model import ConfigError

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def small_config(tmp_path, **extra):
    cfg = {
        "scenario": "unit",
        "harvest": {"m": 2, "mean": 1.0},
        "uplink": {"m_ul": 2, "omega_ul": 1.0, "sigma2": 0.05, "rate": 1.0},
        "policies": ["best_effort", "on_off"],
        "capacities": [5.2, "inf"],
        "delta": 1.3,
        "outage": {"delta_grid": [0.8, 1.3, 2.0]},
        "sweep": {"delta_lo": 0.5, "delta_hi": 2.0, "points": 12},
        "throughput": {"rates": [0.5, 1.0, 2.0], "points": 10},
        "simulation": {"slots": 200000, "seed": 5, "bins": 40},
        "output": {"dir": str(tmp_path / "out"), "format": "both"},
    }
    for k, v in extra.items():
        cfg[k] = v
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg))
    return path


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    header = json.loads(lines[0][2:])
    return header, list(csv.DictReader(lines[1:]))


def test_dist_files_and_columns(tmp_path, capsys):
    path = small_config(tmp_path)
    assert cli.main(["dist", "--config", str(path)]) == 0
    out = tmp_path / "out"
    _, finite = read_csv(out / "dist_on_off_K5.2.csv")
    _, infinite = read_csv(out / "dist_best_effort_Kinf.csv")
    assert "atom_analytic" in finite[0] and "atom_sim" in finite[0]
    assert "atom_analytic" not in infinite[0]
    summary = json.loads((out / "dist_summary.json").read_text())
    assert summary["schema"] == cli.SCHEMA and summary["seed"] == 5
    curves = {c["name"]: c for c in summary["curves"]}
    inf_curve = curves["dist_best_effort_Kinf"]
    assert set(inf_curve["roots"][0]) == {"re", "im"}
    assert all(c["l1_distance"] < 0.1 for c in curves.values())
    assert str(out / "dist_summary.json") in capsys.readouterr().out


def test_round_trip_reproduces_simulation(tmp_path):
    path = small_config(tmp_path, capacities=[5.2])
    assert cli.main(["dist", "--config", str(path)]) == 0
    first = tmp_path / "out" / "dist_best_effort_K5.2.csv"
    header, rows_a = read_csv(first)
    again = dict(header["config"])
    again["output"] = {"dir": str(tmp_path / "again"), "format": "csv"}
    p2 = tmp_path / "again.json"
    p2.write_text(json.dumps(again))
    assert cli.main(["dist", "--config", str(p2)]) == 0
    _, rows_b = read_csv(tmp_path / "again" / "dist_best_effort_K5.2.csv")
    assert [r["bin_pdf_sim"] for r in rows_a] == [r["bin_pdf_sim"] for r in rows_b]
    assert [r["atom_sim"] for r in rows_a] == [r["atom_sim"] for r in rows_b]


def test_flag_overrides(tmp_path):
    path = small_config(tmp_path, capacities=[5.2], policies=["be"])
    assert cli.main(["dist", "--config", str(path), "--seed", "9", "--slots", "50000",
                     "--out", str(tmp_path / "o2"), "--format", "json"]) == 0
    summary = json.loads((tmp_path / "o2" / "dist_summary.json").read_text())
    assert summary["seed"] == 9 and summary["config"]["simulation"]["slots"] == 50000
    assert not list((tmp_path / "o2").glob("*.csv"))


def test_outage_marks_infeasible_points(tmp_path):
    path = small_config(tmp_path, capacities=[3.0], policies=["on_off", "be"])
    assert cli.main(["outage", "--config", str(path)]) == 0
    _, rows = read_csv(tmp_path / "out" / "outage.csv")
    cases = [(r["policy"], r["case"]) for r in rows]
    assert ("on_off", "infeasible") in cases
    be = [r for r in rows if r["policy"] == "best_effort"]
    assert all(r["case"] == "best_effort_finite" for r in be)
    assert all(abs(float(r["z_score"])) < 4 for r in be)


def test_sweep_throughput_compare(tmp_path):
    path = small_config(tmp_path, capacities=["inf"], compare={"p_c_list": [0.0, 0.05], "capacity": "inf"})
    for cmd in ("sweep", "throughput", "compare"):
        assert cli.main([cmd, "--config", str(path), "--format", "json"]) == 0
    optima = json.loads((tmp_path / "out" / "sweep_optima.json").read_text())["optima"]
    assert {o["policy"] for o in optima} == {"best_effort", "on_off"}
    assert optima[0]["K"] == "inf"
    best = json.loads((tmp_path / "out" / "throughput_best.json").read_text())["best"]
    assert any(b["policy"] == "bufferless" for b in best)
    rows = json.loads((tmp_path / "out" / "compare.json").read_text())["rows"]
    assert [r["p_c"] for r in rows] == [0.0, 0.05]


def test_dbm_is_converted_and_echoed(tmp_path):
    up = {"m_ul": 2, "rate": 1.0, "sigma2_dbm": -101,
          "omega_ref": {"value": 1e-6, "distance_m": 12.0}, "distance_m": 7.0, "path_loss_exponent": 2.5}
    cfg = cli.load_config(small_config(tmp_path, uplink=up))
    assert cfg.ul.sigma2 == pytest.approx(10 ** -13.1, rel=1e-12)
    assert cfg.resolved["uplink"]["sigma2"] == cfg.ul.sigma2
    assert cfg.ul.omega_ul == pytest.approx(1e-6 * (12 / 7) ** 2.5)
    assert cfg.resolved["uplink"]["Gamma_thr"] == pytest.approx(cfg.ul.Gamma_thr)
    assert cli.dbm_to_watts(30.0) == 1.0


def test_shipped_configs_resolve():
    for path in sorted(CONFIGS.glob("*.json")):
        cfg = cli.load_config(path)
        assert cfg.eh.m >= 1 and cfg.ul.Gamma_thr > 0


class TestErrors:
    def test_malformed_json_reports_position(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{\n  "harvest": {"m": 2,,}\n}')
        assert cli.main(["dist", "--config", str(bad)]) == 2
        err = capsys.readouterr().err
        assert "line 2" in err and "column" in err

    def test_bad_field_is_named(self, tmp_path, capsys):
        path = small_config(tmp_path, harvest={"m": 2, "mean": -1.0})
        assert cli.main(["dist", "--config", str(path)]) == 2
        assert "harvest.mean" in capsys.readouterr().err
        with pytest.raises(ConfigError, match="simulation.burn_in"):
            cli.load_config(small_config(tmp_path, simulation={"slots": 10, "burn_in": 10}))
        with pytest.raises(ConfigError, match="capacities"):
            cli.load_config(small_config(tmp_path, capacities=[-1]))
        with pytest.raises(ConfigError, match="policies"):
            cli.load_config(small_config(tmp_path, policies=["greedy"]))

    def test_missing_file(self, tmp_path):
        assert cli.main(["dist", "--config", str(tmp_path / "nope.json")]) == 2

    def test_regime_error_exit_code(self, tmp_path, capsys):
        path = small_config(tmp_path, capacities=["inf"], delta=0.8)
        assert cli.main(["dist", "--config", str(path)]) == 3
        assert "delta > 1" in capsys.readouterr().err


def test_clean_serialization():
    out = cli._clean({"a": math.inf, "b": 1 + 2j, "c": [float("nan")]})
    assert out == {"a": "inf", "b": {"re": 1.0, "im": 2.0}, "c": ["nan"]}
    json.dumps(out, allow_nan=False)
