import json
import subprocess
import sys

import numpy as np
import pytest

from feederperc.cli import main
from feederperc.pipeline import data_path
from feederperc.powerflow import read_panel

DEMO = [str(data_path("demo_P_0.csv")), str(data_path("demo_P_40.csv"))]


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_simulate_twobus(tmp_path, capsys):
    code, out, _ = run(capsys, "simulate", "--feeder", "twobus", "--case", "P", "--out", tmp_path)
    assert code == 0
    panel = read_panel(tmp_path / "panel_P_0.csv")
    assert panel.values.shape == (1, 96)
    assert json.loads(out)["nodes"] == 1


def test_simulate_synth123(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--pv-pct", "0", "--out", tmp_path)
    assert code == 0
    assert read_panel(tmp_path / "panel_P_0.csv").values.shape == (40, 96)


def test_simulate_combination(tmp_path, capsys):
    code, _, _ = run(capsys, "simulate", "--combination", "C5", "--steps", "24", "--out", tmp_path)
    assert code == 0
    assert read_panel(tmp_path / "panel_C5.csv").values.shape == (40, 24)


def test_invalid_scenario_file(tmp_path, capsys):
    bad = tmp_path / "s.json"
    bad.write_text('{"case": "ZZ"}')
    code, _, err = run(capsys, "simulate", "--scenario", bad, "--out", tmp_path)
    assert code == 1
    assert json.loads(err)["exit_code"] == 1
    code, _, err = run(capsys, "simulate", "--scenario", tmp_path / "none.json", "--out", tmp_path)
    assert code == 1 and "error" in json.loads(err)


def test_divergence_exit_code(tmp_path, capsys):
    feeder = {
        "name": "weak",
        "buses": [
            {"id": 1, "kind": "swing"},
            {"id": 2, "kind": "load", "is_meter": True,
             "load": {"base_p": 40000.0, "base_q": 10000.0, "profile_id": "flat"}},
        ],
        "lines": [{"from": 1, "to": 2, "resistance": 0.17, "reactance": 0.35}],
    }
    f = tmp_path / "weak.json"
    f.write_text(json.dumps(feeder))
    code, _, err = run(capsys, "simulate", "--feeder", f, "--out", tmp_path)
    assert code == 2
    e = json.loads(err)
    assert e["error"] == "PowerFlowError" and e["timestep"] == 0


def test_unknown_flag_is_config_error(capsys):
    assert main(["simulate", "--bogus"]) == 1
    capsys.readouterr()


def test_config_and_flag_precedence(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"feeder": "twobus", "steps": 12, "out": str(tmp_path / "a")}))
    assert run(capsys, "simulate", "--config", cfg)[0] == 0
    assert read_panel(tmp_path / "a" / "panel_P_0.csv").values.shape == (1, 12)
    assert run(capsys, "simulate", "--config", cfg, "--steps", "8")[0] == 0
    assert read_panel(tmp_path / "a" / "panel_P_0.csv").values.shape == (1, 8)
    cfg.write_text(json.dumps({"nope": 1}))
    assert run(capsys, "simulate", "--config", cfg)[0] == 1


def test_analyze_demo_panels(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", "--panels", *DEMO, "--trials", 50, "--out", tmp_path)
    assert code == 0
    rows = (tmp_path / "metrics.csv").read_text().splitlines()
    assert rows[0].split(",") == ["graph", "AD", "CC", "MD", "AC", "PLF", "PT"]
    assert len(rows[1].split(",")) == 7
    n_edges = json.loads(out)["n_edges"]
    curves = list((tmp_path / "curves").glob("curve_*.csv"))
    assert len(curves) == 1
    assert len(curves[0].read_text().splitlines()) == 1 + n_edges + 1
    assert (tmp_path / "manifest.json").exists()


def test_analyze_identical_panels(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", "--panels", DEMO[0], DEMO[0], "--trials", 20, "--out", tmp_path)
    assert code == 0
    panel = read_panel(DEMO[0])
    n = len(panel.node_ids)
    flat = sum(np.ptp(r) == 0 for r in panel.values)
    live = n - flat
    # self-correlation saturates: every pair of non-constant rows with r > 0 is linked
    assert json.loads(out)["n_edges"] >= live - 1


def test_analyze_node_mismatch(tmp_path, capsys):
    p = tmp_path / "other.csv"
    p.write_text("node_id,2023-06-21T00:00:00,2023-06-21T00:15:00\n1,1,2\n2,2,1\n")
    code, _, err = run(capsys, "analyze", "--panels", DEMO[0], p, "--out", tmp_path)
    assert code == 1 and json.loads(err)["error"] == "PanelError"


def test_analyze_live(tmp_path, capsys):
    code, out, _ = run(capsys, "analyze", "--case", "HC", "--pv-pct", 40, "--steps", 24, "--trials", 20,
                       "--out", tmp_path)
    assert code == 0
    assert json.loads(out)["graph"] == "HC_0%-HC_40%"


def test_sweep_replay_cases(tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", "--case", "all", "--replay", "--out", tmp_path)
    assert code == 0
    s = json.loads(out)["cases"]
    assert s["P"]["trend"] == "non-decreasing" and s["HC"]["trend"] == "non-decreasing"
    assert s["HR"]["trend"] == "non-increasing" and s["IB"]["trend"] == "non-increasing"
    lines = (tmp_path / "sweep_cases.csv").read_text().splitlines()
    assert lines[0] == "case,pv_pct,rho_c" and lines[1] == "P,20,0.052"


def test_sweep_replay_combinations(tmp_path, capsys):
    code, out, _ = run(capsys, "sweep", "--combination", "all", "--replay", "--out", tmp_path)
    assert code == 0
    s = json.loads(out)["combinations"]
    assert s["argmax"] == "C5" and s["argmin"] == "C8"
    assert set(s["source_nodes"]) == {61, 151, 250, 300, 450, 610}
    assert (tmp_path / "sweep_combinations.csv").read_text().splitlines()[0] == "combination,rho_c"


def test_sweep_bad_case(tmp_path, capsys):
    assert run(capsys, "sweep", "--case", "XX", "--replay", "--out", tmp_path)[0] == 1
    assert run(capsys, "sweep", "--combination", "C3", "--replay", "--out", tmp_path)[0] == 1


@pytest.mark.parametrize("table", ["table3", "table4"])
def test_importance_bundled(tmp_path, capsys, table):
    code, out, _ = run(capsys, "importance", "--table", table, "--out", tmp_path)
    assert code == 0
    assert json.loads(out)["order"][0] == "AD"
    assert json.loads((tmp_path / "importance.json").read_text())["ranks"]["AD"] == 1


def test_importance_missing_cell(tmp_path, capsys):
    p = tmp_path / "t.csv"
    p.write_text("graph,AD,CC,MD,AC,PLF,PT\nA,1,2,3,4,5,0.1\nB,1,2,,4,5,0.2\n")
    code, _, err = run(capsys, "importance", "--table", p, "--out", tmp_path)
    assert code == 1
    assert "row 3, column MD" in json.loads(err)["message"]
    assert run(capsys, "importance", "--out", tmp_path)[0] == 1


def test_ingest(tmp_path, capsys):
    code, out, _ = run(capsys, "ingest", "--panels", DEMO[0], "--out", tmp_path)
    assert code == 0
    d = json.loads(out)
    assert d["nodes"] == 40 and d["steps"] == 96 and d["node_ids"] == sorted(d["node_ids"])


def test_ingest_node_map(tmp_path, capsys):
    p = tmp_path / "ext.csv"
    p.write_text("node_id,2023-06-21T00:00:00,2023-06-21T01:00:00\nmeter_b,1,2\nmeter_a,3,4\n")
    m = tmp_path / "map.csv"
    m.write_text("label,node_id\nmeter_a,7\nmeter_b,3\n")
    code, out, _ = run(capsys, "ingest", "--panels", p, "--node-map", m, "--out", tmp_path)
    assert code == 0 and json.loads(out)["node_ids"] == [3, 7]


@pytest.mark.parametrize(
    "body, needle",
    [("1,1,2\n1,3,4\n", "duplicate"), ("1,1,2\n2,3\n", "line 3")],
)
def test_ingest_errors(tmp_path, capsys, body, needle):
    p = tmp_path / "bad.csv"
    p.write_text("node_id,2023-06-21T00:00:00,2023-06-21T01:00:00\n" + body)
    code, _, err = run(capsys, "ingest", "--panels", p, "--out", tmp_path)
    assert code == 1 and needle in json.loads(err)["message"]


def test_report_replay(tmp_path, capsys):
    code, out, _ = run(capsys, "report", "--replay", "--trees", 100, "--out", tmp_path)
    assert code == 0
    s = json.loads(out)
    assert s["combinations"]["critical_nodes"] == [610]
    assert s["importance"]["cases"]["order"][0] == "AD"
    m = json.loads((tmp_path / "manifest.json").read_text())
    assert m["master_seed"] == 0 and len(m["config_hash"]) == 64
    assert "summary.json" in m["files"]


def test_determinism_byte_identical(tmp_path, capsys):
    argv = ["analyze", "--panels", *DEMO, "--trials", 40]
    assert run(capsys, *argv, "--out", tmp_path / "a")[0] == 0
    assert run(capsys, *argv, "--out", tmp_path / "b", "--workers", 4)[0] == 0
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    # the worker count is recorded in the manifest; every data file must match
    a.pop("manifest.json"), b.pop("manifest.json")
    assert a == b


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "feederperc.cli", "simulate", "--feeder", "twobus",
                        "--out", str(tmp_path)], capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
