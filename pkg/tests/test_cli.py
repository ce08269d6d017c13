"""End-to-end tests for the command-line interface and its JSON documents."""

import csv
import json
import pathlib

import numpy as np
import pytest
from jsonschema import Draft202012Validator

from twqr.cli import main
from twqr.montecarlo import REPORT_COLUMNS, DgpWeights, MonteCarloConfig, generate_dgp
from twqr.panel import write_csv

SCHEMA_DIR = pathlib.Path(__file__).resolve().parent.parent / "docs" / "schemas"


def load_schema(name):
    with open(SCHEMA_DIR / name, encoding="utf-8") as fh:
        schema = json.load(fh)
    Draft202012Validator.check_schema(schema)
    return schema


def validate_against(name, instance):
    Draft202012Validator(load_schema(name)).validate(instance)


def panel_csv(tmp_path, seed=41, G=12, H=12, d=3):
    cfg = MonteCarloConfig(G=G, H=H, d=d, tau=0.5,
                           weights=DgpWeights(1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
                           reps=1, seed=seed)
    path = tmp_path / "panel.csv"
    write_csv(generate_dgp(cfg, 0), path)
    return path


def sim_config(tmp_path, **overrides):
    doc = {
        "G": 12, "H": 12, "d": 2, "tau": 0.5,
        "weights": {"wUx": 1.0, "wVx": 1.0, "wWx": 1.0,
                    "wUe": 1.0, "wVe": 1.0, "wWe": 1.0},
        "reps": 30, "seed": 5,
        "methods": ["ctw", "cg", "ch", "ci", "ctw2"],
    }
    doc.update(overrides)
    validate_against("simulate_config.schema.json", doc)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    return path


def test_fit_json_output(tmp_path, capsys):
    path = panel_csv(tmp_path)
    rc = main(["fit", str(path), "--crve", "ctw", "--crve", "ci", "--null", "1"])
    assert rc == 0
    out = capsys.readouterr().out
    doc = json.loads(out)
    validate_against("fit_response.schema.json", doc)
    assert doc["diagnostics"]["n"] == 144
    assert doc["diagnostics"]["converged"] is True
    assert len(doc["beta_hat"]) == 3
    assert doc["null_values"] == [1.0, 1.0, 1.0]
    assert doc["bandwidth"]["source"] == "rule_of_thumb"
    assert set(doc["methods"]) == {"ctw", "ci"}
    for block in doc["methods"].values():
        assert all(np.isfinite(block["p_values"]))
        assert all(0.0 <= p <= 1.0 for p in block["p_values"])
    # slopes are near 1 on this design, so their tests against 1 rarely reject
    assert abs(doc["beta_hat"][2] - 1.0) < 0.5


def test_fit_csv_output(tmp_path, capsys):
    path = panel_csv(tmp_path)
    rc = main(["fit", str(path), "--crve", "ctw", "--format", "csv"])
    assert rc == 0
    rows = list(csv.reader(capsys.readouterr().out.splitlines()))
    assert rows[0] == ["coefficient", "method", "beta_hat", "null_value",
                      "std_error", "t_stat", "p_value"]
    assert len(rows) == 1 + 3  # header + one row per coefficient
    for row in rows[1:]:
        assert row[1] == "ctw"
        float(row[2]), float(row[6])  # parseable floats


def test_fit_bandwidth_override(tmp_path, capsys):
    path = panel_csv(tmp_path)
    rc = main(["fit", str(path), "--bandwidth", "0.5"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["bandwidth"] == {"value": 0.5, "source": "override"}
    assert main(["fit", str(path), "--bandwidth", "-0.5"]) == 2


def test_fit_custom_columns(tmp_path, capsys):
    path = tmp_path / "named.csv"
    path.write_text(
        "firm,year,outcome,const,size\n"
        "a,2001,1.0,1.0,0.3\n" "a,2002,1.4,1.0,0.9\n"
        "b,2001,0.7,1.0,-0.2\n" "b,2002,2.1,1.0,1.4\n"
        "c,2001,0.9,1.0,0.1\n" "c,2002,1.8,1.0,1.1\n",
        encoding="utf-8")
    rc = main(["fit", str(path), "--g-col", "firm", "--h-col", "year",
               "--y-col", "outcome", "--x-cols", "const,size"])
    assert rc == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["diagnostics"]["G"] == 3
    assert doc["diagnostics"]["H"] == 2
    assert len(doc["beta_hat"]) == 2


def test_fit_collinear_design_is_a_numeric_error(tmp_path, capsys):
    lines = ["g,h,y,x1,x2"]
    rng = np.random.default_rng(2)
    for g in range(4):
        for h in range(4):
            x1 = rng.standard_normal()
            lines.append(f"{g},{h},{rng.standard_normal()},{x1},{2 * x1}")
    path = tmp_path / "collinear.csv"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    rc = main(["fit", str(path)])
    assert rc == 3
    assert "RankDeficient" in capsys.readouterr().err


def test_fit_usage_errors(tmp_path, capsys):
    path = panel_csv(tmp_path)
    assert main(["fit", str(path), "--tau", "1.5"]) == 2
    assert main(["fit", str(tmp_path / "missing.csv")]) == 2
    assert main(["fit", str(path), "--null", "1,2"]) == 2  # needs 1 or d values
    capsys.readouterr()


def test_simulate_single_rep_smoke(tmp_path, capsys):
    cfg = sim_config(tmp_path, reps=1)
    out = tmp_path / "out"
    rc = main(["simulate", str(cfg), "--out", str(out)])
    assert rc == 0
    capsys.readouterr()
    doc = json.loads((out / "report.json").read_text(encoding="utf-8"))
    validate_against("rejection_report.schema.json", doc)
    report = doc["reports"][0]
    for key, p in report["frequencies"].items():
        assert p in (0.0, 1.0)
        assert report["mc_se"][key] == 0.0
        assert report["reps_used"][key] == 1
    with open(out / "report.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 5  # one row per method
    assert list(rows[0]) == list(REPORT_COLUMNS)


def test_simulate_grid_and_seed_override(tmp_path, capsys):
    cfg = sim_config(tmp_path, reps=20, methods=["ctw"],
                     grid=[{"tau": 0.25}, {"weights": {"wUx": 0.0, "wUe": 0.0}}])
    out = tmp_path / "out"
    rc = main(["simulate", str(cfg), "--out", str(out), "--seed", "99"])
    assert rc == 0
    capsys.readouterr()
    doc = json.loads((out / "report.json").read_text(encoding="utf-8"))
    validate_against("rejection_report.schema.json", doc)
    assert len(doc["reports"]) == 2
    first, second = doc["reports"]
    assert first["config"]["seed"] == 99 and second["config"]["seed"] == 99
    assert first["config"]["tau"] == 0.25
    # deep merge keeps untouched weights from the base document
    assert second["config"]["weights"]["wUx"] == 0.0
    assert second["config"]["weights"]["wVx"] == 1.0


def test_simulate_byte_identical_across_thread_counts(tmp_path, capsys):
    cfg = sim_config(tmp_path, reps=24)
    out1, out4 = tmp_path / "t1", tmp_path / "t4"
    assert main(["simulate", str(cfg), "--out", str(out1), "--threads", "1"]) == 0
    assert main(["simulate", str(cfg), "--out", str(out4), "--threads", "4"]) == 0
    capsys.readouterr()
    assert (out1 / "report.csv").read_bytes() == (out4 / "report.csv").read_bytes()
    assert (out1 / "report.json").read_bytes() == (out4 / "report.json").read_bytes()


def test_simulate_thread_env_fallback(tmp_path, capsys, monkeypatch):
    cfg = sim_config(tmp_path, reps=12, methods=["ctw"])
    out_env, out_one = tmp_path / "env", tmp_path / "one"
    monkeypatch.setenv("TWQR_THREADS", "3")
    assert main(["simulate", str(cfg), "--out", str(out_env)]) == 0
    monkeypatch.delenv("TWQR_THREADS")
    assert main(["simulate", str(cfg), "--out", str(out_one)]) == 0
    capsys.readouterr()
    assert (out_env / "report.csv").read_bytes() == (out_one / "report.csv").read_bytes()
    monkeypatch.setenv("TWQR_THREADS", "zero")
    assert main(["simulate", str(cfg), "--out", str(tmp_path / "bad")]) == 2


def test_simulate_input_errors(tmp_path, capsys):
    bad_json = tmp_path / "broken.json"
    bad_json.write_text("{not json", encoding="utf-8")
    assert main(["simulate", str(bad_json)]) == 2
    missing_key = tmp_path / "missing.json"
    missing_key.write_text(json.dumps({"G": 12, "H": 12}), encoding="utf-8")
    assert main(["simulate", str(missing_key)]) == 2
    assert main(["simulate", str(tmp_path / "absent.json")]) == 2
    unknown_key = tmp_path / "unknown.json"
    doc = json.loads(sim_config(tmp_path).read_text(encoding="utf-8"))
    doc["bogus"] = 1
    unknown_key.write_text(json.dumps(doc), encoding="utf-8")
    assert main(["simulate", str(unknown_key)]) == 2
    capsys.readouterr()


def test_demo_outputs_and_determinism(tmp_path, capsys):
    out1, out2 = tmp_path / "d1", tmp_path / "d2"
    args = ["demo-nongaussian", "--G", "16", "--H", "16",
            "--reps", "500", "--seed", "7"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    capsys.readouterr()
    summary = json.loads((out1 / "summary.json").read_text(encoding="utf-8"))
    validate_against("nongaussian_summary.schema.json", summary)
    assert summary["reps"] == 500
    with open(out1 / "empirical.csv", newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 500
    assert list(rows[0]) == ["index", "value"]
    float(rows[0]["value"])
    for name in ("empirical.csv", "reference.csv", "summary.json"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_demo_rejects_negative_c(tmp_path, capsys):
    rc = main(["demo-nongaussian", "--c", "-1", "--reps", "500",
               "--out", str(tmp_path)])
    assert rc == 2
    assert "InvalidConfig" in capsys.readouterr().err
