import csv
import io
import json

import pytest

from artifact import harness
from artifact.cli import main
from artifact.model_core import ParamError


def ssq_cfg(**over):
    d = {"model": "ssq", "params": {"lambda": 2.0, "mus": [1.0], "C": 1.0},
         "gamma_grid": [1.0, 0.1, 0.01], "outputs": ["p0"]}
    d.update(over)
    return d


def test_ssq_p0_sweep_contains_truth():
    rows = harness.run_sweep(ssq_cfg())
    assert len(rows) == 3
    assert [r["index"] for r in rows] == sorted(r["index"] for r in rows)
    for r in rows:
        assert r["kind"] == "p0" and r["valid"] and r["contains"]
        assert r["lower"] <= r["truth"] <= r["upper"]


def test_row_count_is_grid_product():
    rows = harness.run_sweep(ssq_cfg(outputs=["p0", "lp_norm"], p_grid=[2.0, 4.0]))
    assert len(rows) == 3 * 1 + 3 * 2


def test_jsq_single_server_truth_matches_ssq():
    s = harness.run_sweep(ssq_cfg())
    j = harness.run_sweep(ssq_cfg(model="jsq", outputs=["p_empty"]))
    assert [r["truth"] for r in s] == [r["truth"] for r in j]


@pytest.mark.parametrize("bad", [
    {"a_grid": []},
    {"outputs": ["tail"]},
    {"outputs": ["tail"], "a_grid": [1.0], "delta_grid": [0.5]},
    {"outputs": ["nonsense"]},
    {"seed": -1},
    {"model": "jsq", "params": {"lambda": 2, "mus": [1, 1, 1, 1]}, "outputs": ["ssc"],
     "p_grid": [2.0]},
    {"estimator": {"kind": "simulate", "horizon": 100, "burn_in": 1}},
    {"bogus_field": 1},
])
def test_config_rejections(bad):
    with pytest.raises(ParamError):
        harness.SweepConfig.from_dict(ssq_cfg(**bad))


def test_simulated_jsq_sweep():
    cfg = {"model": "jsq", "params": {"lambda": 2.0, "mus": [0.5, 0.5], "C": 1.0},
           "gamma_grid": [0.5], "outputs": ["p_empty", "zero_mass_sum"],
           "estimator": {"kind": "simulate", "horizon": 2e4, "burn_in": 100}, "seed": 8}
    rows = harness.run_sweep(cfg)
    assert len(rows) == 2
    assert all(r["truth_ci"] > 0 for r in rows)


def test_emit_formats(tmp_path):
    assert harness.emit([], "csv").strip() == ",".join(harness.COLUMNS)
    rows = harness.run_sweep(ssq_cfg())
    text = harness.emit(rows, "csv", tmp_path / "rows.csv")
    assert (tmp_path / "rows.csv").read_text() == text
    parsed = list(csv.DictReader(io.StringIO(text)))
    assert len(parsed) == 3
    assert [float(p["truth"]) for p in parsed] == [r["truth"] for r in rows]
    back = json.loads(harness.emit(rows, "json"))
    assert [b["upper"] for b in back] == [r["upper"] for r in rows]


def test_phase_diagram_columns():
    rows = harness.phase_diagram(ssq_cfg(outputs=["tail"], gamma_grid=[1e-2, 1e-3],
                                         delta_grid=[0.0, 0.5], D_grid=[1.0]))
    assert len(rows) == 4
    assert set(harness.PHASE_COLUMNS) <= set(rows[0])
    assert {r["normalization"] for r in rows} == {"gaussian_ratio", "a2_over_2"}


def run(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


def test_cli_exit_codes(tmp_path, capsys):
    base = ["--lam", "2", "--mu", "1", "--gamma", "0.1"]
    code, out = run(["ssq-exact", *base], capsys)
    assert code == 0 and out.out
    code, out = run(["ssq-exact", "--lam", "2", "--mu", "1", "--gamma", "-1"], capsys)
    assert code == 2
    code, _ = run(["ssq-exact", "--lam", "2"], capsys)
    assert code == 2
    # C = 1.5 breaks the overload assumption, so strict mode must refuse
    code, _ = run(["ssq-bounds", *base, "--kind", "p0", "--strict-regime"], capsys)
    assert code == 3
    code, _ = run(["ssq-bounds", *base, "--C", "1", "--kind", "p0", "--strict-regime"], capsys)
    assert code == 0


def test_cli_sweep_and_config(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(ssq_cfg()))
    out = tmp_path / "rows.json"
    code, _ = run(["sweep", "--config", str(cfg), "--format", "json", "--out", str(out)], capsys)
    assert code == 0 and len(json.loads(out.read_text())) == 3
    cfg.write_text(json.dumps(ssq_cfg(a_grid=[])))
    code, _ = run(["sweep", "--config", str(cfg)], capsys)
    assert code == 2
    opts = tmp_path / "opts.json"
    opts.write_text(json.dumps({"lam": 2, "mus": "0.5,0.5", "gamma": 0.5}))
    code, res = run(["jsq-solve", "--config", str(opts), "--cap", "30"], capsys)
    assert code == 0 and res.out
