import json

import numpy as np
import pytest

from dcmm import assemble
from dcmm.bundle import load_answers, load_bundle
from dcmm.cli import main
from dcmm.data import load_csv, synth
from dcmm.schema import Schema
from dcmm.solvers import SolverConfig
from dcmm.workload import WorkloadSpec, build_workload


@pytest.fixture
def setup(tmp_path):
    schema = Schema.from_sizes([4, 3, 3])
    (tmp_path / "schema.json").write_text(json.dumps(schema.to_dict()))
    spec = {"family": "abs", "arities": [1, 2], "weights": {"random_seed": 4}}
    (tmp_path / "wl.json").write_text(json.dumps(spec))
    data = synth(schema, 300, 1)
    lines = ["A1,A2,A3"] + [",".join(map(str, r)) for r in data.records]
    (tmp_path / "data.csv").write_text("\n".join(lines) + "\n")
    return tmp_path, schema, WorkloadSpec.from_dict(spec)


def run(*argv):
    return main([str(a) for a in argv])


def plan(d, out="p", *extra):
    return run("plan", "--schema", d / "schema.json", "--workload", d / "wl.json", "--rho", 0.5, "--out", d / out, *extra)


def test_pipeline_matches_in_process(setup, capsys):
    d, schema, spec = setup
    assert plan(d) == 0
    assert "RMSE" in capsys.readouterr().out
    assert run("measure", "--bundle", d / "p/plan.json", "--data", d / "data.csv", "--seed", 7, "--out", d / "m.json") == 0
    assert run("answer", "--bundle", d / "p/plan.json", "--measurements", d / "m.json", "--workload", d / "wl.json", "--out", d / "a.jsonl") == 0
    rows = load_answers(d / "a.jsonl")

    wl = build_workload(schema, spec)
    mech, _ = assemble.plan_workload(wl, SolverConfig(), 0.5)
    ans, var = assemble.answer_workload(wl, mech, assemble.measure(mech, load_csv(d / "data.csv", schema), 7))
    assert [r["query_id"] for r in rows] == list(range(len(wl)))
    np.testing.assert_allclose([r["answer"] for r in rows], ans, rtol=1e-12, atol=1e-12)
    np.testing.assert_allclose([r["variance"] for r in rows], var, rtol=1e-12)

    _, obj = load_bundle(d / "p/plan.json")
    pred = np.sqrt(np.mean([r["variance"] for r in rows]))
    assert obj["predicted"]["rmse"] == pytest.approx(pred, rel=1e-12)
    meas = json.loads((d / "m.json").read_text())["measurements"]
    assert sum(len(m["z"]) for m in meas) == sum(p["rows"] for p in obj["plans"])


def test_plan_is_byte_identical(setup):
    d, *_ = setup
    plan(d, "p1")
    plan(d, "p2")
    assert (d / "p1/plan.json").read_bytes() == (d / "p2/plan.json").read_bytes()


def test_compare(setup, capsys):
    d, *_ = setup
    assert plan(d, "p", "--compare", "fourier", "fixed-basis") == 0
    cmp = json.loads((d / "p/compare.json").read_text())
    assert cmp["optimal"]["rmse"] < cmp["fourier"]["rmse"]
    assert cmp["optimal"]["rmse"] <= cmp["fixed_basis"]["rmse"]
    out = capsys.readouterr().out
    assert "fourier" in out and "fixed_basis" in out


def test_report(setup, capsys):
    d, *_ = setup
    plan(d)
    capsys.readouterr()
    assert run("report", "--bundle", d / "p/plan.json", "--eps", 0.5, 1, "--json") == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["mu"] == pytest.approx(np.sqrt(0.5))
    assert [r["epsilon"] for r in rep["approx_dp"]] == [0.5, 1]
    assert set(rep["timings"]) >= {"decompose", "solve", "assemble", "total", "peak_mb"}
    assert run("report", "--bundle", d / "p/plan.json") == 0
    text = capsys.readouterr().out
    assert "Decomp" in text and "Mem" in text and "delta" not in text


def test_empty_dataset_gives_noise_only(setup):
    d, *_ = setup
    plan(d)
    (d / "empty.csv").write_text("A1,A2,A3\n")
    assert run("measure", "--bundle", d / "p/plan.json", "--data", d / "empty.csv", "--seed", 1, "--out", d / "m.json") == 0
    assert json.loads((d / "m.json").read_text())["measurements"]


def test_errors(setup, capsys):
    d, *_ = setup
    plan(d)
    rc = run("answer", "--bundle", d / "p/plan.json", "--measurements", d / "nope.json", "--workload", d / "wl.json", "--out", d / "a.jsonl")
    assert rc == 2 and "measure" in capsys.readouterr().err
    assert plan(d, "q", "--rho", -1) == 2  # later --rho wins
    (d / "bad.csv").write_text("A1,A2,A3\n9,0,0\n")
    assert run("measure", "--bundle", d / "p/plan.json", "--data", d / "bad.csv", "--seed", 1, "--out", d / "m.json") == 2
    assert "row 2" in capsys.readouterr().err


def test_cell_cap_without_fallback(setup, capsys):
    d, *_ = setup
    assert plan(d, "p", "--cell-cap", 5) == 2
    assert "cap" in capsys.readouterr().err
    assert plan(d, "p", "--cell-cap", 5, "--fallback", "fourier") == 0
