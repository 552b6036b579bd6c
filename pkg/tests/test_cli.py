import csv
import dataclasses
import json
import subprocess
import sys

import pytest

from hawkesnet import cli
from hawkesnet.errors import NumericError
from hawkesnet.metrics import FittedModel
from hawkesnet.model import ModelSpec
from hawkesnet.simulator import EventData


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# ")
    return json.loads(lines[0][2:]), list(csv.DictReader(lines[1:]))


def strip_created(text):
    return "\n".join(line for line in text.replace(", ", ",\n").splitlines()
                     if '"created"' not in line)


@pytest.fixture(scope="module")
def sim(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert run("simulate", "--preset", "setting1_1", "--T", 3, "--seed", 5,
               "--model-out", d / "model.json", "--out", d / "ev.csv") == 0
    return d


def test_int_list():
    assert cli.int_list("4,5,6") == [4, 5, 6]
    assert cli.int_list("3..6") == [3, 4, 5, 6]
    assert cli.int_list("2,4..5") == [2, 4, 5]


def test_simulate_outputs(sim, tmp_path):
    ev = EventData.load(sim / "ev.csv")
    assert ev.p == 21 and ev.horizon_T == 3.0 and ev.n_events > 0
    assert ev.provenance["run"]["config"]["seed"] == 5
    m = ModelSpec.from_json(sim / "model.json")
    assert m.p == 21
    assert run("simulate", "--model", sim / "model.json", "--seed", 5,
               "--out", tmp_path / "e.jsonl") == 0
    ev2 = EventData.load(tmp_path / "e.jsonl")
    assert ev2 == ev


def test_fit_evaluate_pipeline(sim):
    assert run("fit", sim / "ev.csv", "--m0", 6, "--m1", 4, "--threads", 1,
               "--design-cache", sim / "d.bin", "--gic-csv", sim / "gic.csv",
               "--out", sim / "fit.json") == 0
    fm = FittedModel.from_json(sim / "fit.json")
    prov = fm.extra["provenance"]
    assert prov["command"] == "fit" and prov["config"]["m0"] == 6
    assert len(next(iter(prov["inputs"].values()))) == 16
    assert (fm.m0, fm.m1) == (6, 4)
    head, rows = read_csv(sim / "gic.csv")
    assert {int(r["node"]) for r in rows} <= set(range(21))
    assert run("evaluate", "--model", sim / "model.json", "--fit", sim / "fit.json",
               "--out", sim / "eval.csv") == 0
    _, rows = read_csv(sim / "eval.csv")
    assert 0.0 <= float(rows[0]["f1"]) <= 1.0


def test_fit_rerun_identical_but_timestamp(sim):
    args = ("fit", sim / "ev.csv", "--m0", 5, "--m1", 4, "--threads", 1,
            "--out", sim / "r.json")
    run(*args)
    a = (sim / "r.json").read_text()
    run(*args)
    b = (sim / "r.json").read_text()
    assert strip_created(a) == strip_created(b)


def test_select_and_test(sim):
    assert run("select", sim / "ev.csv", "--m0-candidates", "4,5", "--m1-candidates", "4",
               "--out", sim / "sel.csv") == 0
    _, rows = read_csv(sim / "sel.csv")
    assert len(rows) == 2 and sum(r["selected"] == "True" for r in rows) == 1
    assert run("test", sim / "ev.csv", "--m0", 4, "--m1", 4, "--nodes", "0,1",
               "--out", sim / "test.csv") == 0
    head, rows = read_csv(sim / "test.csv")
    assert [int(r["node_j"]) for r in rows] == [0, 1]
    assert all(0.0 <= float(r["p_value"]) <= 1.0 for r in rows)
    assert head["config"]["alpha_level"] == 0.05


def test_replicate_single_is_deterministic(tmp_path):
    args = ["replicate", "--preset", "setting1_1", "--T", 10, "--reps", 1, "--seed", 3,
            "--m0", 6, "--m1", 4, "--threads", 1, "--rows-out", tmp_path / "rows.csv",
            "--out", tmp_path / "sum.csv"]
    outs = []
    for _ in range(2):
        assert run(*args) == 0
        outs.append([strip_created((tmp_path / f).read_text()) for f in ("rows.csv", "sum.csv")])
    assert outs[0] == outs[1]
    _, rows = read_csv(tmp_path / "rows.csv")
    assert len(rows) == 1 and float(rows[0]["f1"]) > 0.5


def test_config_errors(sim, tmp_path, capsys):
    assert run("fit", tmp_path / "missing.csv", "--m0", 4, "--m1", 4) == 2
    assert run("fit", sim / "ev.csv") == 2
    assert run("fit", sim / "ev.csv", "--m0", 4, "--m1", 9, "--degree1", 10) == 2
    assert run("fit", sim / "ev.csv", "--m0-candidates", "4,5") == 2
    assert "configuration error" in capsys.readouterr().err
    with pytest.raises(SystemExit):
        run("fit", sim / "ev.csv", "--m0", "x")


def test_nonconvergence_exit_code(sim, monkeypatch):
    real = cli.fit_all

    def stalled(*a, **k):
        fits, paths = real(*a, **k)
        return [dataclasses.replace(f, converged=False) if f else f for f in fits], paths

    monkeypatch.setattr(cli, "fit_all", stalled)
    out = sim / "nc.json"
    assert run("fit", sim / "ev.csv", "--m0", 4, "--m1", 4, "--threads", 1, "--out", out) == 4
    assert not all(FittedModel.from_json(out).converged)


def test_mismatched_model_is_config_error(sim, tmp_path):
    m = json.loads((sim / "model.json").read_text())
    small = {**m, "p": 2, "backgrounds": m["backgrounds"][:2], "transfers": []}
    (tmp_path / "m2.json").write_text(json.dumps(small))
    assert run("evaluate", "--model", tmp_path / "m2.json", "--fit", sim / "fit.json") == 2


def test_numeric_failure_exit_code(sim, monkeypatch, capsys):
    def broken(*a, **k):
        raise NumericError("non-finite coefficients for node 0")

    monkeypatch.setattr(cli, "fit_all", broken)
    assert run("fit", sim / "ev.csv", "--m0", 4, "--m1", 4, "--threads", 1,
               "--out", sim / "x.json") == 3
    assert "numeric failure" in capsys.readouterr().err


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "hawkesnet.cli", "--help"],
                         capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("simulate", "fit", "select", "test", "evaluate", "replicate"):
        assert cmd in out.stdout
