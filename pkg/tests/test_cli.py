import json
import subprocess
import sys

import numpy as np
import pytest
import yaml

from kooprep import cli
from kooprep import koopman as kp
from kooprep.observables import Monomials


@pytest.fixture
def run(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path))
    monkeypatch.chdir(tmp_path)

    def _run(*argv):
        code = cli.main([str(a) for a in argv])
        out, err = capsys.readouterr()
        return code, out, err

    return _run


def write_diag(path):
    kp.KoopmanMatrix(Monomials(1, 2), np.diag([1.0, 0.5, 0.25])).to_json(path)


def test_simulate_logistic(run, tmp_path):
    code, out, _ = run("simulate", "--system", "logistic:r=3.5", "--x0", "0.2", "--steps", "10", "--out", "t.csv")
    assert code == 0 and out.startswith("simulate:")
    rows = (tmp_path / "t.csv").read_text().splitlines()[1:]
    assert len(rows) == 11
    assert float(rows[0].split(",")[1]) == 0.2
    assert float(rows[1].split(",")[1]) == pytest.approx(0.56, abs=1e-15)


def test_spectrum_csv(run, tmp_path):
    write_diag(tmp_path / "k.json")
    code, _, _ = run("spectrum", "--matrix", "k.json", "--out", "s.csv")
    assert code == 0
    rows = np.loadtxt(tmp_path / "s.csv", delimiter=",", skiprows=1)
    np.testing.assert_allclose(rows[:, :2], [[1, 0], [0.5, 0], [0.25, 0]], atol=1e-12)


def test_unknown_subcommand(run):
    code, _, err = run("frobnicate")
    assert code == 1
    doc = json.loads(err)
    assert doc["exit_code"] == 1
    assert "spectrum" in doc["valid_subcommands"]


def test_exit_codes(run):
    code, _, err = run("gramian", "--A", "1.5", "--x0", "1")
    assert code == 1 and json.loads(err)["error"] == "DomainError"
    code, _, err = run("simulate", "--system", "van_der_pol:mu=1e6", "--x0", "1e6,1e6", "--horizon", "1", "--dt", "0.1")
    assert code == 2 and json.loads(err)["error"] == "DivergenceError"
    code, _, _ = run("koopman", "--dict", "monomials:n=1,d=2", "--system", "logistic", "--rank-tol", "-1")
    assert code == 1
    code, _, _ = run("spectrum", "--matrix", "missing.json")
    assert code == 1


def test_koopman_and_observability(run, tmp_path):
    code, _, _ = run("koopman", "--method", "exact", "--system", "linear:A=0.9 0;0 0.8,discrete=true",
                     "--dict", "linear:n=2,const=false", "--out", "k.json")
    assert code == 0
    code, out, _ = run("observability", "--matrix", "k.json", "--x0", "1,0", "--out", "o.json")
    assert json.loads((tmp_path / "o.json").read_text())["unobservable_dimension"] == 1
    run("observability", "--matrix", "k.json", "--x0", "1,0", "--x0", "0,1", "--out", "o2.json")
    assert json.loads((tmp_path / "o2.json").read_text())["unobservable_dimension"] == 0
    code, out, _ = run("kalman", "--matrix", "k.json", "--x0", "1,0", "--out", "kal.json")
    doc = json.loads((tmp_path / "kal.json").read_text())
    assert doc["K_o"] == [[pytest.approx(0.9)]]
    assert doc["identifiability"]["recoverable_percent"] == pytest.approx(50)


def test_negative_box_values(run, tmp_path):
    code, out, _ = run("transport", "--system", "linear:A=-1", "--density", "gauss:c=0;s=0.4",
                       "--grid", "256", "--box", "-5:5", "--t", "0.5", "--out", "phi.txt")
    assert code == 0
    assert (tmp_path / "phi.txt").read_text().startswith("# box -5 5")
    code, out, _ = run("transport", "--method", "pde", "--system", "linear:A=-1", "--density",
                       "file=phi.txt", "--grid", "256", "--box", "-5:5", "--t", "0.5")
    assert code == 0 and "method=pde" in out


def test_gramian_and_optimal_outputs(run, tmp_path):
    code, out, _ = run("gramian", "--A", "0.5", "--C", "1", "--x0", "1", "--out", "g.json")
    doc = json.loads((tmp_path / "g.json").read_text())
    assert doc["W"][0][0] == pytest.approx(4 / 3, abs=1e-12)
    assert doc["energy"]["max_discrepancy"] <= 1e-10
    code, out, _ = run("optimal-outputs", "--A", "0.9 0;0 0.1", "--q", "1", "--out", "c.csv")
    with open(tmp_path / "c.csv") as fh:
        rows = np.loadtxt(fh, delimiter=",", comments="#", ndmin=2)
    np.testing.assert_allclose(np.abs(rows), [[1, 0]], atol=1e-12)


def test_adjoint_and_unitarity(run):
    code, out, _ = run("adjoint-check", "--system", "linear:A=-1", "--phi", "gauss:c=0.5;s=0.5",
                       "--psi", "gauss:c=-0.3;s=0.7", "--grid", "1024", "--box", "-8:8", "--t", "0.5")
    assert code == 0
    rel = float(out.split("rel_error=")[1])
    assert rel <= 1e-4
    code, out, _ = run("unitarity", "--system", "constant_advection", "--density", "gauss:c=-2;s=0.5",
                       "--grid", "1024", "--box", "-8:8", "--t", "1")
    assert code == 0 and abs(float(out.split("ratio=")[1]) - 1) <= 1e-3


def test_represent(run, tmp_path):
    code, out, _ = run("represent", "--system", "linear:A=0.5,discrete=true", "--dict", "monomials:n=1,d=2",
                       "--x0", "0.7", "--steps", "5", "--out", "r.csv")
    assert code == 0
    assert float(out.split("discrepancy=")[1]) <= 1e-12


def pipeline_doc():
    return {
        "seed": 7,
        "steps": [
            {"name": "sim1", "command": "simulate", "system": "linear:A=0.9 0.1;0 0.8,discrete=true",
             "x0": "1,0", "steps": 30, "out": "sim1.csv"},
            {"name": "sim2", "command": "simulate", "system": "linear:A=0.9 0.1;0 0.8,discrete=true",
             "x0": "0,1", "steps": 30, "out": "sim2.csv"},
            {"name": "edmd", "command": "koopman", "method": "edmd", "dict": "linear:n=2,const=false",
             "data": ["@sim1", "@sim2"], "out": "k.json"},
            {"name": "obs1", "command": "observability", "matrix": "@edmd", "x0": ["1,0"], "out": "o1.json"},
            {"name": "obs2", "command": "observability", "matrix": "@edmd", "x0": ["1,0", "0,1"], "out": "o2.json"},
            {"name": "spec", "command": "spectrum", "matrix": "@edmd", "out": "s.csv"},
        ],
    }


def test_pipeline_monotone_and_reproducible(run, tmp_path):
    (tmp_path / "p.yaml").write_text(yaml.safe_dump(pipeline_doc()))
    assert run("pipeline", "--config", "p.yaml", "--manifest", "m1.json")[0] == 0
    first = {p: (tmp_path / p).read_bytes() for p in ("k.json", "o1.json", "o2.json", "s.csv", "sim1.csv")}
    assert run("pipeline", "--config", "p.yaml", "--manifest", "m2.json")[0] == 0
    for p, data in first.items():
        assert (tmp_path / p).read_bytes() == data
    assert (tmp_path / "m1.json").read_bytes() == (tmp_path / "m2.json").read_bytes()
    o1 = json.loads(first["o1.json"])
    o2 = json.loads(first["o2.json"])
    assert o2["unobservable_dimension"] <= o1["unobservable_dimension"]
    manifest = json.loads((tmp_path / "m1.json").read_text())
    assert manifest["seed"] == 7 and manifest["version"]
    assert [s["name"] for s in manifest["steps"]] == ["sim1", "sim2", "edmd", "obs1", "obs2", "spec"]


def test_pipeline_validation(run, tmp_path):
    (tmp_path / "e.yaml").write_text("steps: []\n")
    assert run("pipeline", "--config", "e.yaml", "--manifest", "e.json")[0] == 0
    assert json.loads((tmp_path / "e.json").read_text())["steps"] == []

    cyc = {"steps": [{"name": "a", "command": "spectrum", "matrix": "@b", "out": "a.csv"},
                     {"name": "b", "command": "spectrum", "matrix": "@a", "out": "b.csv"}]}
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(cyc))
    code, _, err = run("pipeline", "--config", "c.yaml")
    msg = json.loads(err)["message"]
    assert code == 1
    assert "cyclic" in msg and ("a -> b" in msg or "b -> a" in msg)

    missing = {"steps": [{"name": "a", "command": "spectrum", "matrix": "@nowhere", "out": "a.csv"}]}
    (tmp_path / "m.yaml").write_text(yaml.safe_dump(missing))
    code, out, err = run("pipeline", "--config", "m.yaml")
    assert code == 1 and "nowhere" in err and out == ""

    doc = pipeline_doc()
    doc["steps"].insert(0, doc["steps"].pop(2))  # edmd before its inputs
    (tmp_path / "f.yaml").write_text(yaml.safe_dump(doc))
    code, out, err = run("pipeline", "--config", "f.yaml")
    assert code == 1 and out == "" and not (tmp_path / "sim1.csv").exists()


def test_experiment_config_run(run, tmp_path):
    cfg = cli.ExperimentConfig("simulate", {"system": "logistic:r=3.5", "x0": 0.2, "steps": 3, "out": "x.csv"})
    assert cli.run(cfg) == 0
    assert len((tmp_path / "x.csv").read_text().splitlines()) == 5


def test_console_script_help_and_version():
    res = subprocess.run([sys.executable, "-m", "kooprep.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and "0.1.0" in res.stdout
    res = subprocess.run([sys.executable, "-m", "kooprep.cli", "transport", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "--method" in res.stdout
