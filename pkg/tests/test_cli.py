import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from tailgraph import __version__
from tailgraph import cli
from tailgraph.graph import FactorizedTailModel, factorized_censored_density


@pytest.fixture
def gamma_file(tmp_path):
    p = tmp_path / "gamma.json"
    p.write_text(json.dumps({"Gamma": [[0, 0.5, 1.0], [0.5, 0, 0.5], [1.0, 0.5, 0]]}))
    return str(p)


@pytest.fixture
def sim_csv(tmp_path, gamma_file):
    out = tmp_path / "draws.csv"
    assert cli.main(["simulate", "--family", "hr", "--gamma", gamma_file, "--n", "5000", "--seed", "7",
                     "-o", str(out)]) == 0
    return str(out)


def _rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.reader(fh))


def test_simulate_writes_csv_with_header(sim_csv):
    rows = _rows(sim_csv)
    assert rows[0] == ["x0", "x1", "x2"]
    assert len(rows) == 5001
    X = np.array(rows[1:], dtype=float)
    assert np.all(X.max(axis=1) >= 1)


def test_simulate_gamma_csv_and_other_families(tmp_path):
    g = tmp_path / "g.csv"
    g.write_text("a,b\n0,1\n1,0\n")
    out = tmp_path / "o.csv"
    assert cli.main(["simulate", "--gamma", str(g), "--n", "10", "--seed", "1", "-o", str(out)]) == 0
    assert len(_rows(out)) == 11
    assert cli.main(["simulate", "--family", "bivariate-sum", "--n", "10", "--seed", "1", "-o", str(out)]) == 0
    assert cli.main(["simulate", "--family", "pareto", "--alpha", "2", "--n", "10", "--seed", "1",
                     "-o", str(out)]) == 0


def test_transform_columns_and_summary(tmp_path, sim_csv):
    out, summ = tmp_path / "t.csv", tmp_path / "s.json"
    assert cli.main(["transform", "-i", sim_csv, "--tail", "0.05", "-o", str(out), "--summary", str(summ)]) == 0
    rows = _rows(out)
    assert rows[0] == ["z_x0", "z_x1", "z_x2", "y_x0", "y_x1", "y_x2", "pattern"]
    Y = np.array([r[3:6] for r in rows[1:]], dtype=float)
    a = np.abs(Y)
    assert not np.any((a > 0) & (a < 1))
    assert all(r[6] == "".join("1" if v != 0 else "0" for v in y) for r, y in zip(rows[1:], Y))
    s = json.loads(summ.read_text())
    assert s["version"] == __version__ and "config" in s
    assert 0 < s["transform"]["p_hat"] < 1


def test_select_graph_json_and_tests_csv(tmp_path, sim_csv):
    out, tcsv = tmp_path / "g.json", tmp_path / "tests.csv"
    assert cli.main(["select-graph", "-i", sim_csv, "--seed", "1", "-o", str(out), "--tests-csv", str(tcsv)]) == 0
    art = json.loads(out.read_text())
    assert art["graph"]["n"] == 3
    assert len(_rows(tcsv)) == 4


def test_fit_density_report_roundtrip(tmp_path, sim_csv, capsys):
    out = tmp_path / "fit.json"
    assert cli.main(["fit", "-i", sim_csv, "--tail", "0.05", "--family", "hr", "--seed", "1", "-o", str(out)]) == 0
    art = json.loads(out.read_text())
    assert art["version"] == __version__
    assert art["config"]["seed"] == 1
    assert {"model", "report"} <= set(art)
    # same artifact as the library pipeline
    from tailgraph import infer
    X = np.array(_rows(sim_csv)[1:], dtype=float)
    model, rep = infer.fit_pipeline(X, {"tail_fraction": 0.05, "family": "hr", "seed": 1})
    assert art["report"]["log_likelihood"] == pytest.approx(rep["log_likelihood"], rel=1e-12)

    pts = tmp_path / "pts.csv"
    pts.write_text("y0,y1,y2\n2,0,3\n0,0,0\n1.5,1.5,0\n")
    dens = tmp_path / "dens.csv"
    assert cli.main(["density", "--model", str(out), "--points", str(pts), "-o", str(dens)]) == 0
    rows = _rows(dens)
    assert rows[0] == ["y0", "y1", "y2", "density"]
    fm = FactorizedTailModel.from_dict(art["model"])
    expect = factorized_censored_density(fm, np.array([[2, 0, 3], [0, 0, 0], [1.5, 1.5, 0]], dtype=float))
    np.testing.assert_allclose([float(r[3]) for r in rows[1:]], expect, rtol=1e-12)

    assert cli.main(["report", "-i", str(out)]) == 0
    text = capsys.readouterr().out
    assert "graph:" in text and "total log-likelihood" in text


def test_fit_is_byte_identical(tmp_path, sim_csv):
    out = tmp_path / "a.json"
    blobs = []
    for _ in range(2):
        assert cli.main(["fit", "-i", sim_csv, "--seed", "3", "-o", str(out)]) == 0
        blobs.append(out.read_bytes())
    assert blobs[0] == blobs[1]


def test_check_rv_gaussian(tmp_path):
    out = tmp_path / "rv.json"
    assert cli.main(["check-rv", "--fixture", "gaussian", "--decay", "exp-sq", "-o", str(out)]) == 0
    art = json.loads(out.read_text())
    assert art["survival_index"]["alpha"] == pytest.approx(-0.5, abs=0.01)


def test_check_rv_example2(tmp_path):
    out = tmp_path / "rv.json"
    assert cli.main(["check-rv", "--fixture", "example2", "--t-grid", "100", "1000", "10000",
                     "-o", str(out)]) == 0
    art = json.loads(out.read_text())
    h = np.array(art["angular_limit"]["h"])
    np.testing.assert_allclose(h / h[-1], np.tile(np.linspace(0.05, 1.0, 20)[:, None], (1, h.shape[1])),
                               atol=1e-3)


def test_config_errors_listed_exhaustively(capsys):
    code = cli.main(["fit", "-i", "/nonexistent.csv", "--tail", "0.9"])
    err = capsys.readouterr().err
    assert code == 2
    assert "tail_fraction" in err and "--seed" in err and "not found" in err
    assert all(line.startswith("[config]") for line in err.strip().splitlines())


def test_simulate_missing_arguments(capsys):
    assert cli.main(["simulate", "--family", "student", "--seed", "1"]) == 2
    err = capsys.readouterr().err
    assert "--Q" in err and "--n" in err


def test_stage_failure_exit_code(tmp_path, capsys):
    bad = tmp_path / "tiny.csv"
    bad.write_text("a,b\n" + "\n".join(f"{i},{i}" for i in range(10)) + "\n")
    assert cli.main(["fit", "-i", str(bad), "--seed", "1"]) == 1
    assert capsys.readouterr().err.startswith("[transform]")


def test_csv_requires_header(tmp_path, capsys):
    bad = tmp_path / "nohead.csv"
    bad.write_text("1,2\n3,4\n")
    assert cli.main(["transform", "-i", str(bad)]) == 1
    assert "header" in capsys.readouterr().err


def test_run_config_validate_direct():
    cfg = cli.RunConfig(command="check-rv", extra={"fixture": "nope", "decay": "zzz"})
    errs = cfg.validate()
    assert any("fixture" in e for e in errs) and any("decay" in e for e in errs)


def test_console_entry_point_version():
    r = subprocess.run([sys.executable, "-m", "tailgraph.cli", "--version"], capture_output=True, text=True)
    assert r.returncode == 0
    assert __version__ in r.stdout
