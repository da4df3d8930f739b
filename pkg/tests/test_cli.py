import csv
import io
import sys

import numpy as np
import pytest

from proxpath.cli import main

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


def run(*argv):
    return main([str(a) for a in argv])


def read_report(path):
    lines = [l for l in path.read_text().splitlines() if not l.startswith("#")]
    return {r["estimator"]: r for r in csv.DictReader(io.StringIO("\n".join(lines)))}


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    d = tmp_path_factory.mktemp("sim")
    out = d / "d.csv"
    assert run("simulate", "--n", 1000, "--seed", 7, "--n-mc", 200_000, "--out", out) == 0
    return out


def test_simulate_line_count_and_sidecar(simulated):
    assert len(simulated.read_text().splitlines()) == 1001
    side = tomllib.loads(simulated.with_name("d.csv.toml").read_text())
    assert side["config"]["seed"] == 7 and side["config"]["simulate"]["n"] == 1000
    assert set(side["oracle"]) >= {"psi", "psi_mc_se", "ey1", "ey1_mc_se"}
    assert abs(side["oracle"]["psi"] - 0.6) < 5 * side["oracle"]["psi_mc_se"]


def test_simulate_byte_identical(simulated, tmp_path):
    out = tmp_path / "d.csv"
    assert run("simulate", "--n", 1000, "--seed", 7, "--n-mc", 200_000, "--out", out) == 0
    assert out.read_bytes() == simulated.read_bytes()


def test_rerun_from_echoed_config(simulated, tmp_path):
    out = tmp_path / "again.csv"
    assert run("simulate", "--config", str(simulated) + ".toml", "--out", out) == 0
    assert out.read_bytes() == simulated.read_bytes()


def test_simulate_n_zero_is_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("simulate", "--n", 0, "--out", tmp_path / "x.csv")
    assert exc.value.code != 0
    assert "--n" in capsys.readouterr().err


def test_estimate_quadr_matches_oracle(simulated, tmp_path):
    out = tmp_path / "r.csv"
    assert run("estimate", "--in", simulated, "--estimators", "quadr", "--nuisance", "parametric",
               "--bootstrap-B", 200, "--out", out) == 0
    rep = read_report(out)["P-quadR"]
    oracle = tomllib.loads(simulated.with_name("d.csv.toml").read_text())["oracle"]
    est, se = float(rep["estimate"]), float(rep["se"])
    assert abs(est - oracle["psi"]) < 5 * np.hypot(se, oracle["psi_mc_se"])
    assert float(rep["ci_lo"]) < est < float(rep["ci_hi"])
    # resolved config echoed in the report header and in the sidecar
    assert out.read_text().startswith("# [config]")
    assert (tmp_path / "r.csv.txt").exists() and (tmp_path / "r.csv.toml").exists()


def test_estimate_dml_deterministic(simulated, tmp_path):
    outs = []
    for k in range(2):
        out = tmp_path / f"dml{k}.csv"
        assert run("estimate", "--in", simulated, "--estimators", "dml", "--folds", 5, "--seed", 3, "--out", out) == 0
        outs.append(out.read_text().replace(str(out), ""))
    assert outs[0] == outs[1]


def test_estimate_all_with_effects(simulated, tmp_path):
    out = tmp_path / "all.csv"
    assert run("estimate", "--in", simulated, "--estimators", "por,pipw,phybrid1,phybrid2,quadr",
               "--bootstrap-B", 50, "--effects", "--out", out) == 0
    rep = read_report(out)
    assert list(rep) == ["P-OR", "P-IPW", "P-hybrid1", "P-hybrid2", "P-quadR", "EY1", "P_AMY"]


def test_unknown_estimator_lists_valid_names(simulated, capsys):
    with pytest.raises(SystemExit) as exc:
        run("estimate", "--in", simulated, "--estimators", "foo")
    assert exc.value.code == 2
    err = capsys.readouterr().err
    assert "foo" in err and "quadr" in err and "dml" in err


def test_bad_input_file_exits_nonzero(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("y,a,d1,m1,z1,w1,x1\n1,2,0,0,0,0,0\n")
    assert run("estimate", "--in", bad) == 1
    assert "row 1" in capsys.readouterr().err


def test_fit_bridges_writes_six(simulated, tmp_path):
    out = tmp_path / "b.txt"
    assert run("fit-bridges", "--in", simulated, "--out", out) == 0
    assert out.read_text().count("kind ") == 6


def test_study_smoke(tmp_path):
    out = tmp_path / "s.csv"
    assert run("study", "--scenarios", 1, "--reps", 5, "--n", 200, "--bootstrap-B", 20,
               "--n-mc", 10_000, "--out", out) == 0
    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert len(lines) == 1 + 5  # header and one row per estimator
    text = (tmp_path / "s.csv.txt").read_text()
    assert "Coverage" in text and "P-quadR" in text


def test_study_reps_zero_is_usage_error(capsys):
    with pytest.raises(SystemExit) as exc:
        run("study", "--reps", 0)
    assert exc.value.code != 0


def test_config_file_and_flag_precedence(tmp_path):
    conf = tmp_path / "c.toml"
    conf.write_text("seed = 11\n[simulate]\nn = 50\nn_mc = 10000\n")
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run("simulate", "--config", conf, "--out", a) == 0
    assert len(a.read_text().splitlines()) == 51
    assert run("simulate", "--config", conf, "--n", 20, "--out", b) == 0
    assert len(b.read_text().splitlines()) == 21
    side = tomllib.loads((tmp_path / "b.csv.toml").read_text())
    assert side["config"]["seed"] == 11
