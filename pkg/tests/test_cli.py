import io
import json

import numpy as np
import pytest

from bmevt.cli import _grid_from_toml, main
from bmevt.simulate import simulate_armax


@pytest.fixture(scope="module")
def series_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "series.txt"
    rc = main(["simulate", "--model", "armax", "--eta", "0.5", "--n", "3600",
               "--seed", "5", "--out", str(path)])
    assert rc == 0
    return str(path)


def test_simulate_deterministic_and_exact(tmp_path):
    p1, p2 = tmp_path / "a.txt", tmp_path / "b.txt"
    args = ["simulate", "--model", "armax", "--eta", "0.5", "--n", "200", "--seed", "3"]
    assert main(args + ["--out", str(p1)]) == 0
    assert main(args + ["--out", str(p2)]) == 0
    assert p1.read_bytes() == p2.read_bytes()
    got = np.array([float(line) for line in p1.read_text().split()])
    want, _ = simulate_armax(200, 0.5, seed=3)
    assert np.array_equal(got, want)  # repr round-trips exactly


def test_simulate_to_stdout(capsys):
    assert main(["simulate", "--model", "arch", "--eta", "0.5", "--n", "50",
                 "--seed", "1", "--burn-in", "100"]) == 0
    out = capsys.readouterr().out
    assert len(out.splitlines()) == 50


def test_fit_json(series_file, capsys):
    assert main(["fit", "--input", series_file, "--m", "30"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"gamma", "mu", "sigma", "loglik", "k", "singular_info", "gamma_ci"}
    assert out["k"] == 120
    assert out["singular_info"] is False
    assert out["gamma"] == pytest.approx(1.0, abs=0.35)  # unit-Frechet tail
    lo, hi = out["gamma_ci"]
    assert lo < out["gamma"] < hi


def test_fit_to_file(series_file, tmp_path):
    out_path = tmp_path / "fit.json"
    assert main(["fit", "--input", series_file, "--m", "30", "--out", str(out_path)]) == 0
    out = json.loads(out_path.read_text())
    assert out["sigma"] > 0.0


def test_theta_json(series_file, capsys):
    assert main(["theta", "--input", series_file, "--m", "30"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert set(out) == {"theta", "sigma_tilde_sq", "var", "k_tilde", "m_tilde", "ci"}
    assert out["k_tilde"] == 120 and out["m_tilde"] == 30
    assert 0.3 <= out["theta"] <= 1.0
    assert 0.0 < out["ci"][0] < out["ci"][1] <= 1.0


def test_rl_symmetric_and_simulated(series_file, capsys):
    assert main(["rl", "--input", series_file, "--m", "30", "--tau", "0.9",
                 "--m-star", "360", "--method", "FS"]) == 0
    fs = json.loads(capsys.readouterr().out)
    assert fs["target"] == "return_level" and fs["m_star"] == 360
    assert fs["lo"] < fs["point"] < fs["hi"]

    args = ["rl", "--input", series_file, "--m", "30", "--tau", "0.9",
            "--m-star", "360", "--method", "FA", "--draws", "5000", "--seed", "9"]
    assert main(args) == 0
    fa1 = json.loads(capsys.readouterr().out)
    assert main(args) == 0
    fa2 = json.loads(capsys.readouterr().out)
    assert fa1 == fa2
    assert fa1["lo"] < fa1["point"] < fa1["hi"]


def test_rl_posterior_method(series_file, capsys):
    assert main(["rl", "--input", series_file, "--m", "30", "--tau", "0.9",
                 "--method", "BA", "--iters", "400", "--burn-in", "100", "--seed", "2"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["method"] == "BA" and out["m_star"] == 30
    assert np.isfinite([out["lo"], out["point"], out["hi"]]).all()
    assert out["lo"] < out["hi"]


def test_var_symmetric(series_file, capsys):
    assert main(["var", "--input", series_file, "--m", "30", "--tau-e", "0.999",
                 "--method", "FS"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["target"] == "extreme_quantile"
    assert 0.0 < out["theta"] <= 1.0
    assert out["lo"] < out["point"] < out["hi"]


def test_posterior_outputs(series_file, tmp_path, capsys):
    chain_csv = tmp_path / "chain.csv"
    theta_csv = tmp_path / "theta.csv"
    assert main(["posterior", "--input", series_file, "--m", "30",
                 "--iters", "400", "--burn-in", "100",
                 "--out", str(chain_csv), "--theta-out", str(theta_csv)]) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["draws"] == 300
    assert len(summary["ess"]) == 3
    assert 0.0 < summary["theta_mean"] <= 1.0
    assert 0.0 <= summary["theta_atom_weight"] < 1.0

    chain = np.loadtxt(chain_csv, delimiter=",", skiprows=1)
    assert chain.shape == (300, 5)
    theta_tab = np.loadtxt(theta_csv, delimiter=",", skiprows=1)
    assert theta_tab.shape[1] == 3
    sidecar = json.loads((tmp_path / "theta.csv.json").read_text())
    assert sidecar["adjusted"] is True
    assert sidecar["atom_weight"] == pytest.approx(summary["theta_atom_weight"])


def test_posterior_unadjusted_flag(series_file, tmp_path, capsys):
    theta_csv = tmp_path / "theta_raw.csv"
    assert main(["posterior", "--input", series_file, "--m", "30",
                 "--iters", "400", "--burn-in", "100", "--unadjusted",
                 "--out", str(tmp_path / "c.csv"), "--theta-out", str(theta_csv)]) == 0
    capsys.readouterr()
    sidecar = json.loads((tmp_path / "theta_raw.csv.json").read_text())
    assert sidecar["adjusted"] is False


def test_grid_from_toml_forms():
    assert _grid_from_toml({"grid": [[360, 30, 0], [720, 90, 0]]}) == ((360, 30, 0), (720, 90, 0))
    assert _grid_from_toml({"n": 360, "m": 30}) == ((360, 30, 0),)
    assert _grid_from_toml({"n": 360, "m": 30, "l": 6}) == ((360, 30, 6),)
    assert _grid_from_toml({"n": [360, 720], "m": 30}) == ((360, 30, 0), (720, 30, 0))
    assert _grid_from_toml({"n": [360, 720], "m": [30, 90], "l": [0, 0]}) == (
        (360, 30, 0), (720, 90, 0))
    with pytest.raises(ValueError):
        _grid_from_toml({"n": [360, 720], "m": [30, 60, 90]})


COVERAGE_TOML = """\
model = "armax"
eta = 0.5
grid = [[360, 30, 0]]
replications = 3
methods = ["FS"]
targets = ["gamma", "rl"]
truth_reps = 20000

[mcmc]
iters = 600
burn_in = 150
"""


def test_coverage_from_toml(tmp_path, capsys):
    cfg = tmp_path / "study.toml"
    cfg.write_text(COVERAGE_TOML)
    cov = tmp_path / "cov.csv"
    mse = tmp_path / "mse.csv"
    truths = tmp_path / "truths.csv"
    assert main(["coverage", "--config", str(cfg), "--out", str(cov),
                 "--mse-out", str(mse), "--truths-out", str(truths)]) == 0
    assert "wrote 2 coverage rows" in capsys.readouterr().out
    lines = cov.read_text().splitlines()
    assert lines[0] == "n,k,m,method,target,coverage,width,mc_se,reps,failed"
    assert len(lines) == 3
    assert all(line.startswith("360,12,30,FS,") for line in lines[1:])
    # no posterior method: MSE ratios are reported but undefined
    mse_lines = mse.read_text().splitlines()
    assert len(mse_lines) == 3 and ",nan," in mse_lines[1]
    truth_lines = truths.read_text().splitlines()
    assert truth_lines[0] == "n,m,target,truth,mc_se"
    assert len(truth_lines) == 2 and truth_lines[1].startswith("360,30,rl,")


MSE_TOML = """\
model = "armax"
eta = 0.5
n = 360
m = 30
replications = 3
methods = ["BS"]
targets = ["gamma"]

[mcmc]
iters = 600
burn_in = 150
"""


def test_mse_from_toml_scalar_grid(tmp_path, capsys):
    cfg = tmp_path / "mse.toml"
    cfg.write_text(MSE_TOML)
    out_csv = tmp_path / "ratios.csv"
    assert main(["mse", "--config", str(cfg), "--out", str(out_csv)]) == 0
    assert "wrote 1 MSE rows" in capsys.readouterr().out
    lines = out_csv.read_text().splitlines()
    assert lines[0] == "n,k,m,target,ratio,mse_median,mse_mle,reps,failed"
    ratio = float(lines[1].split(",")[4])
    assert np.isfinite(ratio) and ratio > 0.0


def test_diagnose_writes_three_tables(series_file, tmp_path, capsys):
    prefix = str(tmp_path / "diag")
    assert main(["diagnose", "--input", series_file, "--m-range", "20,30",
                 "--lags", "5", "--out-prefix", prefix]) == 0
    assert "diag_stability.csv" in capsys.readouterr().out
    stability = (tmp_path / "diag_stability.csv").read_text().splitlines()
    assert stability[0] == "m,k,theta,theta_lo,theta_hi,gamma,gamma_lo,gamma_hi"
    assert len(stability) == 3
    acf = (tmp_path / "diag_acf.csv").read_text().splitlines()
    assert acf[0] == "m,lag,acf_max,acf_sq,band"
    assert len(acf) == 11
    qq = (tmp_path / "diag_qq.csv").read_text().splitlines()
    assert qq[0] == "m,i,empirical,reference"
    assert len(qq) == 1 + 180 + 120


def test_stdin_and_comment_parsing(capsys, monkeypatch):
    text = "# calibration run\n1.5\n\n2.5 # spike\n0.7\n3.1\n0.9\n1.1\n2.2\n0.4\n1.9\n2.8\n0.6\n1.3\n"
    monkeypatch.setattr("sys.stdin", io.StringIO(text))
    assert main(["fit", "--input", "-", "--m", "1"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["k"] == 12


def test_exit_code_missing_file(capsys):
    assert main(["fit", "--input", "/no/such/file.txt", "--m", "30"]) == 1
    assert "bm-evt:" in capsys.readouterr().err


def test_exit_code_numerical_failure(tmp_path, capsys):
    flat = tmp_path / "flat.txt"
    flat.write_text("5.0\n" * 12)
    assert main(["fit", "--input", str(flat), "--m", "1"]) == 2
    assert "distinct" in capsys.readouterr().err


def test_exit_code_bad_level(series_file, capsys):
    assert main(["rl", "--input", series_file, "--m", "30", "--tau", "1.5"]) == 2
    capsys.readouterr()


def test_exit_code_empty_input(tmp_path, capsys):
    empty = tmp_path / "empty.txt"
    empty.write_text("# nothing but comments\n\n")
    assert main(["fit", "--input", str(empty), "--m", "30"]) == 2
    assert "no data" in capsys.readouterr().err


def test_usage_errors_exit_one():
    with pytest.raises(SystemExit) as exc:
        main([])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--model", "garch", "--eta", "0.5", "--n", "10"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["--help"])
    assert exc.value.code == 0
