import json
import math
import shutil
import subprocess
import sys

import pytest
import yaml

from fracsobolev import cli
from fracsobolev.io import read_csv_columns

FAST = {
    "spectrum": ["--N", "30", "--p-lo", "0.95", "--p-hi", "1.05", "--coef-lo", "0.9", "--coef-hi", "1.1"],
    "oracle-rates": ["--N", "60", "--r", "1.2", "--s", "1", "2", "--sigma-count", "6", "--sigma-hi", "1e-3",
                     "--lambda-count", "121"],
    "fredholm": ["--M", "80", "--replicates", "2", "--sigma-count", "3", "--lambda-count", "91"],
    "series-check": ["--N", "100", "--lambda-count", "9"],
    "finite-rank": ["--lambda-count", "81"],
}


def run(tmp_path, sub, *extra, name="a"):
    argv = [sub, *FAST.get(sub, []), *extra, "--output-dir", str(tmp_path), "--run-name", name]
    code = cli.main(argv)
    return code, tmp_path / sub / name


def test_defaults_filled():
    cfg = cli.parse_config(["oracle-rates", "--theta", "1.5", "--family", "exp", "--r", "1.2"], environ={})
    assert cfg["r"] == [1.2] and cfg["N"] == 200 and cfg["sigma_count"] == 15
    assert cfg["lambda_lo"] == 1e-25 and cfg["master_seed"] == 0 and cfg["output_dir"] == "runs"


def test_lambda_order_is_usage_error(capsys):
    assert cli.main(["oracle-rates", "--lambda-lo", "1", "--lambda-hi", "0.1"]) == cli.EXIT_USAGE
    err = capsys.readouterr().err
    assert "lo < hi" in err and "hyperparam_selection" in err


def test_unknown_flag_is_usage_error(capsys):
    assert cli.main(["spectrum", "--bogus", "1"]) == cli.EXIT_USAGE


@pytest.mark.parametrize("argv, module", [
    (["spectrum", "--r", "0.1", "--family", "poly", "--theta", "2"], "spectrum_models"),
    (["spectrum", "--theta", "-1"], "spectrum_models"),
    (["finite-rank", "--eps-norm", "-0.1"], "spectral_estimators"),
    (["fredholm", "--M", "1"], "fredholm_testbed"),
])
def test_validation_names_module(argv, module):
    with pytest.raises(cli.UsageError, match=module):
        cli.parse_config(argv, environ={})


def test_config_precedence(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump({"theta": 2.0, "N": 50, "oracle-rates": {"N": 40, "sigma-count": 7}}))
    cfg = cli.parse_config(["oracle-rates", "--config", str(path), "--N", "30"], environ={})
    assert cfg["theta"] == 2.0 and cfg["N"] == 30 and cfg["sigma_count"] == 7
    cfg = cli.parse_config(["oracle-rates", "--config", str(path)], environ={})
    assert cfg["N"] == 40


def test_config_unknown_key(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("oracle-rates:\n  thetta: 2\n")
    with pytest.raises(cli.UsageError, match="thetta"):
        cli.parse_config(["oracle-rates", "--config", str(path)], environ={})


def test_output_dir_from_environment(tmp_path):
    cfg = cli.parse_config(["spectrum"], environ={cli.OUTPUT_ENV: str(tmp_path)})
    assert cfg["output_dir"] == str(tmp_path)
    cfg = cli.parse_config(["spectrum", "--output-dir", "x"], environ={cli.OUTPUT_ENV: str(tmp_path)})
    assert cfg["output_dir"] == "x"


def test_resolved_config_byte_identical(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("theta: 2.0\n")
    argv = ["--config", str(path), "--N", "20"]
    _, d1 = run(tmp_path, "spectrum", *argv)
    d2 = tmp_path / "first"
    shutil.move(str(d1), str(d2))
    _, d3 = run(tmp_path, "spectrum", *argv)
    y1 = (d2 / "config_resolved.yaml").read_bytes()
    assert y1 == (d3 / "config_resolved.yaml").read_bytes()
    assert yaml.safe_load(y1)["theta"] == 2.0


def test_spectrum_artifacts(tmp_path):
    code, d = run(tmp_path, "spectrum", "--null", "0.3", "-0.4")
    assert code == cli.EXIT_OK
    text = (d / "spectrum.csv").read_text()
    assert text.startswith("i,lambda_i,p_inv_i,c_i\n") and "\nj,d_j\n1,0.3\n2,-0.4\n" in text
    assert {"summary.txt", "config_resolved.yaml", "metadata.json"} <= {p.name for p in d.iterdir()}
    assert not (d / "failures.json").exists()


def test_series_check_columns(tmp_path):
    code, d = run(tmp_path, "series-check")
    assert code == cli.EXIT_OK
    cols = read_csv_columns(d / "series.csv")
    assert list(cols) == ["lambda", "A", "Aprime", "B", "B1", "pred_A", "pred_B", "branch"]
    assert len(cols["A"]) == 9


def test_finite_rank_reports_failed_floor(tmp_path):
    code, d = run(tmp_path, "finite-rank", "--K", "1", "--eps-norm", "0.1")
    assert code == cli.EXIT_CHECK
    failures = json.loads((d / "failures.json").read_text())
    assert [f["check"] for f in failures] == ["L2 minimal error >= 0.2 at every sigma"]
    cols = read_csv_columns(d / "finite_rank.csv")
    assert all(float(v) > 0.14 for v in cols["l2_min_error"])
    ratio = [float(e) / float(b) for e, b in zip(cols["hs_error_at_sigma"], cols["hs_upper_bound"])]
    assert max(ratio) <= 1.0
    summary = (d / "summary.txt").read_text()
    assert "FAIL  L2 minimal error" in summary and "PASS  H^s error" in summary


def test_oracle_rates_artifacts(tmp_path):
    code, d = run(tmp_path, "oracle-rates")
    cols = read_csv_columns(d / "oracle_rates.csv")
    assert list(cols) == ["r", "s", "lambda_rate_fit", "lambda_rate_theory", "err_rate_fit",
                          "err_rate_theory", "r2", "n_points"]
    assert len(cols["s"]) == 2 and code in (cli.EXIT_OK, cli.EXIT_CHECK)


def test_fredholm_artifacts(tmp_path):
    _, d = run(tmp_path, "fredholm")
    cols = read_csv_columns(d / "practical.csv")
    assert list(cols) == ["s", "sigma", "method", "replicate", "lambda", "error"]
    assert len(cols["s"]) == 3 * 3 * 3 * 2
    assert list(read_csv_columns(d / "traces.csv")) == ["s", "sigma", "method", "lambda", "criterion",
                                                        "residual", "solution_norm"]
    assert "orthonormality" in (d / "summary.txt").read_text()


def test_rate_fit(tmp_path):
    src = tmp_path / "in.csv"
    rows = ["sigma,error,s"] + [f"{x!r},{3 * x**1.5!r},{s}" for s in (1, 2) for x in (1e-4, 1e-3, 1e-2, 1e-1)]
    src.write_text("\n".join(rows) + "\n")
    code, d = run(tmp_path, "rate-fit", "--input", str(src), "--where", "s=1", "--expect-slope", "1.5")
    assert code == cli.EXIT_OK
    cols = read_csv_columns(d / "rate_fit.csv")
    assert math.isclose(float(cols["slope"][0]), 1.5, rel_tol=1e-12) and cols["points_used"] == ["4"]
    code, _ = run(tmp_path, "rate-fit", "--input", str(src), "--expect-slope", "2", name="b")
    assert code == cli.EXIT_CHECK


def test_runtime_errors_exit_3(tmp_path):
    code, _ = run(tmp_path, "rate-fit", "--input", str(tmp_path / "missing.csv"))
    assert code == cli.EXIT_RUNTIME


def test_non_finite_value_aborts(tmp_path, monkeypatch):
    def bad(cfg):
        return cli.Outcome({"x.csv": (["v"], [(math.nan,)])}, [], [], {})

    monkeypatch.setitem(cli.DRIVERS, "spectrum", bad)
    code, d = run(tmp_path, "spectrum")
    assert code == cli.EXIT_RUNTIME and not d.exists()


@pytest.mark.parametrize("sub", ["spectrum", "oracle-rates", "fredholm", "series-check", "finite-rank"])
def test_rerun_is_byte_identical(tmp_path, sub):
    _, d1 = run(tmp_path, sub, name="one")
    _, d2 = run(tmp_path, sub, name="two")
    csvs = sorted(p.name for p in d1.glob("*.csv"))
    assert csvs and csvs == sorted(p.name for p in d2.glob("*.csv"))
    for name in csvs:
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()
    assert (d1 / "summary.txt").read_bytes() == (d2 / "summary.txt").read_bytes()


def test_module_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "fracsobolev", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("fracsobolev ")
