import csv
import datetime as dt
import json
import subprocess
import sys

import numpy as np
import pytest

from roughvol import cli, fbm, market, scaling
from roughvol.scaling import VolSeries


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_rows(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


@pytest.fixture(scope="module")
def series_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("in") / "series.csv"
    w = fbm.sample_path(fbm.build_grid(0.2, 1500), 3).values
    scaling.write_series_csv(VolSeries.from_values(0.2 * np.exp(w)), path)
    return path


@pytest.fixture(scope="module")
def quotes_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("in") / "quotes.csv"
    market.write_quotes_csv(market.synthetic_quotes(market.business_days(dt.date(2024, 1, 2), 60), vol=0.2), path)
    return path


# ---- estimate ----------------------------------------------------------------

def test_estimate_happy_path(tmp_path, series_file):
    assert run("estimate", series_file, "--out", tmp_path) == 0
    names = {p.name for p in tmp_path.iterdir()}
    assert names == {"scaling_report.json", "scaling_logm.csv", "scaling_zeta.csv", "manifest.json"}
    rep = json.loads((tmp_path / "scaling_report.json").read_text())
    assert rep["status"] == "ok" and rep["manifest"] == "manifest.json"
    assert rep["hurst_hat"] == pytest.approx(0.2, abs=0.05)
    assert [d["delta"] for d in rep["diagnostics"]] == [1, 10]
    m = manifest(tmp_path)
    assert m["command"] == "estimate" and m["status"] == "ok"
    assert set(m["outputs"]) == names - {"manifest.json"}
    assert list(m["inputs"].values())[0] == cli._sha256(series_file)


def test_estimate_negative_value(tmp_path, capsys):
    f = tmp_path / "s.csv"
    f.write_text("date,value\n1,0.2\n2,0.3\n3,0.25\n4,-0.1\n")
    assert run("estimate", f, "--out", tmp_path / "o") == 1
    assert "line 5" in capsys.readouterr().err


def test_estimate_missing_header(tmp_path, capsys):
    f = tmp_path / "s.csv"
    f.write_text("1,0.2\n2,0.3\n")
    assert run("estimate", f, "--out", tmp_path / "o") == 1
    assert "line 1" in capsys.readouterr().err


def test_estimate_constant_series_is_numerical_failure(tmp_path):
    f = tmp_path / "s.csv"
    scaling.write_series_csv(VolSeries.from_values(np.full(60, 0.2)), f)
    assert run("estimate", f, "--out", tmp_path / "o") == 2
    rep = json.loads((tmp_path / "o" / "scaling_report.json").read_text())
    assert rep["status"] == "degenerate" and rep["m_identically_zero"]


def test_estimate_short_series(tmp_path):
    f = tmp_path / "s.csv"
    f.write_text("date,value\n1,0.2\n2,0.3\n3,0.25\n")
    assert run("estimate", f, "--out", tmp_path / "o") == 1
    assert manifest(tmp_path / "o")["status"] == "ValueError"


def test_estimate_lag_flags(tmp_path, series_file):
    assert run("estimate", series_file, "--out", tmp_path, "--q-grid", "1,2", "--delta-max", "5") == 0
    rep = json.loads((tmp_path / "scaling_report.json").read_text())
    assert rep["q_grid"] == [1.0, 2.0] and rep["delta_grid"] == [1, 2, 3, 4, 5]


# ---- simulate ----------------------------------------------------------------

def test_simulate_defaults_and_worker_determinism(tmp_path):
    a, b = tmp_path / "w1", tmp_path / "w2"
    assert run("simulate", "--out", a, "--workers", 1) == 0
    assert run("simulate", "--out", b, "--workers", 2) == 0
    rows = read_rows(a / "bias_curve.csv")
    assert [int(r["tau"]) for r in rows] == list(range(1, 21))
    for name in manifest(a)["outputs"]:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    assert manifest(a)["configuration"]["model"]["hurst"] == 0.04


def test_simulate_idempotent_and_tau_subset(tmp_path):
    flags = ["--horizon-days", 80, "--n-paths", 200, "--workers", 1]
    assert run("simulate", "--out", tmp_path / "a", "--taus", "2,7", *flags) == 0
    assert run("simulate", "--out", tmp_path / "b", "--taus", "2,7", *flags) == 0
    for name in manifest(tmp_path / "a")["outputs"]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    assert {p.name for p in (tmp_path / "a").glob("implied_tau*.csv")} == {"implied_tau2.csv", "implied_tau7.csv"}
    exp = json.loads((tmp_path / "a" / "experiment.json").read_text())
    assert set(exp["hurst_by_tau"]) == {"2", "7"}
    assert len(read_rows(tmp_path / "a" / "atm_prices.csv")) == 80 * 2


def test_simulate_zero_paths(tmp_path, capsys):
    assert run("simulate", "--out", tmp_path, "--n-paths", 0, "--taus", "0,3") == 1
    err = capsys.readouterr().err
    assert err.count("error:") >= 2


def test_simulate_seed_changes_output(tmp_path):
    flags = ["--horizon-days", 60, "--n-paths", 100, "--taus", "3", "--workers", 1]
    run("simulate", "--out", tmp_path / "a", "--seed", 1, *flags)
    run("simulate", "--out", tmp_path / "b", "--seed", 2, *flags)
    assert (tmp_path / "a" / "spot.csv").read_bytes() != (tmp_path / "b" / "spot.csv").read_bytes()


# ---- market ------------------------------------------------------------------

def test_market_flat_vol(tmp_path, quotes_file):
    assert run("market", quotes_file, "--out", tmp_path) == 0
    proxy = read_rows(tmp_path / "daily_proxy.csv")
    assert len(proxy) > 40
    np.testing.assert_allclose([float(r["implied_vol"]) for r in proxy], 0.2, atol=1e-8)
    rep = json.loads((tmp_path / "filter_report.json").read_text())
    assert rep["stages"]["proxy_scaling"] == "degenerate"
    assert not (tmp_path / "medvedev_proxy.csv").exists()


def test_market_missing_put_columns(tmp_path, capsys):
    f = tmp_path / "q.csv"
    f.write_text("date,expiry,strike,call_bid,call_ask,call_volume,put_volume\n")
    assert run("market", f, "--out", tmp_path / "o") == 1
    assert "put_bid" in capsys.readouterr().err


def test_market_heston_params(tmp_path, quotes_file):
    params = tmp_path / "p.ini"
    params.write_text("[medvedev]\npreset = heston\n")
    assert run("market", quotes_file, "--params", params, "--out", tmp_path / "o") == 0
    rows = read_rows(tmp_path / "o" / "medvedev_proxy.csv")
    assert list(rows[0]) == ["date", "tau_days", "sigma_hat", "sigma_proxy"]
    assert all(float(r["sigma_proxy"]) == float(r["sigma_hat"]) for r in rows)
    assert (tmp_path / "o" / "medvedev_scaling_report.json").exists()
    assert str(params) in manifest(tmp_path / "o")["inputs"]


def test_market_bad_params(tmp_path, quotes_file, capsys):
    params = tmp_path / "p.ini"
    params.write_text("[medvedev]\nrho = 0.3\n[model]\nhurst = 0.1\n")
    assert run("market", quotes_file, "--params", params, "--out", tmp_path / "o") == 1
    err = capsys.readouterr().err
    assert "unknown section [model]" in err


# ---- bias --------------------------------------------------------------------

def test_bias_defaults(tmp_path):
    assert run("bias", "--out", tmp_path) == 0
    rows = read_rows(tmp_path / "bias_curve.csv")
    assert len(rows) == 200
    assert list(rows[0]) == ["theta", "f_value", "error_bound"]
    meta = json.loads((tmp_path / "bias_curve_meta.json").read_text())
    assert meta["hurst"] == 0.04 and meta["m_hat_loglog_slope"] > 0.08
    assert len(read_rows(tmp_path / "moment_table.csv")) == 40


def test_bias_half_is_one(tmp_path):
    assert run("bias", "--out", tmp_path, "--hurst", 0.5, "--n-theta", 25, "--workers", 1) == 0
    f = np.array([float(r["f_value"]) for r in read_rows(tmp_path / "bias_curve.csv")])
    np.testing.assert_allclose(f, 1.0, rtol=0, atol=1e-10)


def test_bias_rejects_hurst_above_one(tmp_path, capsys):
    assert run("bias", "--out", tmp_path, "--hurst", 1.2) == 1
    assert "hurst" in capsys.readouterr().err


def test_bias_range_errors_reported_together(tmp_path, capsys):
    assert run("bias", "--out", tmp_path, "--tau", -1, "--theta-min", 5, "--theta-max", 1) == 1
    assert capsys.readouterr().err.count("error:") == 2


# ---- configuration -----------------------------------------------------------

def test_print_config_round_trips(tmp_path, capsys):
    assert run("simulate", "--print-config", "--hurst", 0.1, "--taus", "1-3") == 0
    text = capsys.readouterr().out
    assert "[model]" in text and "hurst = 0.1" in text and "taus = 1,2,3" in text
    f = tmp_path / "c.ini"
    f.write_text(text)
    assert run("simulate", "--config", f, "--print-config") == 0
    assert capsys.readouterr().out == text


def test_config_errors_enumerated(tmp_path, capsys):
    f = tmp_path / "c.ini"
    f.write_text("[model]\nhurst = abc\ncolour = red\n[extra]\nx = 1\n")
    assert run("simulate", "--config", f, "--out", tmp_path) == 1
    err = capsys.readouterr().err
    assert err.count("error:") == 3


@pytest.mark.parametrize("flag", [["--workers", "0"], ["--seed", "-1"]])
def test_bad_common_flags(tmp_path, flag):
    assert run("bias", "--out", tmp_path, "--n-theta", 3, *flag) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "roughvol", "bias", "--out", str(tmp_path), "--n-theta", "4",
                           "--workers", "1"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "manifest.json").exists()
