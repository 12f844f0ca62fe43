import datetime as dt
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from roughvol import blackscholes as bs
from roughvol import market
from roughvol.market import FilterConfig, OptionQuoteRow

import oracles

DATE = dt.date(2024, 3, 5)  # a Tuesday, ten days before the March settlement Friday


def row(strike, call_mid, put_mid, *, date=DATE, days=30, half_spread=0.0, cv=10, pv=10):
    return OptionQuoteRow(date, date + dt.timedelta(days=days), float(strike),
                          call_mid - half_spread, call_mid + half_spread,
                          put_mid - half_spread, put_mid + half_spread, cv, pv)


def parity_rows(strikes, disc, fwd, *, vol=0.2, days=30, noise=None, half_spread=0.0, volumes=None):
    tau = days / 365
    c = bs.call_price(fwd, np.asarray(strikes, float), tau, vol, disc)
    p = c - disc * (fwd - np.asarray(strikes, float))
    if noise is not None:
        c = c + noise
    vols = volumes if volumes is not None else [10] * len(strikes)
    return [row(k, ci, pi, days=days, half_spread=half_spread, cv=v, pv=v) for k, ci, pi, v in zip(strikes, c, p, vols)]


# ---- parsing -----------------------------------------------------------------

def test_read_round_trip(tmp_path):
    rows = market.synthetic_quotes([DATE], expiry_days=(20,))
    f = tmp_path / "q.csv"
    market.write_quotes_csv(rows, f)
    assert market.read_quotes_csv(f) == rows


def test_missing_put_columns(tmp_path):
    f = tmp_path / "q.csv"
    f.write_text("date,expiry,strike,call_bid,call_ask,call_volume,put_volume\n")
    with pytest.raises(market.SchemaError, match="put_bid, put_ask"):
        market.read_quotes_csv(f)


def test_bad_row_names_line(tmp_path):
    f = tmp_path / "q.csv"
    header = ",".join(market.QUOTE_COLUMNS)
    f.write_text(f"{header}\n2024-03-05,2024-04-04,100,1,1.1,1,1.1,5,5\n2024-03-05,2024-04-04,-1,1,1.1,1,1.1,5,5\n")
    with pytest.raises(market.SchemaError) as info:
        market.read_quotes_csv(f)
    assert info.value.line == 3


# ---- filters -----------------------------------------------------------------

def test_cheap_call_removed():
    kept, rep = market.filter_quotes([row(100, 0.02, 1.0)])
    assert kept == [] and rep.removed["min_price"] == 1


def test_sixteen_days_retained():
    r = row(100, 2.0, 2.0, days=16)
    kept, rep = market.filter_quotes([r])
    assert kept == [r] and rep.n_kept == 1


@pytest.mark.parametrize("days,kept", [(14, 0), (15, 1), (60, 1), (61, 0)])
def test_maturity_window(days, kept):
    assert len(market.filter_quotes([row(100, 2.0, 2.0, days=days)])[0]) == kept


def test_third_friday_removed():
    tf = market.third_friday(2024, 3)
    assert tf == dt.date(2024, 3, 15)
    kept, rep = market.filter_quotes([row(100, 2.0, 2.0, date=tf)])
    assert kept == [] and rep.removed["settlement_date"] == 1


def test_settlement_window_is_configurable():
    thu, mon, tue = dt.date(2024, 3, 14), dt.date(2024, 3, 18), dt.date(2024, 3, 19)
    rows = [row(100, 2.0, 2.0, date=d) for d in (thu, mon, tue)]
    assert len(market.filter_quotes(rows)[0]) == 1
    assert len(market.filter_quotes(rows, FilterConfig(settlement_before=0, settlement_after=0))[0]) == 3
    assert len(market.filter_quotes(rows, FilterConfig(drop_settlement=False))[0]) == 3


def test_zero_volume_and_crossed_quotes():
    rows = [row(100, 2.0, 2.0, pv=0), row(100, 2.0, 2.0, cv=0),
            OptionQuoteRow(DATE, DATE + dt.timedelta(days=30), 100.0, 2.1, 2.0, 1.0, 1.1, 5, 5)]
    kept, rep = market.filter_quotes(rows)
    assert kept == []
    assert rep.removed == {"zero_volume": 2, "crossed_quote": 1}


# ---- parity ------------------------------------------------------------------

def test_exact_parity_recovery():
    rows = parity_rows(np.linspace(1400, 1600, 15), 0.99, 1500.0)
    fit = market.fit_parity(rows)
    assert fit.discount == pytest.approx(0.99, abs=1e-10)
    assert fit.forward == pytest.approx(1500.0, abs=1e-10 * 1500)
    assert fit.residual_rms < 1e-9


def test_noisy_parity_matches_normal_equations():
    strikes = np.linspace(1400, 1600, 20)
    noise = np.random.default_rng(4).uniform(-0.01, 0.01, 20)
    rows = parity_rows(strikes, 0.99, 1500.0, noise=noise, half_spread=0.05,
                       volumes=np.random.default_rng(5).integers(1, 500, 20))
    fit = market.fit_parity(rows)
    assert fit.discount == pytest.approx(0.99, abs=1e-3)
    assert fit.forward == pytest.approx(1500.0, abs=0.5)
    y = np.array([r.call_mid - r.put_mid for r in rows])
    a, b = oracles.parity_normal_equations(strikes, y, market.parity_weights(rows))
    assert fit.discount == pytest.approx(b, abs=1e-12)
    assert fit.discount * fit.forward == pytest.approx(a, rel=1e-12)


def test_single_strike_is_underdetermined():
    with pytest.raises(market.ParityError, match="2 distinct strikes"):
        market.fit_parity(parity_rows([1500.0, 1500.0], 0.99, 1500.0))


def test_nonpositive_discount():
    rows = [row(90, 1.0, 5.0), row(110, 5.0, 1.0)]  # C - P increasing in K
    with pytest.raises(market.ParityError, match="nonpositive discount"):
        market.fit_parity(rows)


def test_mixed_groups_rejected():
    rows = parity_rows([90, 100], 0.99, 100.0) + parity_rows([90, 100], 0.99, 100.0, days=40)
    with pytest.raises(market.ParityError):
        market.fit_parity(rows)


def test_weights():
    r = row(100, 2.0, 2.0, half_spread=0.1, cv=16, pv=25)
    # denominator: half the call spread plus half the put spread = 0.2
    assert market.parity_weights([r])[0] == pytest.approx(4 / 0.2)
    assert market.parity_weights([row(100, 2.0, 2.0, cv=9, pv=9)])[0] == pytest.approx(3 / 1e-6)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 10), seed=st.integers(0, 10_000))
def test_parity_equals_grid_minimizer(n, seed):
    rng = np.random.default_rng(seed)
    strikes = np.sort(rng.choice(np.arange(80, 121), n, replace=False)).astype(float)
    rows = parity_rows(strikes, rng.uniform(0.95, 1.0), rng.uniform(95, 105), noise=rng.uniform(-0.05, 0.05, n),
                       half_spread=0.02, volumes=rng.integers(1, 100, n))
    fit = market.fit_parity(rows)
    y = np.array([r.call_mid - r.put_mid for r in rows])
    w = market.parity_weights(rows)
    a_g, b_g, (ra, rb) = oracles.parity_grid_minimizer(strikes, y, w, fit.discount * fit.forward + 0.7,
                                                       fit.discount - 0.01)
    assert abs(fit.discount - b_g) <= 1e-9 + 10 * rb
    assert abs(fit.discount * fit.forward - a_g) <= 1e-7 + 10 * ra


@settings(max_examples=20, deadline=None)
@given(c=st.floats(0.01, 100.0))
def test_parity_scale_equivariance(c):
    strikes = np.linspace(90, 110, 9)
    noise = np.random.default_rng(1).uniform(-0.02, 0.02, 9)
    rows = parity_rows(strikes, 0.98, 101.0, noise=noise, half_spread=0.03)
    scaled = [OptionQuoteRow(r.date, r.expiry, r.strike * c, r.call_bid * c, r.call_ask * c, r.put_bid * c,
                             r.put_ask * c, r.call_volume, r.put_volume) for r in rows]
    a, b = market.fit_parity(rows), market.fit_parity(scaled)
    assert b.discount == pytest.approx(a.discount, rel=1e-9)
    assert b.forward == pytest.approx(c * a.forward, rel=1e-9)


# ---- implied vols ------------------------------------------------------------

def test_moneyness_band():
    fit = market.ParityFit(DATE, DATE + dt.timedelta(days=30), 1.0, 100.0, 2, 0.0)
    k_out = 100 * math.exp(0.05)
    c = float(bs.call_price(100.0, k_out, 30 / 365, 0.2))
    pts, fails = market.extract_atm_ivs([row(k_out, c, c - (100 - k_out))], fit)
    assert pts == [] and fails == 0


@settings(max_examples=20, deadline=None)
@given(vol=st.floats(0.05, 1.5), days=st.integers(15, 60), rate=st.floats(0.0, 0.08))
def test_flat_vol_recovered(vol, days, rate):
    rows = market.synthetic_quotes([DATE], (days,), vol=vol, rate=rate)
    fit = market.fit_parity(rows)
    pts, fails = market.extract_atm_ivs(rows, fit)
    assert fails == 0 and len(pts) > 0
    assert all(abs(p.log_moneyness) <= 0.03 for p in pts)
    np.testing.assert_allclose([p.implied_vol for p in pts], vol, rtol=0, atol=1e-8)


def test_uninvertible_strike_is_skipped():
    fit = market.ParityFit(DATE, DATE + dt.timedelta(days=30), 1.0, 100.0, 2, 0.0)
    pts, fails = market.extract_atm_ivs([row(100.0, 150.0, 50.0), row(101.0, 2.0, 3.0)], fit)
    assert fails == 1 and len(pts) == 1


def test_daily_proxy_selection():
    d2 = DATE + dt.timedelta(days=1)
    e = lambda n: DATE + dt.timedelta(days=n)  # noqa: E731
    pts = [
        market.IvPoint(DATE, e(40), 100.0, 0.0, 0.30),
        market.IvPoint(DATE, e(20), 101.0, 0.01, 0.21),
        market.IvPoint(DATE, e(20), 99.0, -0.01, 0.22),
        market.IvPoint(DATE, e(20), 102.0, 0.02, 0.23),
        market.IvPoint(d2, e(40), 100.0, 0.005, 0.25),
    ]
    out = market.select_daily_proxy(pts)
    assert [(p.date, p.tau_days, p.implied_vol) for p in out] == [(DATE, 20, 0.22), (d2, 39, 0.25)]


def test_mad_filter():
    e = DATE + dt.timedelta(days=30)
    pts = [market.IvPoint(DATE, e, 100.0 + i, 0.0, v) for i, v in enumerate([0.20, 0.21, 0.19, 0.205, 0.9])]
    kept, dropped = market.mad_filter(pts, 10)
    assert dropped == 1 and max(p.implied_vol for p in kept) == 0.21


def test_pipeline_counts_and_outlier_default():
    dates = market.business_days(dt.date(2024, 3, 4), 15)
    rows = market.synthetic_quotes(dates, vol=0.25)
    res = market.run_market_pipeline(rows)
    settle = sum(market.is_settlement_date(d) for d in dates)
    assert settle == 3
    assert res.report.removed["settlement_date"] == settle * 3 * 25
    assert res.report.n_days == len(dates) - settle
    assert res.report.n_outliers == 0
    assert all(p.tau_days == 20 for p in res.proxies)
    np.testing.assert_allclose([p.implied_vol for p in res.proxies], 0.25, atol=1e-8)
    np.testing.assert_allclose([f.discount for f in res.fits if f.tau_days == 20], math.exp(-0.01 * 20 / 365),
                               atol=1e-10)


def test_pipeline_continues_past_bad_groups():
    good = market.synthetic_quotes([DATE], (20,))
    bad = [row(90, 1.0, 5.0, days=30), row(110, 5.0, 1.0, days=30)]
    res = market.run_market_pipeline(good + bad)
    assert res.report.parity_failures == {"nonpositive_discount": 1}
    assert res.report.n_parity_fits == 1 and res.report.n_days == 1
