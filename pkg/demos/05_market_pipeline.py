"""Option quotes to a daily ATM implied-vol series.

Synthetic quotes from a flat-vol world go through the filters, the
put-call parity fit and the ATM implied-vol extraction.

Run: python demos/05_market_pipeline.py
"""
# %%
import datetime as dt
import math

from roughvol import market

dates = market.business_days(dt.date(2024, 1, 2), 40)
quotes = market.synthetic_quotes(dates, vol=0.18, rate=0.03, half_spread=0.05)
res = market.run_market_pipeline(quotes)

# %%
print("removed by rule:", dict(res.report.removed))
fit = res.fits[0]
print(f"{fit.date} expiry {fit.expiry}: D = {fit.discount:.6f} "
      f"(true {math.exp(-0.03 * fit.tau_days / 365):.6f}), F = {fit.forward:.3f}")
print("daily proxies:", len(res.proxies))
for p in res.proxies[:5]:
    print(f"  {p.date}  tau {p.tau_days:>2}d  iv {p.implied_vol:.6f}")
