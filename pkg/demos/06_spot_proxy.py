"""Short-maturity correction from ATM implied vol to spot vol.

The correction functions I1 and I2 are model specific and plug in as
callables; here a toy I1 shows the sqrt(tau) shift.

Run: python demos/06_spot_proxy.py
"""
# %%
import datetime as dt

from roughvol import medvedev as mv

daily = [(dt.date(2024, 3, 4) + dt.timedelta(days=i), 20 + i, 0.2 + 0.005 * i) for i in range(5)]

# %% with zero correction terms only the jump term of the general preset moves the proxy
for name, params in (("heston", mv.HESTON_PRESET), ("general", mv.GENERAL_PRESET)):
    rows = mv.proxy_rows(daily, params)
    print(name, [round(r.sigma_proxy, 6) for r in rows])

# %% a toy I1(s) = 0.1 s lowers the proxy by about 0.1 s sqrt(tau)
terms = mv.ExpansionTerms(i1=lambda s: 0.1 * s, i1_dsigma=lambda s: 0.1)
for tau_days in (5, 20, 60):
    print(f"tau {tau_days:>2}d: {mv.spot_proxy(0.2, tau_days / 365, mv.HESTON_PRESET, terms):.6f}")
