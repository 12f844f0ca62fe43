"""Implied vols of a rough-vol model look smoother as maturity grows.

A reduced run (250 days, 1000 paths per day); the command
``roughvol simulate`` runs the full-size version.

Run: python demos/03_mc_bias_smoke.py
"""
# %%
from roughvol import montecarlo as mc

model = mc.RoughModel(hurst=0.04, eta=1.0, horizon_days=250)
config = mc.McConfig(n_paths=1000, taus=(1, 5, 10, 20), base_seed=0)
res = mc.hurst_vs_tau(model, config)

# %% 250 days is short: single-run estimates scatter by a few hundredths
print(f"spot vol:      H_hat = {res.spot_hurst[0]:.3f}")
for tau, (h, se) in res.hurst_by_tau.items():
    print(f"tau = {tau:>2} days: H_hat = {h:.3f} +/- {se:.3f}")
