"""Structure functions and the Hurst fit of a log-vol series.

Run: python demos/02_hurst_estimation.py
"""
# %%
import numpy as np

from roughvol import fbm, scaling
from roughvol.scaling import VolSeries

hurst = 0.15
w = fbm.sample_path(fbm.build_grid(hurst, 3000), 4).values
series = VolSeries.from_values(0.2 * np.exp(w))

# %% zeta_q is the log-log slope of m(q, delta) against delta
rep = scaling.fit_scaling(series)
print(" q    zeta_q   q*H_hat   R^2")
for q, z, r2 in zip(rep.q_grid, rep.zeta, rep.r_squared):
    print(f"{q:4.1f}  {z:7.4f}  {q * rep.hurst_hat:7.4f}  {r2:.3f}")
print(f"H_hat = {rep.hurst_hat:.4f} (true {hurst})")

# %% increments of log-vol look Gaussian
diag = scaling.increment_diagnostics(series, 1, hurst=rep.hurst_hat)
print(f"lag-1 increments: sd {diag.std:.4f}, excess kurtosis {diag.excess_kurtosis:.3f}")
