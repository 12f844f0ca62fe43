"""The smoothing-bias factor f(theta) and the slope it adds to m(2, delta).

Run: python demos/04_bias_function.py
"""
# %%
import numpy as np

from roughvol import bias

hurst = 0.04
print(f"c_H by quadrature {bias.c_h(hurst):.10f}, closed form {bias.c_h_closed_form(hurst):.10f}")

# %% f falls from 1 (short maturity, long lag) towards 0
for theta in (1e-6, 1e-2, 0.1, 1.0, 10.0, 100.0):
    print(f"theta = {theta:8.0e}: f = {bias.bias_factor(theta, hurst):.5f}")

# %% at fixed maturity, the biased second moment grows faster than delta^(2H)
params = bias.BiasParams(hurst)
deltas = np.arange(1, 41)
m = [bias.biased_second_moment(d, 20.0, params) for d in deltas]
slope = np.polyfit(np.log(deltas), np.log(m), 1)[0]
print(f"log-log slope over delta 1..40 at tau = 20: {slope:.3f}, i.e. H_hat = {slope / 2:.3f} for true H {hurst}")
