"""Exact fBm on a daily grid, and conditional continuation of a path.

Run: python demos/01_fbm_paths.py
"""
# %%
import numpy as np

from roughvol import fbm

grid = fbm.build_grid(hurst=0.1, n=500)
path = fbm.sample_path(grid, rng_seed=0)
print("grid points:", grid.n, " last value:", round(path.values[-1], 4))

# %% increments are stationary with variance lag^(2H)
paths = fbm.sample_paths(grid, 20_000, rng_seed=1)
for lag in (1, 10, 100):
    inc = paths[:, 200 + lag] - paths[:, 200]
    print(f"lag {lag:>3}: sample var {inc.var():.4f}  target {lag ** 0.2:.4f}")

# %% continue the path from day 300 given everything before it
mean, cov = fbm.conditional_moments(grid, path.innovations, 300, 310)
draws = fbm.continue_paths(path, 300, 310, 5_000, np.random.default_rng(2))
print("conditional mean, day 301..303:", np.round(mean[:3], 4))
print("simulated mean,   day 301..303:", np.round(draws[:, :3].mean(axis=0), 4))
print("conditional sd of day 310:", round(float(np.sqrt(cov[-1, -1])), 4))
