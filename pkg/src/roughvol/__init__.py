"""Rough volatility toolkit: exact fBm, roughness estimation, conditional-MC
implied vols, option-market proxies and the maturity smoothing bias."""

from . import bias, blackscholes, fbm, market, medvedev, montecarlo, rng, scaling
from .bias import BiasParams, bias_factor, biased_second_moment, c_h
from .blackscholes import bs_call_price, bs_implied_vol, call_price, implied_vol
from .fbm import build_grid, continue_path, sample_path
from .montecarlo import McConfig, RoughModel, hurst_vs_tau, implied_vol_series
from .scaling import VolSeries, fit_scaling, structure_function

__version__ = "0.1.0"
