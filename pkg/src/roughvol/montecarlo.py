"""
Rough volatility Monte Carlo lab
================================

Model (no leverage, no jumps), time in days::

    d log S_t = sigma_t dZ_t,    sigma_t = sigma0 * exp(eta * W^H_t)

On each day ``i`` the ATM call with maturity ``tau`` days is priced by
conditional Monte Carlo: ``M`` continuations of ``W^H`` after ``t_i`` given the
innovations observed up to ``t_i``, each priced by Black-Scholes at its realized
RMS volatility. The average price is inverted to an implied volatility, and the
implied series is fed to the scaling estimator.

The realized variance of ``[t_i, t_i + tau]`` is a daily Riemann sum chosen by
``McConfig.variance_rule``:

* ``"left"`` (default): ``sigma_{t_i}^2 + ... + sigma_{t_{i+tau-1}}^2``, the
  non-anticipating sum in which the vol known at ``t_i`` drives the first day
* ``"right"``: ``sigma_{t_{i+1}}^2 + ... + sigma_{t_{i+tau}}^2``
* ``"trapezoid"``: the mean of the two

``sigma0`` is annualized; a day is ``1 / days_per_year`` years when prices are
computed. ATM implied vols under zero rates do not depend on the spot level, so
``S = K = 1``.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import erf

from . import blackscholes as bs
from .fbm import DEFAULT_MAX_N, FbmGrid, FbmPath, build_grid
from .rng import CONTINUATION_KEY, MASTER_PATH_KEY, make_rng
from .scaling import DEFAULT_DELTA_GRID, DEFAULT_Q_GRID, VolSeries, fit_scaling

__all__ = [
    "RoughModel",
    "McConfig",
    "ExperimentResult",
    "ConfigError",
    "McPricingError",
    "simulate_spot_vol",
    "atm_price_at",
    "price_days",
    "implied_vol_series",
    "hurst_vs_tau",
]


class ConfigError(ValueError):
    """One or more invalid parameters; ``errors`` lists every problem found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class McPricingError(RuntimeError):
    pass


VARIANCE_RULES = ("left", "right", "trapezoid")
# Spot vols under eta = 1 routinely leave the default [1e-6, 10] inversion bracket.
IV_BOUNDS = (1e-6, 1e3)


@dataclass(frozen=True)
class RoughModel:
    hurst: float = 0.04
    eta: float = 1.0
    sigma0: float = 0.2
    horizon_days: int = 1000
    days_per_year: float = 252.0

    def __post_init__(self):
        errors = []
        if not 0 < self.hurst < 1:
            errors.append(f"hurst must lie in (0, 1), got {self.hurst}")
        if not self.eta >= 0:
            errors.append(f"eta must be nonnegative, got {self.eta}")
        if not self.sigma0 > 0:
            errors.append(f"sigma0 must be positive, got {self.sigma0}")
        if int(self.horizon_days) != self.horizon_days or self.horizon_days < 1:
            errors.append(f"horizon_days must be a positive integer, got {self.horizon_days}")
        if not self.days_per_year > 0:
            errors.append(f"days_per_year must be positive, got {self.days_per_year}")
        if errors:
            raise ConfigError(errors)


@dataclass(frozen=True)
class McConfig:
    n_paths: int = 10_000
    taus: tuple[int, ...] = tuple(range(1, 21))
    base_seed: int = 0
    workers: int = 1
    max_grid: int = DEFAULT_MAX_N
    variance_rule: str = "left"

    def __post_init__(self):
        object.__setattr__(self, "taus", tuple(int(t) for t in self.taus))
        errors = []
        if int(self.n_paths) != self.n_paths or self.n_paths < 100:
            errors.append(f"n_paths must be an integer >= 100, got {self.n_paths}")
        if not self.taus or any(t < 1 for t in self.taus):
            errors.append(f"taus must be a nonempty list of positive integers, got {self.taus}")
        elif len(set(self.taus)) != len(self.taus):
            errors.append("taus must be distinct")
        if int(self.base_seed) != self.base_seed or self.base_seed < 0:
            errors.append(f"base_seed must be a nonnegative integer, got {self.base_seed}")
        if int(self.workers) != self.workers or self.workers < 1:
            errors.append(f"workers must be a positive integer, got {self.workers}")
        if self.variance_rule not in VARIANCE_RULES:
            errors.append(f"variance_rule must be one of {VARIANCE_RULES}, got {self.variance_rule!r}")
        if errors:
            raise ConfigError(errors)


@dataclass
class ExperimentResult:
    spot_series: VolSeries
    implied_series: dict[int, VolSeries]
    hurst_by_tau: dict[int, tuple[float, float]]
    spot_hurst: tuple[float, float]
    prices: np.ndarray = field(repr=False)
    price_stderr: np.ndarray = field(repr=False)


@lru_cache(maxsize=8)
def _grid(hurst: float, n: int, max_n: int) -> FbmGrid:
    return build_grid(hurst, n, 1.0, max_n=max_n)


def simulate_spot_vol(model: RoughModel, seed: int, extra_days: int = 0, *, max_grid: int = DEFAULT_MAX_N):
    """Spot volatility on days ``1..T`` and the fBm path on days ``1..T + extra_days``."""
    n = model.horizon_days + extra_days
    if n > max_grid:
        raise ConfigError([f"grid size {n} exceeds the configured cap {max_grid}"])
    grid = _grid(model.hurst, n, max_grid)
    x = make_rng(seed, MASTER_PATH_KEY).standard_normal(n)
    path = FbmPath(grid=grid, values=grid.chol @ x, innovations=x)
    w = path.values[: model.horizon_days]
    values = model.sigma0 * np.exp(model.eta * w)
    return VolSeries(np.arange(1, model.horizon_days + 1), values), path


def _day_prices(
    chol: np.ndarray,
    values: np.ndarray,
    innovations: np.ndarray,
    day: int,
    taus: np.ndarray,
    n_paths: int,
    base_seed: int,
    eta: float,
    sigma0: float,
    days_per_year: float,
    rule: str,
) -> tuple[np.ndarray, np.ndarray]:
    # day i: X_1..X_i observed, continuation over t_{i+1}..t_{i+max tau}.
    k = int(taus.max())
    det = chol[day : day + k, :day] @ innovations[:day]
    block = chol[day : day + k, day : day + k]
    z = make_rng(base_seed, CONTINUATION_KEY, day).standard_normal((n_paths, k))
    w = det + z @ block.T
    var_future = (sigma0 * np.exp(eta * w)) ** 2
    var_now = np.full((n_paths, 1), (sigma0 * np.exp(eta * values[day - 1])) ** 2)
    right = np.cumsum(var_future, axis=1)
    left = np.cumsum(np.hstack([var_now, var_future[:, :-1]]), axis=1)
    cum = {"left": left, "right": right}.get(rule)
    if cum is None:
        cum = 0.5 * (left + right)
    total_var = cum / days_per_year
    # ATM call with S = K = 1 and zero rate: 2 N(sd / 2) - 1 = erf(sd / (2 sqrt 2)).
    payoff = erf(np.sqrt(total_var[:, taus - 1]) / (2.0 * np.sqrt(2.0)))
    return payoff.mean(axis=0), payoff.std(axis=0, ddof=1) / np.sqrt(n_paths)


_WORKER_STATE: dict = {}


def _init_worker(chol, values, innovations, taus, n_paths, base_seed, eta, sigma0, days_per_year, rule):
    _WORKER_STATE.update(
        chol=chol, values=values, innovations=innovations, taus=taus, n_paths=n_paths,
        base_seed=base_seed, eta=eta, sigma0=sigma0, days_per_year=days_per_year, rule=rule,
    )


def _price_chunk(days: Sequence[int]):
    s = _WORKER_STATE
    out = [
        _day_prices(s["chol"], s["values"], s["innovations"], d, s["taus"], s["n_paths"],
                    s["base_seed"], s["eta"], s["sigma0"], s["days_per_year"], s["rule"])
        for d in days
    ]
    return np.array([o[0] for o in out]), np.array([o[1] for o in out])


def price_days(
    model: RoughModel, config: McConfig, path: FbmPath, days: Sequence[int] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """ATM prices and their MC standard errors, shape ``(len(days), len(taus))``.

    Each day draws from its own stream keyed by ``(base_seed, 1, day)``, so the
    output does not depend on ``config.workers``.
    """
    taus = np.asarray(config.taus, dtype=int)
    if days is None:
        days = range(1, model.horizon_days + 1)
    days = list(days)
    need = max(days) + int(taus.max())
    if need > path.grid.n:
        raise ValueError(f"day {max(days)} with tau {taus.max()} needs {need} grid points, have {path.grid.n}")
    if min(days) < 1:
        raise ValueError("days start at 1")
    args = (path.grid.chol, path.values, path.innovations, taus, config.n_paths, config.base_seed,
            model.eta, model.sigma0, model.days_per_year, config.variance_rule)

    workers = min(config.workers, len(days))
    if workers <= 1:
        _init_worker(*args)
        try:
            return _price_chunk(days)
        finally:
            _WORKER_STATE.clear()
    chunks = [days[i::workers] for i in range(workers)]
    prices = np.empty((len(days), len(taus)))
    stderr = np.empty_like(prices)
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=args) as ex:
        for w, (p, s) in enumerate(ex.map(_price_chunk, chunks)):
            prices[w::workers] = p
            stderr[w::workers] = s
    return prices, stderr


def atm_price_at(day_index: int, tau: int, model: RoughModel, config: McConfig, path: FbmPath) -> tuple[float, float]:
    """Conditional-MC ATM price at ``t_day`` for maturity ``tau`` days, with its standard error."""
    one = McConfig(config.n_paths, (tau,), config.base_seed, 1, config.max_grid, config.variance_rule)
    p, s = price_days(model, one, path, [day_index])
    return float(p[0, 0]), float(s[0, 0])


def _invert(prices: np.ndarray, taus: Sequence[int], days: Sequence[int], days_per_year: float) -> np.ndarray:
    ivs = np.empty_like(prices)
    for j, tau in enumerate(taus):
        t_years = tau / days_per_year
        try:
            ivs[:, j] = bs.implied_vol(prices[:, j], 1.0, 1.0, t_years, vol_bounds=IV_BOUNDS)
        except bs.ArbitrageBoundsError:
            for i, day in enumerate(days):
                try:
                    ivs[i, j] = bs.bs_implied_vol(prices[i, j], 1.0, 1.0, t_years, vol_bounds=IV_BOUNDS)
                except bs.ArbitrageBoundsError as exc:
                    raise McPricingError(f"inversion failed on day {day}, tau {tau}: {exc}") from exc
    return ivs


def _run(model: RoughModel, config: McConfig):
    spot, path = simulate_spot_vol(model, config.base_seed, max(config.taus), max_grid=config.max_grid)
    days = np.arange(1, model.horizon_days + 1)
    prices, stderr = price_days(model, config, path, days)
    ivs = _invert(prices, config.taus, days, model.days_per_year)
    implied = {tau: VolSeries(days, ivs[:, j]) for j, tau in enumerate(config.taus)}
    return spot, implied, prices, stderr


def implied_vol_series(model: RoughModel, config: McConfig) -> dict[int, VolSeries]:
    """One implied-vol series per maturity, on days ``1..T``."""
    return _run(model, config)[1]


def hurst_vs_tau(
    model: RoughModel,
    config: McConfig,
    q_grid: Sequence[float] = DEFAULT_Q_GRID,
    delta_grid: Sequence[int] = DEFAULT_DELTA_GRID,
) -> ExperimentResult:
    """Implied-vol series for every maturity and the Hurst estimate of each."""
    spot, implied, prices, stderr = _run(model, config)
    spot_fit = fit_scaling(spot, q_grid, delta_grid)
    by_tau = {}
    for tau, series in implied.items():
        rep = fit_scaling(series, q_grid, delta_grid)
        by_tau[tau] = (rep.hurst_hat, rep.hurst_stderr)
    return ExperimentResult(
        spot_series=spot,
        implied_series=implied,
        hurst_by_tau=by_tau,
        spot_hurst=(spot_fit.hurst_hat, spot_fit.hurst_stderr),
        prices=prices,
        price_stderr=stderr,
    )


def default_workers() -> int:
    return os.cpu_count() or 1
