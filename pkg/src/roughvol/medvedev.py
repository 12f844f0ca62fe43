"""
Short-maturity correction from ATM implied vol to spot vol
==========================================================

    sigma = s - I1(s) sqrt(tau)
              + (I1(s) I1'(s) - I2(s) + rho b(s) E[dJ] lambda'(s) / 2) tau

with ``s`` the ATM implied vol, ``b(s) = beta s^phi`` and
``lambda(s) = lambda0 s^psi``. ``I1`` and ``I2`` depend on the calibrated model
and are supplied by the caller through :class:`ExpansionTerms`; the defaults
are zero. ``tau`` is in years.
"""

from __future__ import annotations

import csv
import importlib
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .scaling import VolSeries

__all__ = [
    "MsModelParams",
    "ExpansionTerms",
    "ProxyCollapsedError",
    "HESTON_PRESET",
    "GENERAL_PRESET",
    "spot_proxy",
    "ProxyRow",
    "proxy_rows",
    "proxy_series",
    "load_callable",
    "write_proxy_rows_csv",
]

DAYS_PER_YEAR = 365.0


class ProxyCollapsedError(ArithmeticError):
    """The expansion returned a nonpositive volatility."""


@dataclass(frozen=True)
class MsModelParams:
    beta_rho: float
    rho: float
    phi: float = 0.0
    lambda0_ejump: float = 0.0
    e_jump: float | None = None
    psi: float | None = None

    def __post_init__(self):
        if not -1.0 <= self.rho <= 1.0:
            raise ValueError(f"rho must lie in [-1, 1], got {self.rho}")
        if self.beta_rho != 0 and self.rho == 0:
            raise ValueError("beta is undefined: beta_rho != 0 with rho == 0")
        if self.phi < 0:
            raise ValueError("phi must be nonnegative")
        if self.psi is not None and self.psi < 0:
            raise ValueError("psi must be nonnegative")
        if self.lambda0_ejump != 0 and not self.e_jump:
            raise ValueError("lambda0_ejump != 0 requires a nonzero e_jump")
        if self.lambda0_ejump != 0 and self.psi is None:
            raise ValueError("lambda0_ejump != 0 requires psi")

    @property
    def beta(self) -> float:
        return self.beta_rho / self.rho if self.rho else 0.0

    @property
    def lambda0(self) -> float:
        if not self.e_jump:
            return 0.0
        return self.lambda0_ejump / self.e_jump

    @property
    def has_jumps(self) -> bool:
        return self.lambda0 != 0.0

    def b(self, sigma: float) -> float:
        return self.beta * sigma**self.phi

    def dlambda_dsigma(self, sigma: float) -> float:
        if not self.has_jumps:
            return 0.0
        return self.lambda0 * self.psi * sigma ** (self.psi - 1.0)


HESTON_PRESET = MsModelParams(beta_rho=-0.18, rho=-0.48, phi=0.0, lambda0_ejump=0.0)
GENERAL_PRESET = MsModelParams(beta_rho=-3.27, rho=-0.39, phi=1.79, lambda0_ejump=-0.6924, e_jump=-0.17, psi=1.11)


def _zero(sigma: float) -> float:
    return 0.0


@dataclass(frozen=True)
class ExpansionTerms:
    """``I1(0, s)``, ``I2(0, s)`` and optionally ``dI1/ds``.

    Without ``i1_dsigma`` the derivative is a central difference with step
    ``1e-5 * max(s, 1)``.
    """

    i1: Callable[[float], float] = _zero
    i2: Callable[[float], float] = _zero
    i1_dsigma: Callable[[float], float] | None = None

    def di1(self, sigma: float) -> float:
        if self.i1_dsigma is not None:
            return float(self.i1_dsigma(sigma))
        h = 1e-5 * max(sigma, 1.0)
        return (self.i1(sigma + h) - self.i1(sigma - h)) / (2.0 * h)


def spot_proxy(sigma_hat: float, tau: float, params: MsModelParams, terms: ExpansionTerms = ExpansionTerms()) -> float:
    """Spot volatility implied by ATM vol ``sigma_hat`` at maturity ``tau`` years."""
    if not sigma_hat > 0:
        raise ValueError(f"sigma_hat must be positive, got {sigma_hat}")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if params.has_jumps and params.psi < 1 and sigma_hat < 1e-3:
        warnings.warn(f"dlambda/dsigma is singular as sigma -> 0 (psi={params.psi}, sigma_hat={sigma_hat})",
                      RuntimeWarning, stacklevel=2)
    i1 = float(terms.i1(sigma_hat))
    i2 = float(terms.i2(sigma_hat))
    di1 = terms.di1(sigma_hat)
    jump = 0.5 * params.rho * params.b(sigma_hat) * (params.e_jump or 0.0) * params.dlambda_dsigma(sigma_hat)
    sigma = sigma_hat - i1 * math.sqrt(tau) + (i1 * di1 - i2 + jump) * tau
    if not math.isfinite(sigma):
        raise ProxyCollapsedError(f"non-finite proxy at sigma_hat={sigma_hat}, tau={tau}")
    if sigma <= 0:
        raise ProxyCollapsedError(f"proxy collapsed to {sigma} at sigma_hat={sigma_hat}, tau={tau}")
    return sigma


@dataclass(frozen=True)
class ProxyRow:
    date: object
    tau_days: float
    sigma_hat: float
    sigma_proxy: float


def proxy_rows(daily: Iterable[tuple], params: MsModelParams, terms: ExpansionTerms = ExpansionTerms()) -> list[ProxyRow]:
    """Apply :func:`spot_proxy` to ``(date, tau_days, sigma_hat)`` triples.

    Maturities are converted to years as ``tau_days / 365``. Dates whose proxy
    collapses are dropped with a warning.
    """
    out = []
    for date, tau_days, sigma_hat in daily:
        try:
            s = spot_proxy(sigma_hat, tau_days / DAYS_PER_YEAR, params, terms)
        except ProxyCollapsedError as exc:
            warnings.warn(f"{date}: {exc}; date dropped", RuntimeWarning, stacklevel=2)
            continue
        out.append(ProxyRow(date, tau_days, sigma_hat, s))
    return out


def proxy_series(daily: Iterable[tuple], params: MsModelParams, terms: ExpansionTerms = ExpansionTerms()) -> VolSeries:
    rows = proxy_rows(daily, params, terms)
    dates = [r.date.isoformat() if hasattr(r.date, "isoformat") else r.date for r in rows]
    return VolSeries(np.array(dates), np.array([r.sigma_proxy for r in rows]))


def load_callable(spec: str) -> Callable[[float], float]:
    """Resolve ``"package.module:function"``."""
    module, _, name = spec.partition(":")
    if not module or not name:
        raise ValueError(f"expected 'module:function', got {spec!r}")
    fn = getattr(importlib.import_module(module), name)
    if not callable(fn):
        raise TypeError(f"{spec} is not callable")
    return fn


def write_proxy_rows_csv(rows: Sequence[ProxyRow], file: str | Path) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "tau_days", "sigma_hat", "sigma_proxy"])
        for r in rows:
            d = r.date.isoformat() if hasattr(r.date, "isoformat") else r.date
            w.writerow([d, r.tau_days, repr(float(r.sigma_hat)), repr(float(r.sigma_proxy))])
