"""Black-Scholes call prices on the forward and implied-volatility inversion.

``tau`` and ``vol`` only ever appear through the total standard deviation
``vol * sqrt(tau)``, so any consistent unit works (years with annualized vols,
days with daily vols).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

__all__ = [
    "ArbitrageBoundsError",
    "BelowIntrinsicError",
    "AboveForwardError",
    "BsQuote",
    "bs_call_price",
    "call_price",
    "call_vega",
    "bs_implied_vol",
    "implied_vol",
]

VOL_LO = 1e-6
VOL_HI = 10.0
_BISECT_TOL = 1e-4
_NEWTON_TOL = 1e-12


class ArbitrageBoundsError(ValueError):
    """Price outside the interval on which the call price can be inverted."""


class BelowIntrinsicError(ArbitrageBoundsError):
    pass


class AboveForwardError(ArbitrageBoundsError):
    pass


@dataclass(frozen=True)
class BsQuote:
    spot_or_forward: float
    strike: float
    tau: float
    vol: float
    discount: float = 1.0

    def __post_init__(self):
        for name in ("spot_or_forward", "strike", "tau", "vol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not 0 < self.discount <= 1:
            raise ValueError(f"discount must lie in (0, 1], got {self.discount}")


def call_price(forward, strike, tau, vol, discount=1.0):
    """Vectorized discounted Black-Scholes call on the forward."""
    forward = np.asarray(forward, dtype=float)
    strike = np.asarray(strike, dtype=float)
    sd = np.asarray(vol, dtype=float) * np.sqrt(tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = np.log(forward / strike) / sd + 0.5 * sd
    undiscounted = forward * ndtr(d1) - strike * ndtr(d1 - sd)
    intrinsic = np.maximum(forward - strike, 0.0)
    undiscounted = np.where(sd > 0, np.maximum(undiscounted, intrinsic), intrinsic)
    return discount * undiscounted


def call_vega(forward, strike, tau, vol, discount=1.0):
    """d(price)/d(vol)."""
    sd = np.asarray(vol, dtype=float) * np.sqrt(tau)
    d1 = np.log(np.asarray(forward, dtype=float) / strike) / sd + 0.5 * sd
    return discount * forward * np.sqrt(tau) * np.exp(-0.5 * d1 * d1) / np.sqrt(2 * np.pi)


def bs_call_price(q: BsQuote) -> float:
    return float(call_price(q.spot_or_forward, q.strike, q.tau, q.vol, q.discount))


def implied_vol(price, forward, strike, tau, discount=1.0, *, vol_bounds=(VOL_LO, VOL_HI)):
    """Vectorized implied volatility.

    Bisection on ``vol_bounds`` (default ``[1e-6, 10]``) until the bracket is narrower than 1e-4,
    then Newton steps kept inside the bracket until the step is below 1e-12.

    Raises
    ------
    BelowIntrinsicError, AboveForwardError
        If any price sits outside the open no-arbitrage interval.
    ArbitrageBoundsError
        If the root lies outside the volatility bracket.
    """
    price, forward, strike, tau, discount = np.broadcast_arrays(
        *(np.asarray(a, dtype=float) for a in (price, forward, strike, tau, discount))
    )
    intrinsic = discount * np.maximum(forward - strike, 0.0)
    upper = discount * forward
    if np.any(price <= intrinsic):
        raise BelowIntrinsicError("price at or below discounted intrinsic value")
    if np.any(price >= upper):
        raise AboveForwardError("price at or above the discounted forward")

    lo = np.full(price.shape, float(vol_bounds[0]))
    hi = np.full(price.shape, float(vol_bounds[1]))
    if np.any(call_price(forward, strike, tau, hi, discount) < price) or np.any(
        call_price(forward, strike, tau, lo, discount) > price
    ):
        raise ArbitrageBoundsError(f"implied vol outside [{vol_bounds[0]}, {vol_bounds[1]}]")

    while np.any(hi - lo > _BISECT_TOL):
        mid = 0.5 * (lo + hi)
        above = call_price(forward, strike, tau, mid, discount) > price
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)

    vol = 0.5 * (lo + hi)
    for _ in range(50):
        diff = call_price(forward, strike, tau, vol, discount) - price
        lo = np.where(diff < 0, vol, lo)
        hi = np.where(diff > 0, vol, hi)
        vega = call_vega(forward, strike, tau, vol, discount)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = diff / vega
        new = vol - step
        outside = ~np.isfinite(new) | (new < lo) | (new > hi)
        new = np.where(outside, 0.5 * (lo + hi), new)
        done = np.abs(new - vol) <= _NEWTON_TOL
        vol = new
        if np.all(done):
            break
    return vol if vol.ndim else float(vol)


def bs_implied_vol(price: float, spot_or_forward: float, strike: float, tau: float, discount: float = 1.0,
                   **kwargs) -> float:
    """Scalar implied volatility; see :func:`implied_vol`."""
    return float(implied_vol(price, spot_or_forward, strike, tau, discount, **kwargs))
