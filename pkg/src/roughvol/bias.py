"""
Smoothing bias of implied-variance increments
=============================================

If implied variance is the maturity-average of the conditionally expected
spot variance and ``v = v0 + nu W^H``, then

    E[(v_tau(delta) - v_tau(0))^2] = nu^2 delta^(2H) f(tau / delta)

with ``f(theta) = c_H^2 / (H + 1/2)^2 (f1(theta) + f2(theta))`` and ``c_H`` the
Mandelbrot-Van Ness normalization. ``f -> 1`` as ``theta -> 0``.

All half-line integrals use ``x = u / (1 - u)`` to map ``[0, inf)`` onto
``[0, 1)`` and are split at geometrically spaced points around the two
natural scales ``theta`` and ``1``, then integrated with QUADPACK.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate
from scipy.special import gammaln

__all__ = [
    "QuadratureError",
    "BiasParams",
    "BiasCurve",
    "c_h",
    "c_h_closed_form",
    "f1",
    "f2",
    "bias_factor",
    "biased_second_moment",
    "bias_curve",
    "moment_table",
    "DEFAULT_THETA_GRID",
]

DEFAULT_TOL = 1e-10
DEFAULT_THETA_GRID = np.logspace(-2, 2, 200)


class QuadratureError(ArithmeticError):
    def __init__(self, what: str, achieved: float, tol: float):
        self.achieved = achieved
        super().__init__(f"{what}: quadrature did not converge (error estimate {achieved:.3g}, target {tol:.3g})")


def _check_hurst(hurst: float) -> None:
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"hurst must lie in (0, 1), got {hurst}")


def _quad(fn, a, b, tol, what, **kw) -> tuple[float, float]:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err, info = integrate.quad(fn, a, b, epsabs=tol, epsrel=1e-12, limit=200, full_output=1, **kw)[:3]
    if not math.isfinite(val) or err > max(tol, 1e-12 * abs(val)) * 10:
        raise QuadratureError(what, err, tol)
    return val, err


@lru_cache(maxsize=256)
def _c_h_squared(hurst: float, tol: float) -> tuple[float, float]:
    # int_0^1 (1-s)^(2H-1) ds, integrated against the algebraic weight (exact up to QUADPACK).
    near, e1 = _quad(lambda s: 1.0, 0.0, 1.0, tol, "c_H kernel on [0, 1]", weight="alg", wvar=(0.0, 2 * hurst - 1))
    # int_{-inf}^0 ((1-s)^(H-1/2) - (-s)^(H-1/2))^2 ds with s = -u/(1-u):
    #   u^(2H-1) (1-u)^(-2H-1) (1 - u^(1/2-H))^2 du on [0, 1).
    #   Equivalently (1-u)^(-2H-1) (u^(H-1/2) - 1)^2; for H < 1/2 the u^(2H-1)
    #   singularity goes into the algebraic weight.
    if hurst < 0.5:
        c = 0.5 - hurst

        def tail(u: float) -> float:
            if u <= 0.0:
                return 1.0
            return (1.0 - u) ** (-2 * hurst - 1) * math.expm1(c * math.log(u)) ** 2

        far, e2 = _quad(tail, 0.0, 1.0, tol, "c_H kernel on (-inf, 0]", weight="alg", wvar=(2 * hurst - 1, 0.0))
    else:
        c = hurst - 0.5

        # (1-u)^(1-2H) is singular at u = 1 and goes into the weight
        def tail(u: float) -> float:
            if u <= 0.0:
                return 1.0
            if u >= 1.0:
                return c * c
            return (1.0 - u) ** -2 * math.expm1(c * math.log(u)) ** 2

        far, e2 = _quad(tail, 0.0, 1.0, tol, "c_H kernel on (-inf, 0]", weight="alg", wvar=(0.0, 1 - 2 * hurst))
    total = near + far
    return 1.0 / total, (e1 + e2) / total**2


def c_h(hurst: float, tol: float = DEFAULT_TOL, full_output: bool = False):
    """Mandelbrot-Van Ness constant making ``Var W^H_1 = 1``, by quadrature."""
    _check_hurst(hurst)
    c2, err = _c_h_squared(float(hurst), tol)
    val = math.sqrt(c2)
    return (val, err / (2 * val)) if full_output else val


def c_h_closed_form(hurst: float) -> float:
    """``sqrt(2H Gamma(3/2 - H) / (Gamma(H + 1/2) Gamma(2 - 2H)))``."""
    _check_hurst(hurst)
    return math.sqrt(2 * hurst * math.exp(gammaln(1.5 - hurst) - gammaln(hurst + 0.5) - gammaln(2 - 2 * hurst)))


def _fd(x: float, theta: float, a: float) -> float:
    """``(x + theta)^a - x^a`` without cancellation for ``x >> theta``."""
    if x == 0.0:
        return theta**a
    return x**a * math.expm1(a * math.log1p(theta / x))


def _mixed_difference(x: float, theta: float, a: float) -> float:
    """``((1+x+theta)^a - (1+x)^a - (x+theta)^a + x^a) / theta``.

    Far from the origin the four powers are expanded about their midpoint
    ``c = x + h``, ``h = (1 + theta) / 2``; only even orders survive and
    ``h^2k - p^2k`` (``p = (1 - theta) / 2``) is summed as ``theta`` times a
    positive series, so nothing cancels.
    """
    h = 0.5 * (1.0 + theta)
    c = x + h
    if h > 0.3 * c:
        return (_fd(1.0 + x, theta, a) - _fd(x, theta, a)) / theta
    h2, p2 = h * h, (0.5 * (1.0 - theta)) ** 2
    inv_c2 = 1.0 / (c * c)
    coef = 0.5 * a * (a - 1.0)
    cpow = c ** (a - 2.0)
    s, p2pow = 1.0, 1.0
    total = coef * cpow
    for m in range(2, 60):
        coef *= (a - 2 * m + 2) * (a - 2 * m + 1) / ((2 * m - 1) * (2 * m))
        p2pow *= p2
        s = h2 * s + p2pow
        cpow *= inv_c2
        term = coef * cpow * s
        total += term
        if abs(term) <= 1e-17 * abs(total):
            break
    return 2.0 * total


def _breakpoints(theta: float, upper: float) -> list[float]:
    lo = min(theta, 1.0) * 1e-2
    hi = max(theta, 1.0) * 1e2
    pts = np.geomspace(lo, hi, max(2, int(math.ceil(math.log(hi / lo) / math.log(4.0)))) + 1)
    pts = [0.0] + [float(p) for p in pts if p < upper]
    if math.isfinite(upper):
        pts.append(upper)
    return pts


def _piecewise(fn, pts: list[float], tol: float, what: str, half_line: bool,
               tail: tuple[float, float] | None = None) -> tuple[float, float]:
    """Sum of QUADPACK integrals between consecutive ``pts``.

    On the half line, ``tail = (p, K)`` states ``fn(x) ~ K x^-p``; the factor
    ``(1 - u)^(p - 2)`` of the last mapped piece then goes into the
    algebraic weight, which keeps ``p < 2`` (integrable but singular at
    ``u = 1``) accurate.
    """
    pieces = []
    if half_line:
        g = fn
        mapped = lambda u: g(u / (1.0 - u)) / (1.0 - u) ** 2 if u < 1.0 else 0.0  # noqa: E731
        pts = [p / (1.0 + p) for p in pts] + [1.0]
        pieces = [(mapped, a, b, {}) for a, b in zip(pts[:-2], pts[1:-1])]
        if tail is None:
            pieces.append((mapped, pts[-2], 1.0, {}))
        else:
            power, limit = tail
            weighted = lambda u: g(u / (1.0 - u)) * (1.0 - u) ** -power if u < 1.0 else limit  # noqa: E731
            pieces.append((weighted, pts[-2], 1.0, {"weight": "alg", "wvar": (0.0, power - 2.0)}))
    else:
        pieces = [(fn, a, b, {}) for a, b in zip(pts[:-1], pts[1:])]
    n = len(pieces)
    total, err = 0.0, 0.0
    for f, a, b, kw in pieces:
        v, e = _quad(f, a, b, tol / n, what, **kw)
        total += v
        err += e
    return total, err


def _check_theta(theta: float) -> None:
    if not theta > 0:
        raise ValueError(f"theta must be positive, got {theta}")


def f1(theta: float, hurst: float, tol: float = DEFAULT_TOL, full_output: bool = False):
    """``theta^-2 int_{-inf}^0 ((1+theta-s)^a - (1-s)^a - (theta-s)^a + (-s)^a)^2 ds``, ``a = H + 1/2``."""
    _check_theta(theta)
    _check_hurst(hurst)
    a = hurst + 0.5

    def g(x: float) -> float:
        d = _mixed_difference(x, theta, a)
        return d * d

    # far field: the mixed difference is a (a - 1) x^(a - 2) to leading order
    tail = (4.0 - 2.0 * a, (a * (a - 1.0)) ** 2)
    val, err = _piecewise(g, _breakpoints(theta, math.inf), tol, "f1", half_line=True, tail=tail)
    return (val, err) if full_output else val


def f2(theta: float, hurst: float, tol: float = DEFAULT_TOL, full_output: bool = False):
    """``theta^-2 int_0^1 ((1+theta-s)^a - (1-s)^a)^2 ds``, ``a = H + 1/2``."""
    _check_theta(theta)
    _check_hurst(hurst)
    a = hurst + 0.5

    def g(x: float) -> float:
        d = _fd(x, theta, a) / theta
        return d * d

    val, err = _piecewise(g, _breakpoints(theta, 1.0), tol, "f2", half_line=False)
    return (val, err) if full_output else val


def bias_factor(theta: float, hurst: float, tol: float = DEFAULT_TOL, full_output: bool = False):
    """``f(theta) = c_H^2 / (H + 1/2)^2 (f1 + f2)``; with ``full_output`` also an error bound."""
    v1, e1 = f1(theta, hurst, tol, full_output=True)
    v2, e2 = f2(theta, hurst, tol, full_output=True)
    c2, ec2 = _c_h_squared(float(hurst), tol)
    a2 = (hurst + 0.5) ** 2
    val = c2 * (v1 + v2) / a2
    err = (c2 * (e1 + e2) + (v1 + v2) * ec2) / a2
    return (val, err) if full_output else val


@dataclass(frozen=True)
class BiasParams:
    hurst: float
    nu: float = 1.0
    v0: float = 1.0

    def __post_init__(self):
        _check_hurst(self.hurst)
        if not self.nu > 0 or not self.v0 > 0:
            raise ValueError("nu and v0 must be positive")


def biased_second_moment(delta: float, tau: float, params: BiasParams, tol: float = DEFAULT_TOL) -> float:
    """``E[(v_tau(delta) - v_tau(0))^2] = nu^2 delta^(2H) f(tau / delta)``."""
    if not delta > 0 or not tau > 0:
        raise ValueError("delta and tau must be positive")
    return params.nu**2 * delta ** (2 * params.hurst) * bias_factor(tau / delta, params.hurst, tol)


@dataclass
class BiasCurve:
    theta_grid: np.ndarray
    f_values: np.ndarray
    h_used: float
    errors: np.ndarray
    tol: float = DEFAULT_TOL
    meta: dict = field(default_factory=dict)

    def write(self, out_dir: str | Path, stem: str = "bias_curve") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        path = out / f"{stem}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "f_value", "error_bound"])
            for t, f, e in zip(self.theta_grid, self.f_values, self.errors):
                w.writerow([repr(float(t)), repr(float(f)), repr(float(e))])
        meta = out / f"{stem}_meta.json"
        meta.write_text(json.dumps({"hurst": self.h_used, "tol": self.tol, "n_points": len(self.theta_grid),
                                    "c_h": c_h(self.h_used), **self.meta}, indent=2, sort_keys=True))
        return [path, meta]


def _curve_point(args):
    t, hurst, tol = args
    return bias_factor(t, hurst, tol, full_output=True)


def bias_curve(hurst: float, theta_grid=None, tol: float = DEFAULT_TOL, workers: int = 1) -> BiasCurve:
    """``f`` on ``theta_grid``; points are independent and may be spread over ``workers`` processes."""
    _check_hurst(hurst)
    theta = DEFAULT_THETA_GRID if theta_grid is None else np.asarray(theta_grid, dtype=float)
    jobs = [(float(t), float(hurst), tol) for t in theta]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as ex:
            vals = list(ex.map(_curve_point, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        vals = [_curve_point(j) for j in jobs]
    f = np.array([v for v, _ in vals])
    if not np.all(np.isfinite(f) & (f > 0)):
        raise QuadratureError("bias curve", float("nan"), tol)
    return BiasCurve(theta, f, float(hurst), np.array([e for _, e in vals]), tol)


def moment_table(params: BiasParams, tau: float, deltas, tol: float = DEFAULT_TOL) -> list[dict]:
    """Rows of ``delta, theta, f, m_hat, unbiased`` with ``unbiased = nu^2 delta^(2H)``."""
    rows = []
    for d in deltas:
        f = bias_factor(tau / d, params.hurst, tol)
        base = params.nu**2 * d ** (2 * params.hurst)
        rows.append({"delta": d, "theta": tau / d, "f": f, "m_hat": base * f, "unbiased": base})
    return rows
