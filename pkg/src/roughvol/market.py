"""
Option quotes to ATM implied volatilities
=========================================

Pipeline: filter raw quotes, fit discount factor and forward per
``(date, expiry)`` from put-call parity, invert mid call prices near the money,
and keep one ATM implied vol per date from the shortest retained maturity.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
import math
from collections import Counter, defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import blackscholes as bs

__all__ = [
    "QUOTE_COLUMNS",
    "SchemaError",
    "ParityError",
    "OptionQuoteRow",
    "FilterConfig",
    "FilterReport",
    "ParityFit",
    "IvPoint",
    "DailyProxy",
    "MarketResult",
    "read_quotes_csv",
    "third_friday",
    "is_settlement_date",
    "filter_quotes",
    "parity_weights",
    "fit_parity",
    "extract_atm_ivs",
    "mad_filter",
    "select_daily_proxy",
    "run_market_pipeline",
    "write_fits_csv",
    "write_iv_panel_csv",
    "write_proxy_csv",
    "write_quotes_csv",
    "business_days",
    "synthetic_quotes",
]

log = logging.getLogger(__name__)

QUOTE_COLUMNS = (
    "date", "expiry", "strike", "call_bid", "call_ask", "put_bid", "put_ask", "call_volume", "put_volume",
)
SPREAD_FLOOR = 1e-6
DAYS_PER_YEAR = 365.0


class SchemaError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ParityError(ValueError):
    pass


@dataclass(frozen=True)
class OptionQuoteRow:
    date: dt.date
    expiry: dt.date
    strike: float
    call_bid: float
    call_ask: float
    put_bid: float
    put_ask: float
    call_volume: int
    put_volume: int

    @property
    def call_mid(self) -> float:
        return 0.5 * (self.call_bid + self.call_ask)

    @property
    def put_mid(self) -> float:
        return 0.5 * (self.put_bid + self.put_ask)

    @property
    def days_to_expiry(self) -> int:
        return (self.expiry - self.date).days


def _parse_row(rec: dict, lineno: int) -> OptionQuoteRow:
    try:
        row = OptionQuoteRow(
            date=dt.date.fromisoformat(rec["date"].strip()),
            expiry=dt.date.fromisoformat(rec["expiry"].strip()),
            strike=float(rec["strike"]),
            call_bid=float(rec["call_bid"]),
            call_ask=float(rec["call_ask"]),
            put_bid=float(rec["put_bid"]),
            put_ask=float(rec["put_ask"]),
            call_volume=int(float(rec["call_volume"])),
            put_volume=int(float(rec["put_volume"])),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"cannot parse row: {exc}", line=lineno) from None
    if not row.strike > 0:
        raise SchemaError("strike must be positive", line=lineno)
    if min(row.call_bid, row.call_ask, row.put_bid, row.put_ask) < 0 or min(row.call_volume, row.put_volume) < 0:
        raise SchemaError("prices and volumes must be nonnegative", line=lineno)
    return row


def read_quotes_csv(file: str | Path) -> list[OptionQuoteRow]:
    with open(file, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError("empty file, header required", line=1)
        missing = [c for c in QUOTE_COLUMNS if c not in [f.strip() for f in reader.fieldnames]]
        if missing:
            raise SchemaError(f"missing columns: {', '.join(missing)}", line=1)
        reader.fieldnames = [f.strip() for f in reader.fieldnames]
        return [_parse_row(rec, lineno) for lineno, rec in enumerate(reader, start=2)]


def third_friday(year: int, month: int) -> dt.date:
    first = dt.date(year, month, 1)
    return first + dt.timedelta(days=(4 - first.weekday()) % 7 + 14)


def _shift_business_days(d: dt.date, n: int) -> dt.date:
    step = 1 if n > 0 else -1
    for _ in range(abs(n)):
        d += dt.timedelta(days=step)
        while d.weekday() >= 5:
            d += dt.timedelta(days=step)
    return d


def is_settlement_date(d: dt.date, before: int = 1, after: int = 1) -> bool:
    """True if ``d`` is within ``before``/``after`` business days of its month's third Friday."""
    tf = third_friday(d.year, d.month)
    return _shift_business_days(tf, -before) <= d <= _shift_business_days(tf, after)


@dataclass(frozen=True)
class FilterConfig:
    min_price: float = 0.025
    min_days: int = 15
    max_days: int = 60
    drop_settlement: bool = True
    settlement_before: int = 1
    settlement_after: int = 1
    moneyness_band: float = 0.03
    outlier_mads: float | None = None


@dataclass
class FilterReport:
    n_input: int = 0
    removed: Counter = field(default_factory=Counter)
    n_kept: int = 0
    n_parity_fits: int = 0
    parity_failures: Counter = field(default_factory=Counter)
    n_iv_points: int = 0
    iv_failures: int = 0
    n_outliers: int = 0
    n_days: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["removed"] = dict(sorted(self.removed.items()))
        d["parity_failures"] = dict(sorted(self.parity_failures.items()))
        return d


def filter_quotes(rows: Iterable[OptionQuoteRow], config: FilterConfig = FilterConfig()):
    """Apply the quote filters; returns ``(kept_rows, FilterReport)``.

    Rules, first match wins: crossed quote, maturity outside
    ``[min_days, max_days]`` calendar days, settlement date, mid price of either
    leg below ``min_price``, zero volume on either leg.
    """
    report = FilterReport()
    kept = []
    for r in rows:
        report.n_input += 1
        if r.call_bid > r.call_ask or r.put_bid > r.put_ask:
            reason = "crossed_quote"
        elif not config.min_days <= r.days_to_expiry <= config.max_days:
            reason = "maturity"
        elif config.drop_settlement and is_settlement_date(r.date, config.settlement_before, config.settlement_after):
            reason = "settlement_date"
        elif min(r.call_mid, r.put_mid) < config.min_price:
            reason = "min_price"
        elif min(r.call_volume, r.put_volume) == 0:
            reason = "zero_volume"
        else:
            kept.append(r)
            continue
        report.removed[reason] += 1
    report.n_kept = len(kept)
    return kept, report


@dataclass(frozen=True)
class ParityFit:
    date: dt.date
    expiry: dt.date
    discount: float
    forward: float
    n_strikes: int
    residual_rms: float

    @property
    def tau_days(self) -> int:
        return (self.expiry - self.date).days


def parity_weights(rows: Sequence[OptionQuoteRow]) -> np.ndarray:
    """``sqrt(min(call volume, put volume))`` over the mean half-spread, floored at 1e-6."""
    vol = np.array([min(r.call_volume, r.put_volume) for r in rows], dtype=float)
    spread = np.array([0.5 * (r.call_ask - r.call_bid) + 0.5 * (r.put_ask - r.put_bid) for r in rows])
    return np.sqrt(vol) / np.maximum(spread, SPREAD_FLOOR)


def fit_parity(rows: Sequence[OptionQuoteRow]) -> ParityFit:
    """Weighted least squares on ``C_mid - P_mid = D F - D K``.

    With ``a = D F`` and ``b = D`` the residual is linear in ``(a, b)``; the
    2x2 system is solved on centered strikes for conditioning.
    """
    if not rows:
        raise ParityError("no quotes")
    keys = {(r.date, r.expiry) for r in rows}
    if len(keys) != 1:
        raise ParityError("rows must share one (date, expiry)")
    w = parity_weights(rows)
    k = np.array([r.strike for r in rows])
    y = np.array([r.call_mid - r.put_mid for r in rows])
    use = w > 0
    if len(np.unique(k[use])) < 2:
        raise ParityError("need at least 2 distinct strikes with positive weight")
    w, k, y = w[use], k[use], y[use]

    sw = w.sum()
    k0 = np.dot(w, k) / sw
    y0 = np.dot(w, y) / sw
    kc = k - k0
    b = -np.dot(w, kc * (y - y0)) / np.dot(w, kc * kc)
    a = y0 + b * k0
    if not b > 0:
        raise ParityError(f"nonpositive discount {b}")
    if not b < 1.5:
        raise ParityError(f"discount {b} out of range")
    resid = y - a + b * k
    date, expiry = next(iter(keys))
    return ParityFit(date, expiry, float(b), float(a / b), int(len(np.unique(k))),
                     float(np.sqrt(np.dot(w, resid**2) / sw)))


@dataclass(frozen=True)
class IvPoint:
    date: dt.date
    expiry: dt.date
    strike: float
    log_moneyness: float
    implied_vol: float

    @property
    def tau_days(self) -> int:
        return (self.expiry - self.date).days


def extract_atm_ivs(rows: Sequence[OptionQuoteRow], parity: ParityFit, band: float = 0.03) -> tuple[list[IvPoint], int]:
    """Implied vols of mid call prices with ``|log(K / F)| <= band``.

    Returns the points and the number of strikes skipped because the mid price
    could not be inverted.
    """
    tau = parity.tau_days / DAYS_PER_YEAR
    points, failures = [], 0
    for r in rows:
        lm = math.log(r.strike / parity.forward)
        if abs(lm) > band:
            continue
        try:
            iv = bs.bs_implied_vol(r.call_mid, parity.forward, r.strike, tau, parity.discount)
        except bs.ArbitrageBoundsError as exc:
            log.warning("%s %s K=%s: %s", r.date, r.expiry, r.strike, exc)
            failures += 1
            continue
        points.append(IvPoint(r.date, r.expiry, r.strike, lm, iv))
    return points, failures


def mad_filter(points: Sequence[IvPoint], n_mads: float) -> tuple[list[IvPoint], int]:
    """Drop per-date IVs further than ``n_mads`` median absolute deviations from the date median."""
    by_date = defaultdict(list)
    for p in points:
        by_date[p.date].append(p)
    kept, dropped = [], 0
    for d in sorted(by_date):
        group = by_date[d]
        ivs = np.array([p.implied_vol for p in group])
        med = np.median(ivs)
        mad = np.median(np.abs(ivs - med))
        for p, iv in zip(group, ivs):
            if mad > 0 and abs(iv - med) > n_mads * mad:
                dropped += 1
            else:
                kept.append(p)
    return kept, dropped


@dataclass(frozen=True)
class DailyProxy:
    date: dt.date
    tau_days: int
    implied_vol: float


def select_daily_proxy(points: Sequence[IvPoint]) -> list[DailyProxy]:
    """Per date: shortest maturity, then smallest ``|log(K / F)|``, ties to the lower strike."""
    best: dict[dt.date, IvPoint] = {}
    for p in points:
        cur = best.get(p.date)
        key = (p.tau_days, abs(p.log_moneyness), p.strike)
        if cur is None or key < (cur.tau_days, abs(cur.log_moneyness), cur.strike):
            best[p.date] = p
    return [DailyProxy(d, best[d].tau_days, best[d].implied_vol) for d in sorted(best)]


@dataclass
class MarketResult:
    fits: list[ParityFit]
    iv_points: list[IvPoint]
    proxies: list[DailyProxy]
    report: FilterReport


def run_market_pipeline(rows: Iterable[OptionQuoteRow], config: FilterConfig = FilterConfig()) -> MarketResult:
    """Filter, fit parity per ``(date, expiry)``, extract ATM IVs and daily proxies.

    Per-group failures are counted in the report and do not stop the run.
    """
    kept, report = filter_quotes(rows, config)
    groups = defaultdict(list)
    for r in kept:
        groups[(r.date, r.expiry)].append(r)

    fits, points = [], []
    for key in sorted(groups):
        try:
            fit = fit_parity(groups[key])
        except ParityError as exc:
            msg = str(exc)
            reason = "nonpositive_discount" if "nonpositive" in msg else (
                "too_few_strikes" if "distinct strikes" in msg else "other")
            report.parity_failures[reason] += 1
            log.warning("parity fit failed for %s %s: %s", key[0], key[1], exc)
            continue
        fits.append(fit)
        pts, failures = extract_atm_ivs(groups[key], fit, config.moneyness_band)
        points.extend(pts)
        report.iv_failures += failures

    if config.outlier_mads is not None:
        points, report.n_outliers = mad_filter(points, config.outlier_mads)
    proxies = select_daily_proxy(points)
    report.n_parity_fits = len(fits)
    report.n_iv_points = len(points)
    report.n_days = len(proxies)
    return MarketResult(fits, points, proxies, report)


def _num(x) -> str:
    # shortest round-trip text; numpy scalars would otherwise carry their type name
    return repr(float(x))


def write_fits_csv(fits: Sequence[ParityFit], file: str | Path) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "expiry", "tau_days", "discount", "forward", "n_strikes", "residual_rms"])
        for f in fits:
            w.writerow([f.date.isoformat(), f.expiry.isoformat(), f.tau_days, _num(f.discount), _num(f.forward),
                        f.n_strikes, _num(f.residual_rms)])


def write_iv_panel_csv(points: Sequence[IvPoint], file: str | Path) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "expiry", "strike", "log_moneyness", "implied_vol"])
        for p in points:
            w.writerow([p.date.isoformat(), p.expiry.isoformat(), _num(p.strike), _num(p.log_moneyness),
                        _num(p.implied_vol)])


def write_proxy_csv(proxies: Sequence[DailyProxy], file: str | Path) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "tau_days", "implied_vol"])
        for p in proxies:
            w.writerow([p.date.isoformat(), p.tau_days, _num(p.implied_vol)])


def write_quotes_csv(rows: Sequence[OptionQuoteRow], file: str | Path) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(QUOTE_COLUMNS)
        for r in rows:
            w.writerow([r.date.isoformat(), r.expiry.isoformat(), _num(r.strike), _num(r.call_bid), _num(r.call_ask),
                        _num(r.put_bid), _num(r.put_ask), r.call_volume, r.put_volume])


def business_days(start: dt.date, n: int) -> list[dt.date]:
    out, d = [], start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return out


def synthetic_quotes(
    dates: Sequence[dt.date],
    expiry_days: Sequence[int] = (20, 34, 48),
    vol: float = 0.2,
    spot: float = 1500.0,
    rate: float = 0.01,
    strikes_rel: Sequence[float] = tuple(np.linspace(0.94, 1.06, 25)),
    half_spread: float = 0.0,
    volume: int = 100,
) -> list[OptionQuoteRow]:
    """Quotes from a flat-vol Black-Scholes world.

    For each date and maturity ``d`` days, ``D = exp(-rate d / 365)`` and
    ``F = spot / D``; mids are exact BS prices and bid/ask sit ``half_spread``
    either side (bids floored at zero).
    """
    rows = []
    for date in dates:
        for days in expiry_days:
            tau = days / DAYS_PER_YEAR
            disc = math.exp(-rate * tau)
            fwd = spot / disc
            k = fwd * np.asarray(strikes_rel, dtype=float)
            c = bs.call_price(fwd, k, tau, vol, disc)
            p = c - disc * (fwd - k)
            for ki, ci, pi in zip(k, c, p):
                rows.append(OptionQuoteRow(
                    date, date + dt.timedelta(days=int(days)), float(ki),
                    max(float(ci) - half_spread, 0.0), float(ci) + half_spread,
                    max(float(pi) - half_spread, 0.0), float(pi) + half_spread, volume, volume,
                ))
    return rows
