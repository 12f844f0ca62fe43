"""
Structure-function scaling of log-volatility
============================================

``m(q, delta)`` is the mean of ``|log sigma_{k+delta} - log sigma_k|^q`` over
every admissible start ``k``. For a log-fBm series ``m(q, delta) ~ c_q delta^(qH)``,
so the log-log slope ``zeta(q)`` is linear in ``q`` and a line through the
origin fitted to ``(q, zeta(q))`` gives ``H``.
"""

from __future__ import annotations

import csv
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

__all__ = [
    "DEFAULT_Q_GRID",
    "DEFAULT_DELTA_GRID",
    "SeriesError",
    "DegenerateScalingError",
    "VolSeries",
    "ScalingReport",
    "IncrementDiagnostics",
    "structure_function",
    "structure_table",
    "fit_scaling",
    "increment_diagnostics",
    "read_series_csv",
    "write_series_csv",
]

DEFAULT_Q_GRID = (0.5, 1.0, 1.5, 2.0, 3.0)
DEFAULT_DELTA_GRID = tuple(range(1, 41))


class SeriesError(ValueError):
    """Invalid volatility series or parse failure; ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DegenerateScalingError(ValueError):
    """Too few nonzero structure-function cells to fit a slope.

    Carries the computed ``m_table`` so callers can still report it.
    """

    def __init__(self, message, q_grid, delta_grid, m_table):
        super().__init__(message)
        self.q_grid = np.asarray(q_grid, dtype=float)
        self.delta_grid = np.asarray(delta_grid, dtype=int)
        self.m_table = m_table


@dataclass(frozen=True, eq=False)
class VolSeries:
    """Positive volatility observations on strictly increasing dates."""

    dates: np.ndarray
    values: np.ndarray
    unit_lag: str = "1 business day"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        dates = np.asarray(self.dates)
        if values.ndim != 1 or dates.shape != values.shape:
            raise SeriesError("dates and values must be 1-d and of equal length")
        if not np.all(np.isfinite(values)) or np.any(values <= 0):
            bad = int(np.flatnonzero(~(np.isfinite(values) & (values > 0)))[0])
            raise SeriesError(f"value at position {bad} is not strictly positive: {values[bad]}")
        if len(dates) > 1 and not np.all(dates[1:] > dates[:-1]):
            raise SeriesError("dates must be strictly increasing")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "dates", dates)

    @classmethod
    def from_values(cls, values, unit_lag: str = "1 business day") -> "VolSeries":
        values = np.asarray(values, dtype=float)
        return cls(np.arange(len(values)), values, unit_lag)

    def __len__(self) -> int:
        return len(self.values)

    @property
    def log_values(self) -> np.ndarray:
        return np.log(self.values)


def _log_increments(series: VolSeries, delta: int) -> np.ndarray:
    n_steps = len(series) - 1
    if int(delta) != delta or delta < 1:
        raise ValueError(f"delta must be a positive integer, got {delta}")
    if delta >= n_steps:
        raise ValueError(f"delta={delta} must be smaller than the series span N={n_steps}")
    x = series.log_values
    return x[delta:] - x[:-delta]


def structure_function(series: VolSeries, q: float, delta: int) -> float:
    if not q > 0:
        raise ValueError(f"q must be positive, got {q}")
    return float(np.mean(np.abs(_log_increments(series, delta)) ** q))


def structure_table(series: VolSeries, q_grid: Sequence[float], delta_grid: Sequence[int]) -> np.ndarray:
    """``m[i, j] = m(q_grid[i], delta_grid[j])``."""
    q = np.asarray(q_grid, dtype=float)
    if np.any(q <= 0):
        raise ValueError("q values must be positive")
    table = np.empty((len(q), len(delta_grid)))
    for j, d in enumerate(delta_grid):
        a = np.abs(_log_increments(series, d))
        table[:, j] = np.mean(a[None, :] ** q[:, None], axis=1)
    return table


@dataclass
class ScalingReport:
    q_grid: np.ndarray
    delta_grid: np.ndarray
    m_table: np.ndarray
    zeta: np.ndarray
    zeta_stderr: np.ndarray
    log_cq: np.ndarray
    r_squared: np.ndarray
    hurst_hat: float
    hurst_stderr: float
    excluded_cells: list = field(default_factory=list)

    @property
    def monofractal_residual(self) -> float:
        return float(np.max(np.abs(self.zeta - self.q_grid * self.hurst_hat)))

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        d["monofractal_residual"] = self.monofractal_residual
        return d

    def write(self, out_dir: str | Path, stem: str = "scaling", extra: dict | None = None) -> list[Path]:
        """Write ``<stem>_report.json``, ``<stem>_logm.csv`` and ``<stem>_zeta.csv``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report = out / f"{stem}_report.json"
        payload = self.to_dict()
        if extra:
            payload.update(extra)
        report.write_text(json.dumps(payload, indent=2, sort_keys=True))

        logm = out / f"{stem}_logm.csv"
        with open(logm, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q", "delta", "log_delta", "log_m"])
            for i, q in enumerate(self.q_grid):
                for j, d in enumerate(self.delta_grid):
                    m = self.m_table[i, j]
                    if m > 0:
                        w.writerow([repr(float(q)), int(d), repr(math.log(d)), repr(math.log(m))])

        zeta = out / f"{stem}_zeta.csv"
        with open(zeta, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["q", "zeta", "zeta_stderr", "r_squared", "q_times_hurst"])
            for i, q in enumerate(self.q_grid):
                w.writerow([repr(float(q)), repr(float(self.zeta[i])), repr(float(self.zeta_stderr[i])),
                            repr(float(self.r_squared[i])), repr(float(q * self.hurst_hat))])
        return [report, logm, zeta]


def _ols(x: np.ndarray, y: np.ndarray) -> tuple[float, float, float, float]:
    """Slope, slope stderr, intercept, R^2."""
    n = len(x)
    xm, ym = x.mean(), y.mean()
    sxx = np.sum((x - xm) ** 2)
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - intercept - slope * x
    sst = np.sum((y - ym) ** 2)
    r2 = float(1 - np.sum(resid**2) / sst) if sst > 0 else 1.0
    se = float(np.sqrt(np.sum(resid**2) / (n - 2) / sxx)) if n > 2 else float("nan")
    return slope, se, intercept, r2


def fit_scaling(
    series: VolSeries,
    q_grid: Sequence[float] = DEFAULT_Q_GRID,
    delta_grid: Sequence[int] = DEFAULT_DELTA_GRID,
) -> ScalingReport:
    """Per-q log-log OLS slopes and the zero-intercept monofractal fit.

    Cells with ``m == 0`` are dropped with a warning. Raises
    :class:`DegenerateScalingError` when some ``q`` keeps fewer than three cells.
    """
    q = np.asarray(q_grid, dtype=float)
    deltas = np.asarray(delta_grid, dtype=int)
    if len(q) < 2 or len(deltas) < 3:
        raise ValueError("need at least 2 q values and 3 deltas")
    table = structure_table(series, q, deltas)

    excluded = [(float(q[i]), int(deltas[j])) for i, j in zip(*np.nonzero(table <= 0))]
    if excluded:
        warnings.warn(f"{len(excluded)} structure-function cells are zero and were excluded", stacklevel=2)

    log_d = np.log(deltas.astype(float))
    zeta = np.empty(len(q))
    zeta_se = np.empty(len(q))
    log_cq = np.empty(len(q))
    r2 = np.empty(len(q))
    for i in range(len(q)):
        keep = table[i] > 0
        if keep.sum() < 3:
            raise DegenerateScalingError(
                f"q={q[i]}: only {int(keep.sum())} nonzero cells, need 3", q, deltas, table
            )
        zeta[i], zeta_se[i], log_cq[i], r2[i] = _ols(log_d[keep], np.log(table[i, keep]))

    hurst = float(np.dot(q, zeta) / np.dot(q, q))
    resid = zeta - hurst * q
    hurst_se = float(np.sqrt(np.sum(resid**2) / (len(q) - 1) / np.dot(q, q)))
    return ScalingReport(q, deltas, table, zeta, zeta_se, log_cq, r2, hurst, hurst_se, excluded)


@dataclass
class IncrementDiagnostics:
    delta: int
    n_increments: int
    mean: float
    std: float
    skewness: float
    excess_kurtosis: float
    bin_edges: np.ndarray
    density: np.ndarray
    curve_x: np.ndarray
    gaussian_fit_pdf: np.ndarray
    fbm_pdf: np.ndarray
    fbm_hurst: float
    fbm_nu: float
    fbm_std: float

    def to_dict(self) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, np.ndarray):
                d[k] = v.tolist()
        return d


def increment_diagnostics(
    series: VolSeries,
    delta: int,
    *,
    bins: int | str = "fd",
    hurst: float | None = None,
    nu: float | None = None,
    n_curve: int = 200,
) -> IncrementDiagnostics:
    """Moments and histogram of lag-``delta`` log increments, with two Gaussian overlays.

    The first overlay is the moment-matched Gaussian. The second is the law of
    fBm increments, ``N(0, nu^2 delta^(2H))``. When ``hurst`` is not given it is
    estimated with :func:`fit_scaling`; when ``nu`` is not given, ``log nu^2`` is
    the mean of ``log m(2, d) - 2H log d`` over the default lags.
    """
    inc = _log_increments(series, delta)
    if len(inc) < 30:
        raise ValueError(f"only {len(inc)} increments at delta={delta}; need at least 30")
    std = float(np.std(inc, ddof=1))
    if std == 0:
        raise ValueError("increments are all equal; diagnostics are undefined")

    if hurst is None or nu is None:
        lags = [d for d in DEFAULT_DELTA_GRID if d < len(series) - 1]
        if hurst is None:
            hurst = fit_scaling(series, DEFAULT_Q_GRID, lags).hurst_hat
        if nu is None:
            m2 = structure_table(series, [2.0], lags)[0]
            nu = float(np.sqrt(np.exp(np.mean(np.log(m2) - 2 * hurst * np.log(lags)))))
    fbm_std = nu * delta**hurst

    density, edges = np.histogram(inc, bins=bins, density=True)
    x = np.linspace(edges[0], edges[-1], n_curve)
    mean = float(np.mean(inc))
    return IncrementDiagnostics(
        delta=int(delta),
        n_increments=len(inc),
        mean=mean,
        std=std,
        skewness=float(stats.skew(inc)),
        excess_kurtosis=float(stats.kurtosis(inc, fisher=True)),
        bin_edges=edges,
        density=density,
        curve_x=x,
        gaussian_fit_pdf=stats.norm.pdf(x, mean, std),
        fbm_pdf=stats.norm.pdf(x, 0.0, fbm_std),
        fbm_hurst=float(hurst),
        fbm_nu=float(nu),
        fbm_std=float(fbm_std),
    )


def _date_key(label: str) -> int | str:
    # Integer day indices order numerically; anything else (ISO dates) as text.
    try:
        return int(label)
    except ValueError:
        return label


def read_series_csv(file: str | Path) -> VolSeries:
    """Read a ``date,value`` CSV. Errors name the offending line."""
    dates, keys, values = [], [], []
    with open(file, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header[:2]] != ["date", "value"]:
            raise SeriesError("missing or invalid header, expected 'date,value'", line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise SeriesError("expected two columns", line=lineno)
            try:
                v = float(row[1])
            except ValueError:
                raise SeriesError(f"cannot parse value {row[1]!r}", line=lineno) from None
            if not (math.isfinite(v) and v > 0):
                raise SeriesError(f"value must be strictly positive, got {row[1]}", line=lineno)
            d = row[0].strip()
            key = _date_key(d)
            if keys and (type(key) is not type(keys[-1]) or key <= keys[-1]):
                raise SeriesError(f"date {d!r} is not after {dates[-1]!r}", line=lineno)
            keys.append(key)
            dates.append(d)
            values.append(v)
    if len(values) < 2:
        raise SeriesError("series needs at least two observations")
    if all(isinstance(k, int) for k in keys):
        return VolSeries(np.array(keys), np.array(values))
    return VolSeries(np.array(dates), np.array(values))


def write_series_csv(series: VolSeries, file: str | Path) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["date", "value"])
        for d, v in zip(series.dates, series.values):
            w.writerow([d if isinstance(d, str) else (d.item() if hasattr(d, "item") else d), repr(float(v))])
