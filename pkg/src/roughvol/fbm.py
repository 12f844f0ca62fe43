"""
Exact fractional Brownian motion on an equidistant grid
=======================================================

The covariance of ``(W^H_{t_1}, ..., W^H_{t_n})`` with ``t_i = i * dt`` is
factorized once, ``Sigma = L L^T``, and a path is ``L X`` for a vector ``X`` of
independent standard Gaussians. Because ``L`` is lower-triangular, the values
after ``t_i`` split into a part fixed by ``X_1..X_i`` and a part driven by fresh
draws, which gives exact continuation of an observed path.

Time is measured in days.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import lapack

from .rng import make_rng

__all__ = [
    "CholeskyError",
    "FbmGrid",
    "FbmPath",
    "build_grid",
    "fbm_covariance",
    "sample_path",
    "sample_paths",
    "continue_path",
    "continue_paths",
    "conditional_moments",
    "write_path_csv",
]

DEFAULT_MAX_N = 4096


class CholeskyError(np.linalg.LinAlgError):
    """Raised when the fBm covariance is not numerically positive definite."""

    def __init__(self, pivot: int, hurst: float, n: int):
        self.pivot = pivot
        super().__init__(
            f"Cholesky factorization failed at pivot index {pivot} "
            f"(hurst={hurst}, n={n}); covariance is not numerically positive definite"
        )


def fbm_covariance(hurst: float, times: np.ndarray) -> np.ndarray:
    """Dense matrix ``0.5 * (t_i^2H + t_j^2H - |t_i - t_j|^2H)``."""
    t = np.asarray(times, dtype=float)
    p = 2.0 * hurst
    tp = t**p
    return 0.5 * (tp[:, None] + tp[None, :] - np.abs(t[:, None] - t[None, :]) ** p)


def _grid_covariance_fortran(hurst: float, n: int, dt: float) -> np.ndarray:
    # Built row-block by row-block into a Fortran array so LAPACK can factor in place.
    p = 2.0 * hurst
    tp = (dt * np.arange(1, n + 1)) ** p
    lag = (dt * np.arange(n)) ** p
    cov = np.empty((n, n), dtype=float, order="F")
    idx = np.arange(n)
    block = 512
    for start in range(0, n, block):
        stop = min(start + block, n)
        rows = idx[start:stop, None]
        cov[start:stop, :] = 0.5 * (tp[start:stop, None] + tp[None, :] - lag[np.abs(rows - idx[None, :])])
    return cov


@dataclass(frozen=True, eq=False)
class FbmGrid:
    """Grid ``t_i = i * dt`` (i = 1..n) with the Cholesky factor of the fBm covariance.

    ``chol`` is read-only, so a grid can be shared between workers.
    """

    hurst: float
    n: int
    dt: float
    chol: np.ndarray = field(repr=False)

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(1, self.n + 1)

    def covariance(self) -> np.ndarray:
        return fbm_covariance(self.hurst, self.times)


def build_grid(
    hurst: float,
    n: int,
    dt: float = 1.0,
    *,
    jitter: float = 0.0,
    max_n: int = DEFAULT_MAX_N,
) -> FbmGrid:
    """Factorize the fBm covariance on ``n`` equidistant points.

    Parameters
    ----------
    hurst : float
        Hurst parameter in (0, 1).
    n : int
        Number of grid points (``t_0 = 0`` is excluded).
    dt : float
        Time step in days.
    jitter : float
        Added to the diagonal before factorizing. Off by default; any positive
        value changes the simulated law.
    max_n : int
        Refuse grids larger than this (dense O(n^2) memory, O(n^3) time).
    """
    if not 0.0 < hurst < 1.0:
        raise ValueError(f"hurst must lie in (0, 1), got {hurst}")
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if jitter < 0:
        raise ValueError("jitter must be nonnegative")
    n = int(n)
    if n > max_n:
        raise ValueError(f"grid size {n} exceeds the configured cap {max_n}")

    cov = _grid_covariance_fortran(hurst, n, float(dt))
    if jitter:
        cov[np.diag_indices(n)] += jitter
    chol, info = lapack.dpotrf(cov, lower=1, clean=1, overwrite_a=1)
    if info > 0:
        raise CholeskyError(info - 1, hurst, n)
    if info < 0:  # pragma: no cover - argument error inside LAPACK
        raise RuntimeError(f"dpotrf returned info={info}")
    chol = np.ascontiguousarray(chol)
    chol.flags.writeable = False
    return FbmGrid(hurst=float(hurst), n=n, dt=float(dt), chol=chol)


@dataclass(frozen=True, eq=False)
class FbmPath:
    """A sampled path: ``values = chol @ innovations``."""

    grid: FbmGrid
    values: np.ndarray
    innovations: np.ndarray
    _det_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def deterministic_part(self, from_index: int, to_index: int) -> np.ndarray:
        """``sum_{p <= i} l_{jp} X_p`` for ``j = i+1..k``; cached per path."""
        key = (from_index, to_index)
        det = self._det_cache.get(key)
        if det is None:
            L = self.grid.chol
            det = L[from_index:to_index, :from_index] @ self.innovations[:from_index]
            det.flags.writeable = False
            self._det_cache[key] = det
        return det


def sample_path(grid: FbmGrid, rng_seed: int) -> FbmPath:
    x = make_rng(rng_seed).standard_normal(grid.n)
    return FbmPath(grid=grid, values=grid.chol @ x, innovations=x)


def sample_paths(grid: FbmGrid, n_paths: int, rng_seed: int) -> np.ndarray:
    """``n_paths`` independent paths as rows of an ``(n_paths, n)`` array."""
    x = make_rng(rng_seed).standard_normal((n_paths, grid.n))
    return x @ grid.chol.T


def _check_indices(grid: FbmGrid, from_index: int, to_index: int) -> None:
    if not (0 <= from_index < to_index <= grid.n):
        raise IndexError(
            f"need 0 <= from_index < to_index <= {grid.n}, got ({from_index}, {to_index})"
        )


def continue_path(
    path: FbmPath,
    from_index: int,
    to_index: int,
    rng_seed: int | None = None,
    *,
    innovations: np.ndarray | None = None,
) -> np.ndarray:
    """Values at ``t_{i+1}..t_k`` conditional on the first ``i`` innovations of ``path``.

    Fresh innovations come from ``rng_seed``, or are passed explicitly.
    """
    _check_indices(path.grid, from_index, to_index)
    if innovations is None:
        if rng_seed is None:
            raise ValueError("either rng_seed or innovations must be given")
        innovations = make_rng(rng_seed).standard_normal(to_index - from_index)
    innovations = np.asarray(innovations, dtype=float)
    if innovations.shape != (to_index - from_index,):
        raise ValueError("innovations must have length to_index - from_index")
    L = path.grid.chol
    block = L[from_index:to_index, from_index:to_index]
    return path.deterministic_part(from_index, to_index) + block @ innovations


def continue_paths(
    path: FbmPath,
    from_index: int,
    to_index: int,
    n_paths: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """``n_paths`` conditional continuations as rows of an ``(n_paths, k - i)`` array."""
    _check_indices(path.grid, from_index, to_index)
    L = path.grid.chol
    block = L[from_index:to_index, from_index:to_index]
    z = rng.standard_normal((n_paths, to_index - from_index))
    return path.deterministic_part(from_index, to_index) + z @ block.T


def conditional_moments(
    grid: FbmGrid, past_innovations: np.ndarray, from_index: int, to_index: int
) -> tuple[np.ndarray, np.ndarray]:
    """Exact conditional mean and covariance of the continuation, read off ``L``."""
    _check_indices(grid, from_index, to_index)
    L = grid.chol
    x = np.asarray(past_innovations, dtype=float)[:from_index]
    mean = L[from_index:to_index, :from_index] @ x
    block = L[from_index:to_index, from_index:to_index]
    return mean, block @ block.T


def write_path_csv(path: FbmPath, file: str | Path) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "t", "value"])
        for i, (t, v) in enumerate(zip(path.grid.times, path.values), start=1):
            w.writerow([i, repr(float(t)), repr(float(v))])
