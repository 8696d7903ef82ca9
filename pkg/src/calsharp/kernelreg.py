"""Kernels, Nadaraya-Watson regression and boundary-reflected density estimates.

All estimators use the scaled kernel ``K_s(u) = K(u / s) / s``. Regression
returns ``nan`` at queries with zero total kernel mass (possible only with a
compactly supported kernel); callers decide whether that is an error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable

import numpy as np
from scipy.signal import fftconvolve

from .errors import ValidationError

_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)

DEFAULT_GRID = np.linspace(0.0, 1.0, 201)
DEFAULT_GRID.flags.writeable = False

# number of kernel evaluations held in memory at once
_CHUNK = 2_000_000


@dataclass(frozen=True)
class KernelSpec:
    family: str = "gaussian"
    bandwidth: float = 0.05

    def __post_init__(self):
        if self.family not in ("gaussian", "epanechnikov"):
            raise ValidationError(f"unknown kernel family {self.family!r}")
        if not (self.bandwidth > 0 and np.isfinite(self.bandwidth)):
            raise ValidationError("bandwidth must be positive")

    @property
    def support(self) -> float:
        """Half-width in units of ``u`` beyond which ``K`` is zero (or negligible)."""
        return 1.0 if self.family == "epanechnikov" else np.inf

    def to_dict(self) -> dict:
        return {"family": self.family, "bandwidth": self.bandwidth}


@dataclass(frozen=True)
class EstimateWithSpread:
    mean: float
    std: float = 0.0
    reps: int = 1

    def to_dict(self) -> dict:
        return {"mean": self.mean, "std": self.std, "reps": self.reps}


def kernel_eval(ks: KernelSpec, u):
    """Unscaled kernel ``K(u)``."""
    u = np.asarray(u, dtype=np.float64)
    if ks.family == "gaussian":
        out = _INV_SQRT_2PI * np.exp(-0.5 * u * u)
    else:
        out = np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)
    return float(out) if out.ndim == 0 else out


def _scaled(ks: KernelSpec, diff):
    return kernel_eval(ks, diff / ks.bandwidth) / ks.bandwidth


def _as_1d(x, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 0:
        x = x[None]
    if x.ndim != 1:
        raise ValidationError(f"{name} must be 1-D")
    if not np.all(np.isfinite(x)):
        raise ValidationError(f"{name} must be finite")
    return x


def _reflected(xs: np.ndarray) -> np.ndarray:
    return np.concatenate([xs, -xs, 2.0 - xs])


def _weighted_sums(xs, ys, ks, queries):
    """Return ``(sum_i ys_i K_s(q - x_i), sum_i K_s(q - x_i))`` for each query."""
    num = np.empty(queries.shape[0])
    den = np.empty(queries.shape[0])
    step = max(1, _CHUNK // max(1, xs.shape[0]))
    for start in range(0, queries.shape[0], step):
        q = queries[start:start + step]
        w = _scaled(ks, q[:, None] - xs[None, :])
        den[start:start + step] = w.sum(axis=1)
        if ys is not None:
            num[start:start + step] = w @ ys
    return num, den


def nw_regress(xs, ys, ks: KernelSpec, queries, reflect: bool = False) -> np.ndarray:
    """Nadaraya-Watson estimate of ``E[y | x = q]`` at each query.

    With ``reflect=True`` every sample is mirrored across 0 and 1 (keeping its
    response) before weighting. Queries with zero kernel mass yield ``nan``.
    """
    xs = _as_1d(xs, "xs")
    ys = _as_1d(ys, "ys")
    queries = _as_1d(queries, "queries")
    if xs.shape != ys.shape or xs.size < 1:
        raise ValidationError("xs and ys must be nonempty and of equal length")
    if reflect:
        xs, ys = _reflected(xs), np.tile(ys, 3)
    num, den = _weighted_sums(xs, ys, ks, queries)
    out = np.full(queries.shape[0], np.nan)
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    if ok.any():
        # guard against last-ulp excursions outside the data range
        out[ok] = np.clip(out[ok], ys.min(), ys.max())
    return out


def nw_regress_binned(xs, ys, ks: KernelSpec, queries, grid_size: int = 1 << 14) -> np.ndarray:
    """Fast approximation of :func:`nw_regress` for large samples.

    Samples are linearly binned onto a uniform grid spanning the data and the
    queries, numerator and denominator are obtained by FFT convolution with
    the sampled kernel, and both are linearly interpolated to the queries.
    The approximation error is second order in the grid spacing relative to
    the bandwidth.
    """
    xs = _as_1d(xs, "xs")
    ys = _as_1d(ys, "ys")
    queries = _as_1d(queries, "queries")
    if xs.shape != ys.shape or xs.size < 1:
        raise ValidationError("xs and ys must be nonempty and of equal length")
    lo = min(xs.min(), queries.min())
    hi = max(xs.max(), queries.max())
    if hi - lo <= 0:
        return nw_regress(xs, ys, ks, queries)
    delta = (hi - lo) / (grid_size - 1)
    pos = (xs - lo) / delta
    left = np.clip(np.floor(pos).astype(np.int64), 0, grid_size - 2)
    frac = pos - left
    counts = np.zeros(grid_size)
    sums = np.zeros(grid_size)
    np.add.at(counts, left, 1.0 - frac)
    np.add.at(counts, left + 1, frac)
    np.add.at(sums, left, ys * (1.0 - frac))
    np.add.at(sums, left + 1, ys * frac)
    reach = ks.support * ks.bandwidth if np.isfinite(ks.support) else 12.0 * ks.bandwidth
    half = min(grid_size - 1, int(np.ceil(reach / delta)))
    taps = _scaled(ks, np.arange(-half, half + 1) * delta)
    den = fftconvolve(counts, taps, mode="same")
    num = fftconvolve(sums, taps, mode="same")
    grid = lo + delta * np.arange(grid_size)
    den_q = np.interp(queries, grid, den)
    num_q = np.interp(queries, grid, num)
    out = np.full(queries.shape[0], np.nan)
    # FFT round-off leaves tiny nonzero mass where the exact sum is zero
    ok = den_q > 1e-12 * max(den.max(), 1e-300)
    out[ok] = np.clip(num_q[ok] / den_q[ok], ys.min(), ys.max())
    return out


def kde(xs, ks: KernelSpec, queries, reflect: bool = True) -> np.ndarray:
    """Kernel density estimate on [0, 1], reflected across both endpoints."""
    xs = _as_1d(xs, "xs")
    queries = _as_1d(queries, "queries")
    if xs.size < 1:
        raise ValidationError("kde needs at least one sample")
    n = xs.size
    if reflect:
        xs = _reflected(xs)
    _, den = _weighted_sums(xs, None, ks, queries)
    return den / n


def _take(data: Any, idx: np.ndarray):
    if hasattr(data, "subset"):
        return data.subset(idx)
    return data[idx]


def subsample_indices(n: int, cap: int, reps: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    return [np.sort(rng.choice(n, size=cap, replace=False)) for _ in range(reps)]


def subsample_mean_estimate(
    estimator: Callable[[Any], float],
    data: Any,
    cap: int | None = 5000,
    reps: int = 10,
    seed: int = 0,
) -> EstimateWithSpread:
    """Average ``estimator`` over ``reps`` seeded subsamples of size ``cap``.

    Data no larger than ``cap`` (or ``cap=None``) is estimated directly. The
    spread is the sample standard deviation across subsamples.
    """
    n = len(data)
    if cap is None or n <= cap:
        return EstimateWithSpread(float(estimator(data)), 0.0, 1)
    if cap < 1 or reps < 1:
        raise ValidationError("cap and reps must be positive")
    values = np.array(
        [float(estimator(_take(data, idx))) for idx in subsample_indices(n, cap, reps, seed)]
    )
    std = float(values.std(ddof=1)) if reps > 1 else 0.0
    return EstimateWithSpread(float(values.mean()), std, reps)
