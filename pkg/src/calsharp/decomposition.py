"""Calibration / sharpness-gap decomposition at confidence resolution.

The total expected divergence from one-hot labels splits into the
confidence calibration error (plugin estimate) and a sharpness gap. Because
one-hot labels stand in for the unknown conditional label distribution, the
reported gap includes the irreducible loss; this is shared by all models on
the same data and does not affect rankings.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .bregman import BregmanSpec, get_spec, pointwise_label_divergence
from .data import PredictionSet, confidence_view
from .kernelreg import (
    DEFAULT_GRID,
    EstimateWithSpread,
    KernelSpec,
    kde,
    nw_regress,
    subsample_indices,
)
from .metrics import KL_CLAMP, SUBSAMPLE_CAP, SUBSAMPLE_REPS, plugin_calibration_error


def _nan_to_none(arr) -> list:
    return [None if not np.isfinite(v) else float(v) for v in np.asarray(arr, dtype=np.float64)]


@dataclass(frozen=True, eq=False)
class CurveEstimate:
    grid: np.ndarray
    cal_curve: np.ndarray
    density: np.ndarray
    cond_div: np.ndarray
    rho: np.ndarray
    config: dict = field(default_factory=dict)

    @property
    def rho_clamped(self) -> np.ndarray:
        return np.maximum(self.rho, 0.0)

    @property
    def masked(self) -> np.ndarray:
        """Grid points where a regression was undefined."""
        return np.isnan(self.cal_curve) | np.isnan(self.cond_div)

    def to_dict(self) -> dict:
        return {
            "grid": _nan_to_none(self.grid),
            "cal_curve": _nan_to_none(self.cal_curve),
            "density": _nan_to_none(self.density),
            "cond_div": _nan_to_none(self.cond_div),
            "rho": _nan_to_none(self.rho),
            "rho_clamped": _nan_to_none(self.rho_clamped),
            "config": dict(self.config),
        }


def label_divergences(ps: PredictionSet, spec: BregmanSpec, delta: float = KL_CLAMP) -> np.ndarray:
    """Per-sample divergence from the one-hot label, finite for KL via clamping."""
    if spec.name == "kl":
        p = ps.probs[np.arange(ps.n), ps.labels]
        return -np.log(np.maximum(p, delta))
    return pointwise_label_divergence(spec, ps.labels, ps.probs)


def _curve_components(conf, hit, div, ks, grid, reflect):
    cal = nw_regress(conf, hit, ks, grid, reflect=reflect)
    cond = nw_regress(conf, div, ks, grid, reflect=reflect)
    dens = kde(conf, ks, grid)
    return cal, cond, dens


def pointwise_sharpness_gap(
    ps: PredictionSet,
    spec: BregmanSpec | str,
    ks: KernelSpec = KernelSpec(),
    grid=DEFAULT_GRID,
    pred=None,
    reflect: bool = False,
    cap: int | None = SUBSAMPLE_CAP,
    reps: int = SUBSAMPLE_REPS,
    seed: int = 0,
    delta: float = KL_CLAMP,
) -> CurveEstimate:
    """Kernel estimates of the calibration curve, density, conditional divergence and rho.

    ``rho(p) = E[d(e_Y, g) | h = p] - d1(E[hit | h = p], p)``. Sets larger
    than ``cap`` are estimated by averaging each component over ``reps``
    seeded subsamples. Undefined regressions stay ``nan`` in the curve.
    """
    spec = get_spec(spec)
    grid = np.asarray(grid, dtype=np.float64)
    view = confidence_view(ps, pred)
    div = label_divergences(ps, spec, delta)
    if cap is None or ps.n <= cap:
        cal, cond, dens = _curve_components(view.conf, view.hit, div, ks, grid, reflect)
        used = 1
    else:
        parts = [
            _curve_components(view.conf[idx], view.hit[idx], div[idx], ks, grid, reflect)
            for idx in subsample_indices(ps.n, cap, reps, seed)
        ]
        with warnings.catch_warnings():
            # all-nan columns (masked in every subsample) stay nan
            warnings.simplefilter("ignore", RuntimeWarning)
            cal, cond, dens = (np.nanmean(np.stack(c), axis=0) for c in zip(*parts))
        used = reps
    p = grid
    c = cal
    if spec.name == "kl":
        p = np.clip(p, delta, 1.0 - delta)
        c = np.clip(c, delta, 1.0 - delta)
    rho = cond - spec.div1(c, p)
    config = {
        "divergence": spec.name,
        "kernel": ks.to_dict(),
        "reflect_regression": reflect,
        "subsample_reps": used,
        "subsample_cap": cap,
        "seed": seed,
    }
    return CurveEstimate(grid, cal, dens, cond, rho, config)


@dataclass(frozen=True)
class DecompositionReport:
    total: EstimateWithSpread
    total_direct: float
    cal: EstimateWithSpread
    divergence: str
    kernel: KernelSpec

    @property
    def sharp_gap(self) -> float:
        return self.total.mean - self.cal.mean

    def to_dict(self) -> dict:
        return {
            "total": self.total.to_dict(),
            "total_direct": self.total_direct,
            "cal": self.cal.to_dict(),
            "sharp_gap": self.sharp_gap,
            "divergence": self.divergence,
            "kernel": self.kernel.to_dict(),
        }


def decomposition_report(
    ps: PredictionSet,
    spec: BregmanSpec | str,
    ks: KernelSpec = KernelSpec(),
    pred=None,
    cap: int | None = SUBSAMPLE_CAP,
    reps: int = SUBSAMPLE_REPS,
    seed: int = 0,
) -> DecompositionReport:
    """Total divergence, plugin calibration error and their difference.

    When subsampling kicks in, the total is averaged over the same subsamples
    as the calibration error, so the gap is a difference of matched means.
    """
    spec = get_spec(spec)
    view = confidence_view(ps, pred)
    div = pointwise_label_divergence(spec, ps.labels, ps.probs)
    direct = float(np.mean(div))
    cal = plugin_calibration_error(view, spec, ks, cap=cap, reps=reps, seed=seed)
    if cap is None or ps.n <= cap:
        total = EstimateWithSpread(direct, 0.0, 1)
    else:
        vals = np.array([div[idx].mean() for idx in subsample_indices(ps.n, cap, reps, seed)])
        std = float(vals.std(ddof=1)) if reps > 1 else 0.0
        total = EstimateWithSpread(float(vals.mean()), std, reps)
    return DecompositionReport(total, direct, cal, spec.name, ks)
