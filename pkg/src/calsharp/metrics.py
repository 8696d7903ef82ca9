"""Scalar calibration and generalization metrics."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .bregman import BRIER, KL, BregmanSpec, get_spec, pointwise_label_divergence
from .data import ConfidenceView, PredictionSet, confidence_view
from .errors import UndefinedEstimateError, ValidationError
from .kernelreg import (
    DEFAULT_GRID,
    EstimateWithSpread,
    KernelSpec,
    kde,
    nw_regress,
    nw_regress_binned,
    subsample_mean_estimate,
)

KL_CLAMP = 1e-7
SUBSAMPLE_CAP = 5000
SUBSAMPLE_REPS = 10


def accuracy(view: ConfidenceView) -> float:
    return float(view.hit.mean())


def uniform_bin_index(conf: np.ndarray, bins: int) -> np.ndarray:
    """Bin ``b`` covers ``[b/B, (b+1)/B)``; the last bin is closed at 1."""
    return np.minimum(np.floor(conf * bins).astype(np.int64), bins - 1)


def binned_ece(view: ConfidenceView, bins: int = 15) -> float:
    if bins < 1:
        raise ValidationError("bins must be positive")
    idx = uniform_bin_index(view.conf, bins)
    count = np.bincount(idx, minlength=bins)
    gap = np.bincount(idx, weights=view.hit - view.conf, minlength=bins)
    # n_b/n * |acc_b - conf_b| == |sum_b (hit - conf)| / n
    return float(np.abs(gap).sum() / view.n)


def equal_mass_bin_index(conf: np.ndarray, bins: int) -> np.ndarray:
    """Quantile bins from confidence order statistics.

    Sorted confidences are cut into ``bins`` contiguous chunks of (nearly)
    equal size; a chunk's upper edge is its largest confidence, and values
    equal to an edge go to the lower bin.
    """
    order = np.sort(conf)
    sizes = np.full(bins, conf.size // bins)
    sizes[: conf.size % bins] += 1
    upper = order[np.cumsum(sizes) - 1]
    return np.searchsorted(upper[:-1], conf, side="left")


def ace(view: ConfidenceView, bins: int = 15) -> float:
    """Adaptive calibration error: unweighted mean gap over equal-mass bins."""
    if view.n < bins:
        raise ValidationError(f"ACE needs at least {bins} samples, got {view.n}")
    idx = equal_mass_bin_index(view.conf, bins)
    count = np.bincount(idx, minlength=bins)
    gap = np.bincount(idx, weights=view.hit - view.conf, minlength=bins)
    used = count > 0
    return float(np.mean(np.abs(gap[used]) / count[used]))


def _trapezoid(y: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum((y[1:] + y[:-1]) * np.diff(x)) / 2.0)


def smoothed_ece(view: ConfidenceView, ks: KernelSpec, grid=DEFAULT_GRID) -> float:
    """Kernel-smoothed ECE ``int |m(p) - p| density(p) dp`` at a fixed bandwidth."""
    grid = np.asarray(grid, dtype=np.float64)
    m = nw_regress(view.conf, view.hit, ks, grid)
    dens = kde(view.conf, ks, grid)
    bad = np.isnan(m) & (dens > 0)
    if bad.any():
        raise UndefinedEstimateError(
            f"calibration curve undefined at {int(bad.sum())} grid points with positive density"
        )
    integrand = np.where(dens > 0, np.abs(np.nan_to_num(m) - grid) * dens, 0.0)
    return _trapezoid(integrand, grid)


def nll(ps: PredictionSet) -> float:
    """Mean cross-entropy in nats; ``inf`` if a true class got probability 0."""
    return float(np.mean(pointwise_label_divergence(KL, ps.labels, ps.probs)))


def brier(ps: PredictionSet) -> float:
    return float(np.mean(pointwise_label_divergence(BRIER, ps.labels, ps.probs)))


def _plugin_direct(view: ConfidenceView, spec: BregmanSpec, ks: KernelSpec,
                   method: str, delta: float) -> float:
    h = view.conf
    regress = nw_regress_binned if method == "binned" else nw_regress
    m = regress(h, view.hit, ks, h)
    if np.isnan(m).any():
        raise UndefinedEstimateError("kernel regression undefined at a sample confidence")
    if spec.name == "kl":
        h = np.clip(h, delta, 1.0 - delta)
        m = np.clip(m, delta, 1.0 - delta)
    terms = spec.phi1(m) - spec.phi1(h) - spec.dphi1(h) * (view.hit - h)
    return float(terms.mean())


def plugin_calibration_error(
    view: ConfidenceView,
    spec: BregmanSpec | str = BRIER,
    ks: KernelSpec = KernelSpec(),
    cap: int | None = SUBSAMPLE_CAP,
    reps: int = SUBSAMPLE_REPS,
    seed: int = 0,
    method: str = "exact",
    delta: float = KL_CLAMP,
) -> EstimateWithSpread:
    """Plugin estimate of the confidence calibration error for ``spec``.

    The sample average of ``phi1(m(h)) - phi1(h) - phi1'(h) (hit - h)`` with
    ``m`` the kernel regression of correctness on confidence, evaluated at
    each sample including itself. Views larger than ``cap`` are estimated as
    the mean over ``reps`` subsamples; pass ``cap=None`` to disable.
    ``method="binned"`` swaps in the FFT approximation for very large views.
    """
    spec = get_spec(spec)
    if view.n < 2:
        raise ValidationError("plugin estimator needs at least 2 samples")
    if method not in ("exact", "binned"):
        raise ValidationError(f"unknown method {method!r}")
    return subsample_mean_estimate(
        lambda v: _plugin_direct(v, spec, ks, method, delta), view, cap, reps, seed
    )


@dataclass
class MetricsConfig:
    bins: int = 15
    kernel: KernelSpec = field(default_factory=KernelSpec)
    divergence: str = "brier"
    seed: int = 0
    grid: np.ndarray = field(default_factory=lambda: DEFAULT_GRID)


@dataclass
class MetricsTable:
    accuracy: float
    ece_binned: float
    ace: float
    smoothed_ece: float
    nll: float
    brier: float
    plugin_cal_error: float
    plugin_cal_error_std: float = 0.0
    plugin_reps: int = 1
    total_divergence: float = float("nan")
    sharp_gap: float = float("nan")
    n: int = 0
    scale: int = 100
    ace_weighting: str = "unweighted"

    DISPLAY_COLUMNS = (
        ("accuracy", "Accuracy"),
        ("ece_binned", "ECE"),
        ("ace", "ACE"),
        ("smoothed_ece", "SmoothECE"),
        ("nll", "NLL"),
        ("brier", "Brier"),
        ("plugin_cal_error", "d_CAL"),
    )

    def to_dict(self) -> dict:
        return asdict(self)


def metrics_table(ps: PredictionSet, config: MetricsConfig | None = None, pred=None) -> MetricsTable:
    """All scalar metrics for ``ps`` with a shared binning/kernel configuration.

    ``pred`` overrides the argmax classification function (used for
    recalibrated sets whose stored predictions must be scored).
    """
    config = config or MetricsConfig()
    spec = get_spec(config.divergence)
    view = confidence_view(ps, pred)
    plug = plugin_calibration_error(view, spec, config.kernel, seed=config.seed)
    total = float(np.mean(pointwise_label_divergence(spec, ps.labels, ps.probs)))
    return MetricsTable(
        accuracy=accuracy(view),
        ece_binned=binned_ece(view, config.bins),
        ace=ace(view, config.bins),
        smoothed_ece=smoothed_ece(view, config.kernel, config.grid),
        nll=nll(ps),
        brier=brier(ps),
        plugin_cal_error=plug.mean,
        plugin_cal_error_std=plug.std,
        plugin_reps=plug.reps,
        total_divergence=total,
        sharp_gap=total - plug.mean,
        n=ps.n,
    )
