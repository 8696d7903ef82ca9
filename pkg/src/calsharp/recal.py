"""Post-hoc recalibration: temperature scaling, histogram binning, isotonic
regression and mean-replacement recalibration (MRR).

Each recalibrator is fitted on a calibration split and applied to another
set, producing a :class:`RecalibratedPredictionSet` that records the
classification function ``stored_pred`` alongside the emitted probabilities.
Histogram binning and isotonic regression are one-vs-rest followed by row
renormalization, so they may change the argmax.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .data import PredictionSet, confidence_view
from .errors import ValidationError

T_MIN, T_MAX = 0.01, 100.0
_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass(frozen=True, eq=False)
class RecalibratedPredictionSet:
    predictions: PredictionSet
    stored_pred: np.ndarray

    @property
    def probs(self) -> np.ndarray:
        return self.predictions.probs

    @property
    def labels(self) -> np.ndarray:
        return self.predictions.labels

    def confidence_view(self):
        return confidence_view(self.predictions, self.stored_pred)


def _logits_of(ps: PredictionSet) -> np.ndarray:
    if ps.logits is not None:
        return np.asarray(ps.logits)
    with np.errstate(divide="ignore"):
        return np.log(ps.probs)


def _tempered_probs(logits: np.ndarray, t: float) -> np.ndarray:
    # tolerates -inf logits (zero probabilities from log(probs))
    z = logits / t
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _tempered_nll(logits: np.ndarray, labels: np.ndarray, t: float) -> float:
    z = logits / t
    zmax = z.max(axis=1)
    with np.errstate(invalid="ignore"):
        shifted = z - zmax[:, None]
        lse = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(labels.size), labels]
    return float(np.mean(lse - picked))


def golden_section_min(f, lo: float, hi: float, tol: float = 1e-6, max_iter: int = 500) -> float:
    """Minimize a unimodal ``f`` on ``[lo, hi]``; returns the final bracket midpoint."""
    a, b = lo, hi
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if b - a <= tol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = f(d)
    return (a + b) / 2.0


@dataclass(frozen=True)
class TemperatureScaler:
    temperature: float

    variant = "temperature"

    def __post_init__(self):
        if not T_MIN <= self.temperature <= T_MAX:
            raise ValidationError(f"temperature must lie in [{T_MIN}, {T_MAX}]")

    @property
    def k(self) -> int | None:
        return None

    def apply(self, ps: PredictionSet) -> RecalibratedPredictionSet:
        base_pred = np.argmax(ps.probs, axis=1)
        probs = _tempered_probs(_logits_of(ps), self.temperature)
        return RecalibratedPredictionSet(PredictionSet(probs, ps.labels), base_pred)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "temperature": self.temperature}


def fit_temperature(calib: PredictionSet, tol: float = 1e-6) -> TemperatureScaler:
    """Temperature minimizing calibration-set NLL, by golden-section on ``log T``."""
    logits = _logits_of(calib)
    onehot = np.isinf(logits).sum(axis=1) == calib.k - 1
    if np.all(onehot):
        warnings.warn("calibration probabilities are all one-hot; pinning T to T_min", RuntimeWarning)
        return TemperatureScaler(T_MIN)
    log_t = golden_section_min(
        lambda s: _tempered_nll(logits, calib.labels, math.exp(s)),
        math.log(T_MIN),
        math.log(T_MAX),
        tol,
    )
    return TemperatureScaler(min(T_MAX, max(T_MIN, math.exp(log_t))))


def _renormalize(values: np.ndarray) -> np.ndarray:
    s = values.sum(axis=1, keepdims=True)
    # a row mapped to all zeros carries no information; emit uniform
    k = values.shape[1]
    return np.where(s > 0, values / np.where(s > 0, s, 1.0), 1.0 / k)


@dataclass(frozen=True, eq=False)
class HistogramBinner:
    edges: np.ndarray
    values: np.ndarray

    variant = "histogram"

    @property
    def bins(self) -> int:
        return self.values.shape[1]

    @property
    def k(self) -> int:
        return self.values.shape[0]

    def apply(self, ps: PredictionSet) -> RecalibratedPredictionSet:
        _check_k(self.k, ps)
        idx = np.minimum(np.floor(ps.probs * self.bins).astype(np.int64), self.bins - 1)
        raw = np.take_along_axis(self.values, idx.T, axis=1).T
        probs = _renormalize(raw)
        return RecalibratedPredictionSet(PredictionSet(probs, ps.labels), np.argmax(probs, axis=1))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "edges": self.edges.tolist(),
            "values": self.values.tolist(),
        }


def fit_histogram_binning(calib: PredictionSet, bins: int = 15) -> HistogramBinner:
    """One-vs-rest uniform-width binning; empty bins map to 0."""
    if bins < 1:
        raise ValidationError("bins must be positive")
    idx = np.minimum(np.floor(calib.probs * bins).astype(np.int64), bins - 1)
    values = np.zeros((calib.k, bins))
    for j in range(calib.k):
        count = np.bincount(idx[:, j], minlength=bins)
        pos = np.bincount(idx[:, j], weights=(calib.labels == j).astype(float), minlength=bins)
        values[j] = np.where(count > 0, pos / np.maximum(count, 1), 0.0)
    return HistogramBinner(np.linspace(0.0, 1.0, bins + 1), values)


def pava(ys, weights=None) -> np.ndarray:
    """Weighted least-squares nondecreasing fit by pool-adjacent-violators."""
    ys = np.asarray(ys, dtype=np.float64)
    n = ys.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    if w.shape != ys.shape or np.any(w <= 0):
        raise ValidationError("weights must be positive and match ys")
    # each block keeps (weighted sum, total weight, length)
    sums, wts, lens = [], [], []
    for y, wi in zip(ys, w):
        sums.append(y * wi)
        wts.append(wi)
        lens.append(1)
        while len(sums) > 1 and sums[-2] / wts[-2] > sums[-1] / wts[-1]:
            s, ww, ln = sums.pop(), wts.pop(), lens.pop()
            sums[-1] += s
            wts[-1] += ww
            lens[-1] += ln
    return np.repeat([s / ww for s, ww in zip(sums, wts)], lens)


@dataclass(frozen=True, eq=False)
class IsotonicCalibrator:
    breakpoints: tuple[np.ndarray, ...]
    fitted: tuple[np.ndarray, ...]

    variant = "isotonic"

    @property
    def k(self) -> int:
        return len(self.breakpoints)

    def apply(self, ps: PredictionSet) -> RecalibratedPredictionSet:
        _check_k(self.k, ps)
        raw = np.empty_like(ps.probs)
        for j in range(self.k):
            raw[:, j] = step_lookup(self.breakpoints[j], self.fitted[j], ps.probs[:, j])
        probs = _renormalize(raw)
        return RecalibratedPredictionSet(PredictionSet(probs, ps.labels), np.argmax(probs, axis=1))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "breakpoints": [b.tolist() for b in self.breakpoints],
            "fitted": [f.tolist() for f in self.fitted],
        }


def step_lookup(breakpoints: np.ndarray, fitted: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Left-constant step function: value of the last breakpoint at or below ``x``.

    Queries below the first breakpoint take the first value.
    """
    pos = np.searchsorted(breakpoints, x, side="right") - 1
    return fitted[np.clip(pos, 0, breakpoints.size - 1)]


def isotonic_fit_1d(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Isotonic regression of ``y`` on ``x``; tied ``x`` are pooled first.

    Returns the sorted unique ``x`` and the nondecreasing fitted values.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ux, inv, counts = np.unique(x, return_inverse=True, return_counts=True)
    means = np.bincount(inv, weights=y) / counts
    return ux, pava(means, counts.astype(np.float64))


def fit_isotonic(calib: PredictionSet) -> IsotonicCalibrator:
    bps, fits = [], []
    for j in range(calib.k):
        ux, fx = isotonic_fit_1d(calib.probs[:, j], (calib.labels == j).astype(np.float64))
        bps.append(ux)
        fits.append(np.clip(fx, 0.0, 1.0))
    return IsotonicCalibrator(tuple(bps), tuple(fits))


@dataclass(frozen=True)
class MeanReplacement:
    """Every confidence becomes the calibration-split accuracy ``h_bar``.

    The predicted class is kept; the remaining mass is spread uniformly.
    """

    h_bar: float

    variant = "mrr"

    def __post_init__(self):
        if not 0.0 <= self.h_bar <= 1.0:
            raise ValidationError("h_bar must lie in [0, 1]")

    @property
    def k(self) -> int | None:
        return None

    def apply(self, ps: PredictionSet) -> RecalibratedPredictionSet:
        pred = np.argmax(ps.probs, axis=1)
        probs = np.full(ps.probs.shape, (1.0 - self.h_bar) / (ps.k - 1))
        probs[np.arange(ps.n), pred] = self.h_bar
        return RecalibratedPredictionSet(PredictionSet(probs, ps.labels), pred)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "h_bar": self.h_bar}


def fit_mrr(calib: PredictionSet) -> MeanReplacement:
    return MeanReplacement(float(confidence_view(calib).hit.mean()))


Recalibrator = TemperatureScaler | HistogramBinner | IsotonicCalibrator | MeanReplacement


def _check_k(k: int | None, ps: PredictionSet) -> None:
    if k is not None and ps.k != k:
        raise ValidationError(f"recalibrator fitted for k={k}, got k={ps.k}")


def apply(r: Recalibrator, ps: PredictionSet) -> RecalibratedPredictionSet:
    return r.apply(ps)


def identity(ps: PredictionSet) -> RecalibratedPredictionSet:
    return RecalibratedPredictionSet(ps, np.argmax(ps.probs, axis=1))


def from_dict(d: dict) -> Recalibrator:
    variant = d.get("variant")
    if variant == "temperature":
        return TemperatureScaler(float(d["temperature"]))
    if variant == "histogram":
        return HistogramBinner(np.asarray(d["edges"], dtype=float), np.asarray(d["values"], dtype=float))
    if variant == "isotonic":
        return IsotonicCalibrator(
            tuple(np.asarray(b, dtype=float) for b in d["breakpoints"]),
            tuple(np.asarray(f, dtype=float) for f in d["fitted"]),
        )
    if variant == "mrr":
        return MeanReplacement(float(d["h_bar"]))
    raise ValidationError(f"unknown recalibrator variant {variant!r}")


FITTERS = {
    "ts": fit_temperature,
    "hb": fit_histogram_binning,
    "ir": fit_isotonic,
    "mrr": fit_mrr,
}
