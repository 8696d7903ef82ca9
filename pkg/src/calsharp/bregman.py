"""Bregman generators on the simplex and their one-dimensional counterparts.

Two generators are provided. ``BRIER`` uses the squared norm, whose
divergence is the squared Euclidean distance; ``KL`` uses negative entropy,
whose divergence is the KL divergence. Each carries a 1-D counterpart used
for top-label (confidence) calibration: ``x**2`` and the binary negative
entropy respectively.

Infinities are not clamped here; ``0 * log 0`` is taken as 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import rel_entr, xlogy

from .errors import ValidationError


@dataclass(frozen=True)
class BregmanSpec:
    name: str
    phi: Callable[[np.ndarray], np.ndarray]
    grad_phi: Callable[[np.ndarray], np.ndarray]
    phi1: Callable[[np.ndarray], np.ndarray]
    dphi1: Callable[[np.ndarray], np.ndarray]
    # closed forms of the induced divergences; see generic_divergence for
    # the definition they must agree with
    div: Callable[[np.ndarray, np.ndarray], np.ndarray]
    div1: Callable[[np.ndarray, np.ndarray], np.ndarray]


def _brier_div(x, y):
    return np.sum((x - y) ** 2, axis=-1)


def _kl_div(x, y):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.sum(rel_entr(x, y), axis=-1)


def _neg_entropy(x):
    return np.sum(xlogy(x, x), axis=-1)


def _neg_entropy_grad(x):
    with np.errstate(divide="ignore"):
        return np.log(x) + 1.0


def _binary_neg_entropy(a):
    return xlogy(a, a) + xlogy(1.0 - a, 1.0 - a)


def _logit(a):
    with np.errstate(divide="ignore"):
        return np.log(a) - np.log1p(-a)


def _kl_div1(a, b):
    with np.errstate(divide="ignore", invalid="ignore"):
        return rel_entr(a, b) + rel_entr(1.0 - a, 1.0 - b)


BRIER = BregmanSpec(
    name="brier",
    phi=lambda x: np.sum(x * x, axis=-1),
    grad_phi=lambda x: 2.0 * x,
    phi1=lambda a: a * a,
    dphi1=lambda a: 2.0 * a,
    div=_brier_div,
    div1=lambda a, b: (a - b) ** 2,
)

KL = BregmanSpec(
    name="kl",
    phi=_neg_entropy,
    grad_phi=_neg_entropy_grad,
    phi1=_binary_neg_entropy,
    dphi1=_logit,
    div=_kl_div,
    div1=_kl_div1,
)

SPECS = {"brier": BRIER, "kl": KL}


def get_spec(name: str | BregmanSpec) -> BregmanSpec:
    if isinstance(name, BregmanSpec):
        return name
    try:
        return SPECS[name]
    except KeyError:
        raise ValidationError(f"unknown divergence {name!r}; choose from {sorted(SPECS)}") from None


def generic_divergence(spec: BregmanSpec, x, y):
    """``phi(x) - phi(y) - <grad phi(y), x - y>`` evaluated literally.

    Only meaningful where ``phi`` and its gradient are finite; used to check
    the closed forms.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    return spec.phi(x) - spec.phi(y) - np.sum(spec.grad_phi(y) * (x - y), axis=-1)


def divergence(spec: BregmanSpec, x, y):
    """Bregman divergence between simplex points (broadcast over leading axes)."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = spec.div(x, y)
    return float(out) if np.ndim(out) == 0 else out


def divergence_1d(spec: BregmanSpec, a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    out = spec.div1(a, b)
    return float(out) if np.ndim(out) == 0 else out


def pointwise_label_divergence(spec: BregmanSpec, labels, probs):
    """Divergence of each prediction row from the one-hot encoding of its label.

    ``labels`` may be a scalar with a single row, or an ``(n,)`` array with an
    ``(n, k)`` array. For KL this is ``-log probs[label]`` (``inf`` at zero).
    """
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if np.any(labels < 0) or np.any(labels >= probs.shape[-1]):
        raise ValidationError("label out of range")
    onehot = np.zeros_like(probs)
    np.put_along_axis(onehot, labels[..., None], 1.0, axis=-1)
    return divergence(spec, onehot, probs)


def check_domination(spec: BregmanSpec, x, y) -> bool:
    """True when ``d(x, y)`` is at least every coordinate's 1-D divergence."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    full = spec.div(x, y)
    coord = np.max(spec.div1(x, y), axis=-1)
    return bool(np.all(full + 1e-12 >= coord))
