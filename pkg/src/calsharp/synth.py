"""Synthetic worlds with enumerable ground truth, and brute-force oracles.

Every oracle here computes expectations by enumeration (or quadrature) and
shares no code path with the kernel estimators it is used to check, apart
from the elementary divergence formulas.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import quad

from .bregman import BregmanSpec, get_spec
from .data import ConfidenceView, PredictionSet
from .errors import ValidationError
from .kernelreg import KernelSpec
from .metrics import plugin_calibration_error

# --- discrete confidence worlds ---------------------------------------------


@dataclass(frozen=True)
class Level:
    conf: float
    acc: float
    mass: float


@dataclass(frozen=True)
class DiscreteWorld:
    """Confidence takes finitely many values ``conf`` with mass ``mass``.

    At a level the predicted class gets probability ``conf`` and the other
    ``k - 1`` classes share the rest equally; the label equals the prediction
    with probability ``acc`` and is otherwise uniform over the other classes.
    """

    levels: tuple[Level, ...]
    k: int = 2

    def __post_init__(self):
        levels = tuple(lv if isinstance(lv, Level) else Level(*lv) for lv in self.levels)
        object.__setattr__(self, "levels", levels)
        if self.k < 2:
            raise ValidationError("k must be at least 2")
        confs = [lv.conf for lv in levels]
        if len(set(confs)) != len(confs):
            raise ValidationError("level confidences must be distinct")
        if any(not 0 < c < 1 for c in confs):
            raise ValidationError("level confidences must lie in (0, 1)")
        if any(not 0 <= lv.acc <= 1 for lv in levels) or any(lv.mass <= 0 for lv in levels):
            raise ValidationError("accuracies must lie in [0, 1] and masses be positive")
        if abs(sum(lv.mass for lv in levels) - 1.0) > 1e-12:
            raise ValidationError("level masses must sum to 1")

    def level_vector(self, j: int) -> np.ndarray:
        """Prediction row of level ``j`` with the predicted class first."""
        lv = self.levels[j]
        row = np.full(self.k, (1.0 - lv.conf) / (self.k - 1))
        row[0] = lv.conf
        return row

    def label_vector(self, j: int) -> np.ndarray:
        """Conditional label distribution at level ``j`` (predicted class first)."""
        lv = self.levels[j]
        row = np.full(self.k, (1.0 - lv.acc) / (self.k - 1))
        row[0] = lv.acc
        return row

    def to_dict(self) -> dict:
        return {"k": self.k, "levels": [[lv.conf, lv.acc, lv.mass] for lv in self.levels]}

    @classmethod
    def from_dict(cls, d: dict) -> "DiscreteWorld":
        return cls(tuple(Level(*lv) for lv in d["levels"]), int(d["k"]))


def sample_discrete(world: DiscreteWorld, n: int, seed: int = 0) -> PredictionSet:
    """Draw ``n`` predictions; the predicted class is uniform over classes."""
    if n < 1:
        raise ValidationError("n must be positive")
    k = world.k
    if any(lv.conf <= 1.0 / k for lv in world.levels):
        raise ValidationError("sampling needs every level confidence above 1/k")
    rng = np.random.default_rng(seed)
    masses = np.array([lv.mass for lv in world.levels])
    lvl = rng.choice(len(world.levels), size=n, p=masses / masses.sum())
    conf = np.array([lv.conf for lv in world.levels])[lvl]
    acc = np.array([lv.acc for lv in world.levels])[lvl]
    pred = rng.integers(0, k, size=n)
    probs = np.repeat(((1.0 - conf) / (k - 1))[:, None], k, axis=1)
    probs[np.arange(n), pred] = conf
    correct = rng.random(n) < acc
    offset = rng.integers(1, k, size=n)
    labels = np.where(correct, pred, (pred + offset) % k)
    return PredictionSet(probs, labels)


@dataclass(frozen=True)
class OracleDecomposition:
    total: float
    cal: float
    sharp: float
    rho: np.ndarray
    full_cal: float
    full_sharp: float


def oracle_discrete_decomposition(world: DiscreteWorld, spec: BregmanSpec | str) -> OracleDecomposition:
    """Exact confidence-level and full decompositions by enumeration.

    ``sharp`` is accumulated from the per-level pointwise gaps and
    ``full_sharp`` from ``E phi(e_Y) - E phi(E[e_Y | g])``; neither is
    computed as a difference of the other terms.
    """
    spec = get_spec(spec)
    k = world.k
    eye = np.eye(k)
    total = cal = sharp = full_cal = full_sharp = 0.0
    rho = np.empty(len(world.levels))
    for j, lv in enumerate(world.levels):
        g = world.level_vector(j)
        pi = world.label_vector(j)
        cond = sum(pi[y] * spec.div(eye[y], g) for y in range(k) if pi[y] > 0)
        d1 = spec.div1(np.float64(lv.acc), np.float64(lv.conf))
        rho[j] = cond - d1
        total += lv.mass * cond
        cal += lv.mass * d1
        sharp += lv.mass * rho[j]
        full_cal += lv.mass * spec.div(pi, g)
        e_phi = sum(pi[y] * spec.phi(eye[y]) for y in range(k))
        full_sharp += lv.mass * (e_phi - spec.phi(pi))
    return OracleDecomposition(
        float(total), float(cal), float(sharp), rho, float(full_cal), float(full_sharp)
    )


def random_discrete_world(rng: np.random.Generator, max_levels: int = 5, max_k: int = 10,
                          separation: float = 0.1) -> DiscreteWorld:
    """Levels on a grid with spacing ``separation``, all above ``1/k``."""
    k = int(rng.integers(2, max_k + 1))
    start = np.ceil((1.0 / k + 1e-9) / separation)
    candidates = np.arange(start, np.floor((1.0 - 1e-9) / separation) + 1) * separation
    candidates = candidates[(candidates > 1.0 / k) & (candidates < 1.0)]
    m = int(rng.integers(1, min(max_levels, candidates.size) + 1))
    confs = np.sort(rng.choice(candidates, size=m, replace=False))
    accs = rng.uniform(0.0, 1.0, size=m)
    masses = rng.dirichlet(np.ones(m))
    masses[-1] = 1.0 - masses[:-1].sum()
    return DiscreteWorld(tuple(Level(float(c), float(a), float(w)) for c, a, w in zip(confs, accs, masses)), k)


# --- worlds over the full simplex -------------------------------------------


@dataclass(frozen=True, eq=False)
class SimplexWorld:
    """Finitely many atoms, each with a prediction row, a true label row and a mass."""

    g: np.ndarray
    pi: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.g, dtype=np.float64)
        pi = np.asarray(self.pi, dtype=np.float64)
        mass = np.asarray(self.mass, dtype=np.float64)
        if g.ndim != 2 or g.shape != pi.shape or mass.shape != (g.shape[0],):
            raise ValidationError("atoms must give matching (m, k) rows and m masses")
        for rows in (g, pi):
            if rows.min() < 0 or np.abs(rows.sum(axis=1) - 1.0).max() > 1e-12:
                raise ValidationError("atom rows must lie on the simplex")
        if mass.min() <= 0 or abs(mass.sum() - 1.0) > 1e-12:
            raise ValidationError("atom masses must be positive and sum to 1")
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "pi", pi)
        object.__setattr__(self, "mass", mass)

    @property
    def k(self) -> int:
        return self.g.shape[1]

    def to_dict(self) -> dict:
        return {"g": self.g.tolist(), "pi": self.pi.tolist(), "mass": self.mass.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "SimplexWorld":
        return cls(np.asarray(d["g"]), np.asarray(d["pi"]), np.asarray(d["mass"]))


def _groups(keys) -> dict:
    out: dict = {}
    for i, key in enumerate(keys):
        out.setdefault(key, []).append(i)
    return out


def conditional_label_means(world: SimplexWorld) -> dict:
    """Map each distinct prediction row to (mass, E[pi | g = row])."""
    out = {}
    for key, idx in _groups(tuple(row) for row in world.g).items():
        w = world.mass[idx]
        out[key] = (w.sum(), (w[:, None] * world.pi[idx]).sum(axis=0) / w.sum())
    return out


def oracle_full_vs_confidence_cal(world: SimplexWorld, spec: BregmanSpec | str) -> tuple[float, float]:
    """Exact full calibration error and exact confidence calibration error."""
    spec = get_spec(spec)
    full = 0.0
    for key, (w, mean_pi) in conditional_label_means(world).items():
        full += w * spec.div(mean_pi, np.asarray(key))
    pred = np.argmax(world.g, axis=1)
    conf = world.g[np.arange(world.g.shape[0]), pred]
    hit_prob = world.pi[np.arange(world.g.shape[0]), pred]
    conf_cal = 0.0
    for h, idx in _groups(conf.tolist()).items():
        w = world.mass[idx]
        acc = (w * hit_prob[idx]).sum() / w.sum()
        conf_cal += w.sum() * spec.div1(np.float64(acc), np.float64(h))
    return float(full), float(conf_cal)


def lq_ece_oracle(world: SimplexWorld, q: int) -> float:
    """``E || E[e_Y | g] - g ||_q^q`` by enumeration."""
    if q < 1 or int(q) != q:
        raise ValidationError("q must be a positive integer")
    total = 0.0
    for key, (w, mean_pi) in conditional_label_means(world).items():
        total += w * np.sum(np.abs(mean_pi - np.asarray(key)) ** q)
    return float(total)


def sharpness_term(world: SimplexWorld, spec: BregmanSpec | str) -> float:
    """``E phi(E[pi | g])``, larger for more refined predictors."""
    spec = get_spec(spec)
    return float(sum(w * spec.phi(m) for w, m in conditional_label_means(world).values()))


def expected_divergence(world: SimplexWorld, spec: BregmanSpec | str) -> float:
    """``E d(pi, g)`` over atoms."""
    spec = get_spec(spec)
    return float(np.sum(world.mass * spec.div(world.pi, world.g)))


def random_simplex_world(rng: np.random.Generator, max_k: int = 8, max_atoms: int = 16) -> SimplexWorld:
    """Random atoms where prediction rows repeat and some share a maximum.

    Shared rows make ``E[pi | g]`` differ from ``pi``; permuted rows share the
    confidence while differing as vectors.
    """
    k = int(rng.integers(2, max_k + 1))
    m = int(rng.integers(1, max_atoms + 1))
    n_rows = int(rng.integers(1, m + 1))
    rows = []
    while len(rows) < n_rows:
        if rows and rng.random() < 0.4:
            rows.append(rng.permutation(rows[int(rng.integers(len(rows)))]))
        else:
            rows.append(rng.dirichlet(np.ones(k)))
    rows = np.asarray(rows)
    rows /= rows.sum(axis=1, keepdims=True)
    assign = np.concatenate([np.arange(n_rows), rng.integers(0, n_rows, size=m - n_rows)])
    g = rows[assign]
    pi = rng.dirichlet(np.full(k, 0.7), size=m)
    pi = np.maximum(pi, 0.0)
    pi /= pi.sum(axis=1, keepdims=True)
    mass = rng.dirichlet(np.ones(m))
    mass /= mass.sum()
    return SimplexWorld(g, pi, mass)


def set_partitions(items: list):
    """All set partitions of ``items`` (Bell-number many)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def calibrated_predictor(world: SimplexWorld, partition) -> SimplexWorld:
    """Predictor that reports the mass-weighted mean of ``pi`` on each block.

    Such a predictor is fully calibrated. Blocks with equal means merge into
    one prediction value, which keeps it calibrated.
    """
    g = np.empty_like(world.pi)
    for block in partition:
        w = world.mass[block]
        g[block] = (w[:, None] * world.pi[block]).sum(axis=0) / w.sum()
    return SimplexWorld(g, world.pi, world.mass)


def always_constant_predictor(world: SimplexWorld) -> SimplexWorld:
    return calibrated_predictor(world, [list(range(world.g.shape[0]))])


# --- the always-wrong predictor ---------------------------------------------


@dataclass(frozen=True, eq=False)
class AlwaysWrong:
    predictions: PredictionSet
    k: int
    eps: float
    conf_mse: float
    full_brier: float
    leading_term: float


def always_wrong_world(k: int, eps: float, n: int, seed: int = 0) -> AlwaysWrong:
    """Deterministic labels; the predictor puts ``1/k + eps`` on a wrong class.

    The confidence-level squared error is ``(1/k + eps)**2`` per sample while
    the full Brier score stays bounded below by a constant.
    """
    if k < 2 or not 0 < eps <= 1.0 / k:
        raise ValidationError("need k >= 2 and 0 < eps <= 1/k")
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, k, size=n)
    wrong = (labels + rng.integers(1, k, size=n)) % k
    low = 1.0 / k - eps / (k - 1)
    probs = np.full((n, k), low)
    probs[np.arange(n), wrong] = 1.0 / k + eps
    high = 1.0 / k + eps
    conf_mse = high ** 2
    full = (1.0 - low) ** 2 + high ** 2 + (k - 2) * low ** 2
    leading = (1.0 - 1.0 / k + eps / (k - 1)) ** 2
    return AlwaysWrong(PredictionSet(probs, labels), k, eps, conf_mse, full, leading)


# --- continuous confidence worlds -------------------------------------------


@dataclass(frozen=True)
class ContinuousWorld:
    """Confidence uniform on ``[lo, hi]``; accuracy ``clip(h + shift, 0, 1)``."""

    shift: float = 0.0
    lo: float = 0.5
    hi: float = 1.0
    k: int = 2

    def __post_init__(self):
        if not 0 <= self.lo < self.hi <= 1:
            raise ValidationError("need 0 <= lo < hi <= 1")

    def accuracy(self, h):
        return np.clip(np.asarray(h, dtype=np.float64) + self.shift, 0.0, 1.0)

    def sample_view(self, n: int, seed: int) -> ConfidenceView:
        rng = np.random.default_rng(seed)
        h = rng.uniform(self.lo, self.hi, size=n)
        hit = (rng.random(n) < self.accuracy(h)).astype(np.float64)
        return ConfidenceView(np.zeros(n, dtype=np.int64), h, hit)

    def true_cal_error(self, spec: BregmanSpec | str) -> float:
        return _continuous_truth(self, get_spec(spec).name)

    def to_dict(self) -> dict:
        return {"shift": self.shift, "lo": self.lo, "hi": self.hi, "k": self.k}


_TRUTH_CACHE: dict = {}


def _continuous_truth(world: ContinuousWorld, name: str) -> float:
    key = (world.shift, world.lo, world.hi, name)
    if key not in _TRUTH_CACHE:
        spec = get_spec(name)
        dens = 1.0 / (world.hi - world.lo)

        def integrand(h):
            return float(spec.div1(world.accuracy(h), np.float64(h))) * dens

        # the accuracy curve has kinks where clipping starts
        kinks = [t for t in (1.0 - world.shift, -world.shift) if world.lo < t < world.hi]
        value, _ = quad(integrand, world.lo, world.hi, points=kinks or None,
                        epsabs=1e-12, epsrel=1e-10, limit=200)
        _TRUTH_CACHE[key] = value
    return _TRUTH_CACHE[key]


def bandwidth_rule(n: int) -> float:
    """``0.5 * n ** (-1/5)``: shrinks while ``n s**2 / log n`` grows."""
    return 0.5 * n ** (-0.2)


@dataclass
class SweepPoint:
    n: int
    bandwidth: float
    errors: list[float] = field(default_factory=list)

    @property
    def median_error(self) -> float:
        return float(np.median(self.errors))


def consistency_sweep(
    world: ContinuousWorld,
    ns,
    spec: BregmanSpec | str = "brier",
    rule=bandwidth_rule,
    seed: int = 0,
    seeds: int = 5,
    family: str = "gaussian",
) -> list[SweepPoint]:
    """Plugin estimation error against the quadrature truth for growing ``n``.

    No subsampling is applied; the FFT-binned regression keeps ``n = 1e5``
    tractable.
    """
    spec = get_spec(spec)
    truth = world.true_cal_error(spec)
    out = []
    for n in ns:
        ks = KernelSpec(family, rule(n))
        point = SweepPoint(int(n), ks.bandwidth)
        for s in range(seeds):
            view = world.sample_view(int(n), seed + 1000 * s + int(n))
            est = plugin_calibration_error(view, spec, ks, cap=None, method="binned")
            point.errors.append(abs(est.mean - truth))
        out.append(point)
    return out


# --- brute-force isotonic regression ----------------------------------------


def brute_force_isotonic(ys, weights=None) -> np.ndarray:
    """Best nondecreasing fit over all contiguous block partitions.

    The isotonic solution is piecewise constant with block means as values,
    so minimizing squared error among monotone block-mean fits recovers it.
    Every partition whose block means are nondecreasing is visited.
    """
    ys = np.asarray(ys, dtype=np.float64)
    n = ys.size
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=np.float64)
    ys_l, w_l = ys.tolist(), w.tolist()
    mean = {}
    sse = {}
    for a in range(n):
        for b in range(a + 1, n + 1):
            sw = sum(w_l[a:b])
            m = sum(y * wi for y, wi in zip(ys_l[a:b], w_l[a:b])) / sw
            mean[a, b] = m
            sse[a, b] = sum(wi * (y - m) ** 2 for y, wi in zip(ys_l[a:b], w_l[a:b]))
    best = [np.inf, None]

    def extend(start, prev, err, blocks):
        if start == n:
            if err < best[0] - 1e-12:
                best[0], best[1] = err, list(blocks)
            return
        for end in range(start + 1, n + 1):
            m = mean[start, end]
            if m >= prev:
                blocks.append((start, end))
                extend(end, m, err + sse[start, end], blocks)
                blocks.pop()

    extend(0, -np.inf, 0.0, [])
    fit = np.empty(n)
    for a, b in best[1] or []:
        fit[a:b] = mean[a, b]
    return fit


# --- temperature-distorted logits -------------------------------------------


def temperature_world(n: int, k: int = 10, t_star: float = 2.0, scale: float = 2.0,
                      seed: int = 0) -> PredictionSet:
    """Labels drawn from ``softmax(z)``; the reported logits are ``t_star * z``."""
    rng = np.random.default_rng(seed)
    z = rng.normal(0.0, scale, size=(n, k))
    p = np.exp(z - z.max(axis=1, keepdims=True))
    p /= p.sum(axis=1, keepdims=True)
    u = rng.random(n)[:, None]
    labels = np.minimum((np.cumsum(p, axis=1) < u).sum(axis=1), k - 1)
    return PredictionSet.from_logits(t_star * z, labels)
