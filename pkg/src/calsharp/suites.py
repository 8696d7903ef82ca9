"""Property suites over synthetic worlds, shared by the CLI and the test-suite."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import synth
from .data import confidence_view
from .metrics import brier
from .recal import pava


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  {self.detail}".rstrip()


def decomposition_suite(seed: int = 0, worlds: int = 100) -> list[Check]:
    rng = np.random.default_rng(seed)
    ws = [synth.random_discrete_world(rng) for _ in range(worlds)]
    out = []
    for name in ("brier", "kl"):
        conf_gap = full_gap = 0.0
        min_rho = np.inf
        for w in ws:
            o = synth.oracle_discrete_decomposition(w, name)
            conf_gap = max(conf_gap, abs(o.total - o.cal - o.sharp))
            full_gap = max(full_gap, abs(o.total - o.full_cal - o.full_sharp))
            min_rho = min(min_rho, float(o.rho.min()))
        out.append(Check(f"{name}: total = cal + sharp (confidence)", conf_gap <= 1e-10, f"max |gap| {conf_gap:.3g}"))
        out.append(Check(f"{name}: total = cal + sharp (full)", full_gap <= 1e-10, f"max |gap| {full_gap:.3g}"))
        out.append(Check(f"{name}: oracle rho >= 0", min_rho >= -1e-12, f"min rho {min_rho:.3g}"))
    return out


def confidence_bound_suite(seed: int = 0, worlds: int = 100) -> list[Check]:
    rng = np.random.default_rng(seed)
    ws = [synth.random_simplex_world(rng) for _ in range(worlds)]
    out = []
    for name in ("brier", "kl"):
        slack = min(
            full - conf for full, conf in (synth.oracle_full_vs_confidence_cal(w, name) for w in ws)
        )
        out.append(Check(f"{name}: full cal >= confidence cal", slack >= -1e-10, f"min slack {slack:.3g}"))
    return out


def always_wrong_suite(seed: int = 0, ks=(4, 16, 64, 256), n: int = 2000) -> list[Check]:
    out = []
    ratios = []
    for k in ks:
        eps = 1.0 / (2 * k)
        aw = synth.always_wrong_world(k, eps, n, seed)
        view = confidence_view(aw.predictions)
        emp_conf = float(np.mean((view.hit - view.conf) ** 2))
        emp_full = brier(aw.predictions)
        ok = (
            abs(aw.conf_mse - (1.0 / k + eps) ** 2) <= 1e-15
            and abs(emp_conf - aw.conf_mse) <= 1e-12
            and abs(emp_full - aw.full_brier) <= 1e-12
            and aw.full_brier >= 0.9 * (1.0 - 1.0 / k) ** 2
        )
        ratios.append(aw.full_brier / aw.conf_mse)
        out.append(Check(f"k={k}: exact confidence and full MSE", ok,
                         f"conf {aw.conf_mse:.6g} full {aw.full_brier:.6g}"))
    increasing = all(b > a for a, b in zip(ratios, ratios[1:]))
    out.append(Check("full/confidence ratio increases with k", increasing,
                     " ".join(f"{r:.4g}" for r in ratios)))
    return out


def consistency_suite(seed: int = 0, ns=(1_000, 10_000, 100_000)) -> list[Check]:
    out = []
    for shift in (0.0, 0.1):
        world = synth.ContinuousWorld(shift)
        pts = synth.consistency_sweep(world, ns, seed=seed)
        med = [p.median_error for p in pts]
        dec = all(b < a for a, b in zip(med, med[1:]))
        detail = " ".join(f"n={p.n}:{p.median_error:.3g}" for p in pts)
        out.append(Check(f"shift={shift}: median error decreasing", dec, detail))
        out.append(Check(f"shift={shift}: median error < 5e-3 at n={pts[-1].n}", med[-1] < 5e-3, f"{med[-1]:.3g}"))
    return out


def pava_suite(seed: int = 0, max_len: int = 8, values=(0.0, 1.0, 2.0)) -> list[Check]:
    mismatches = 0
    total = 0
    for length in range(1, max_len + 1):
        for ys in itertools.product(values, repeat=length):
            total += 1
            if not np.array_equal(pava(ys), synth.brute_force_isotonic(ys)):
                mismatches += 1
    return [Check(f"PAVA equals brute force on {total} inputs", mismatches == 0, f"{mismatches} mismatches")]


# suite names are part of the command-line interface
SUITES = {
    "decomposition": decomposition_suite,
    "lemma3": confidence_bound_suite,
    "prop4": always_wrong_suite,
    "consistency": consistency_suite,
    "pava": pava_suite,
}
