"""Acceptance criteria, each run at its stated tolerance and time budget.

Every test records one PASS/FAIL line; the lines are repeated in the
terminal summary under "acceptance criteria".
"""

import json
import math
import time
from pathlib import Path

import numpy as np

from calsharp import suites, synth
from calsharp.cli import main
from calsharp.data import SplitSpec, confidence_view, split
from calsharp.decomposition import pointwise_sharpness_gap
from calsharp.kernelreg import KernelSpec, kde, kernel_eval, nw_regress
from calsharp.metrics import binned_ece, nll
from calsharp.recal import TemperatureScaler, fit_mrr, fit_temperature

FIXTURES = Path(__file__).parent / "fixtures"
METHODS = ("none", "ts", "hb", "ir", "mrr")


class Timer:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds = time.perf_counter() - self.start


def finish(report, number, title, ok, detail, seconds, budget):
    in_time = seconds < budget
    report(number, title, ok and in_time, f"{detail}; {seconds:.2f}s of {budget:g}s")
    assert ok, detail
    assert in_time, f"took {seconds:.2f}s, budget {budget}s"


def suite_detail(checks):
    return "; ".join(f"{c.name}: {c.detail}" for c in checks)


def test_criterion_01_decomposition_identity(report_criterion):
    with Timer() as t:
        checks = [c for c in suites.decomposition_suite(seed=0, worlds=100) if "total" in c.name]
    finish(report_criterion, 1, "oracle total = cal + sharp on 100 worlds", all(c.passed for c in checks),
           suite_detail(checks), t.seconds, 5)


def test_criterion_02_confidence_lower_bound(report_criterion):
    with Timer() as t:
        checks = suites.confidence_bound_suite(seed=0, worlds=100)
    finish(report_criterion, 2, "full cal >= confidence cal on 100 simplex worlds", all(c.passed for c in checks),
           suite_detail(checks), t.seconds, 10)


def test_criterion_03_rho_nonnegative(report_criterion):
    with Timer() as t:
        oracle = [c for c in suites.decomposition_suite(seed=0, worlds=100) if "rho" in c.name]
        rng = np.random.default_rng(0)
        worlds = [synth.random_discrete_world(rng) for _ in range(100)]
        ks = KernelSpec("gaussian", 0.01)
        worst = np.inf
        for i, w in enumerate(worlds):
            ps = synth.sample_discrete(w, 5000, seed=i)
            grid = np.array([lv.conf for lv in w.levels])
            for name in ("brier", "kl"):
                worst = min(worst, float(np.nanmin(pointwise_sharpness_gap(ps, name, ks, grid=grid).rho)))
    ok = all(c.passed for c in oracle) and worst >= -5e-3
    finish(report_criterion, 3, "oracle rho >= 0 and kernel rho >= -5e-3", ok,
           f"{suite_detail(oracle)}; min kernel rho {worst:.3g}", t.seconds, 30)


def test_criterion_04_mrr_signature(report_criterion):
    with Timer() as t:
        ps = synth.temperature_world(50_000, k=10, t_star=1.0, scale=4.0, seed=0)
        cal, test = split(ps, SplitSpec(0.2, 0))
        out = fit_mrr(cal).apply(test)
        base_acc = confidence_view(test).hit.mean()
        mrr_acc = out.confidence_view().hit.mean()
        ece = binned_ece(out.confidence_view())
        base_nll, mrr_nll = nll(test), nll(out.predictions)
    ok = mrr_acc == base_acc and ece < 0.01 and mrr_nll > base_nll
    finish(report_criterion, 4, "MRR keeps accuracy, ECE < 0.01, NLL increases", ok,
           f"acc {base_acc:.5f} -> {mrr_acc:.5f}, ECE {ece:.4g}, NLL {base_nll:.4f} -> {mrr_nll:.4f}",
           t.seconds, 30)


def test_criterion_05_always_wrong_scaling(report_criterion):
    with Timer() as t:
        checks = suites.always_wrong_suite(seed=0)
    finish(report_criterion, 5, "always-wrong predictor scaling for k in 4..256", all(c.passed for c in checks),
           suite_detail(checks[-1:]), t.seconds, 1)


def test_criterion_06_consistency(report_criterion):
    with Timer() as t:
        checks = suites.consistency_suite(seed=0)
    finish(report_criterion, 6, "plugin error decreases and is < 5e-3 at n=1e5", all(c.passed for c in checks),
           suite_detail(checks), t.seconds, 120)


def test_criterion_07_pava(report_criterion):
    with Timer() as t:
        checks = suites.pava_suite()
    finish(report_criterion, 7, "PAVA equals brute force for length <= 8", all(c.passed for c in checks),
           suite_detail(checks), t.seconds, 30)


def test_criterion_08_temperature_recovery(report_criterion):
    with Timer() as t:
        temps, no_worse = [], True
        for seed in range(5):
            ps = synth.temperature_world(10_000, k=10, t_star=2.0, seed=seed)
            ts = fit_temperature(ps)
            temps.append(ts.temperature)
            no_worse &= nll(ts.apply(ps).predictions) <= nll(TemperatureScaler(1.0).apply(ps).predictions)
        med = float(np.median(temps))
    ok = 1.9 <= med <= 2.1 and no_worse
    finish(report_criterion, 8, "fitted T recovers 2 and NLL never worsens", ok,
           f"median T {med:.4f} from {', '.join(f'{x:.3f}' for x in temps)}", t.seconds, 30)


def test_criterion_09_kernel_checks(report_criterion):
    with Timer() as t:
        k0 = float(kernel_eval(KernelSpec("epanechnikov", 0.05), 0.0))
        nw = float(nw_regress([0.0, 1.0], [0.0, 1.0], KernelSpec("gaussian", 1.0), [0.0])[0])
        grid = np.linspace(0, 1, 2001)
        rng = np.random.default_rng(0)
        d = kde(rng.beta(0.5, 0.5, 1000), KernelSpec("gaussian", 0.05), grid)
        integral = float(np.sum((d[1:] + d[:-1]) * np.diff(grid)) / 2)
    ok = k0 == 0.75 and abs(nw - 0.377541) <= 1e-6 and 0.99 <= integral <= 1.01
    finish(report_criterion, 9, "kernel peak, NW closed form, reflected KDE mass", ok,
           f"K(0)={k0}, NW={nw:.7f}, integral={integral:.5f}", t.seconds, 1)


def test_criterion_10_pipeline_fixture(report_criterion, tmp_path):
    problems = []
    with Timer() as t:
        recal = [a for m in METHODS for a in ("--recal", m)]
        dump = str(FIXTURES / "dump_k10.csv")
        assert main(["evaluate", "--input", dump, *recal, "--out", str(tmp_path / "ev")]) == 0
        got = json.loads((tmp_path / "ev" / "metrics.json").read_text())["methods"]
        ref = json.loads((FIXTURES / "reference_metrics.json").read_text())
        worst = 0.0
        for m, row in ref.items():
            for key, want in row.items():
                have = got[m]["params"][key] if key in ("temperature", "h_bar") else got[m][key]
                want, have = float(want), float(have)
                if math.isfinite(want):
                    worst = max(worst, abs(have - want))
                elif have != want:
                    problems.append(f"{m}.{key}: {have} != {want}")
        if worst > 1e-9:
            problems.append(f"max metric deviation {worst:.3g}")
        assert main(["diagram", "--input", dump, *recal, "--reliability", "--seed", "0",
                     "--out", str(tmp_path / "dg")]) == 0
        golden = sorted(p.name for p in (FIXTURES / "golden").glob("*.svg"))
        for name in golden:
            if (tmp_path / "dg" / name).read_bytes() != (FIXTURES / "golden" / name).read_bytes():
                problems.append(f"{name} differs from golden")
    ok = not problems and len(golden) == 2 * len(METHODS)
    finish(report_criterion, 10, "bundled dump matches reference metrics and golden SVGs", ok,
           "; ".join(problems) or f"max deviation {worst:.2g}, {len(golden)} SVGs byte-identical",
           t.seconds, 30)
