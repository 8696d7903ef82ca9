"""Command-line entry point: ``calsharp evaluate | diagram | synthcheck``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

from . import recal
from .data import PredictionSet, SplitSpec, load_predictions, split
from .decomposition import decomposition_report, pointwise_sharpness_gap
from .diagram import (
    DiagramStyle,
    calibration_sharpness_y_range,
    render_calibration_sharpness,
    render_reliability,
)
from .errors import CalsharpError
from .kernelreg import KernelSpec
from .metrics import MetricsConfig, MetricsTable, metrics_table
from .suites import SUITES

METHODS = ("none", "ts", "hb", "ir", "mrr")


@dataclass
class RunConfig:
    input: Path
    format: str | None = None
    split: float = 0.2
    seed: int = 0
    divergence: str = "brier"
    kernel: str = "gaussian"
    bandwidth: float = 0.05
    bins: int = 15
    recal: list[str] = field(default_factory=lambda: ["none"])
    out: Path = Path("out")
    align_y: bool = False
    reliability: bool = False
    parallel: bool = False

    def __post_init__(self):
        if not 0 < self.split < 1:
            raise CalsharpError("--split must lie strictly between 0 and 1")
        if self.bins < 1:
            raise CalsharpError("--bins must be at least 1")
        if not self.bandwidth > 0:
            raise CalsharpError("--bandwidth must be positive")
        unknown = [m for m in self.recal if m not in METHODS]
        if unknown:
            raise CalsharpError(f"unknown recalibration method(s): {', '.join(unknown)}")
        # keep first occurrence order, drop repeats
        self.recal = list(dict.fromkeys(self.recal))

    @property
    def kernel_spec(self) -> KernelSpec:
        return KernelSpec(self.kernel, self.bandwidth)

    def to_dict(self) -> dict:
        return {
            "input": Path(self.input).name,
            "split": self.split,
            "seed": self.seed,
            "divergence": self.divergence,
            "kernel": self.kernel_spec.to_dict(),
            "bins": self.bins,
            "recal": list(self.recal),
        }


def _fit(method: str, calib: PredictionSet, cfg: RunConfig):
    if method == "none":
        return None
    if method == "hb":
        return recal.fit_histogram_binning(calib, cfg.bins)
    return recal.FITTERS[method](calib)


def _params(r) -> dict:
    if isinstance(r, recal.TemperatureScaler):
        return {"temperature": r.temperature}
    if isinstance(r, recal.MeanReplacement):
        return {"h_bar": r.h_bar}
    return {}


def recalibrated_sets(cfg: RunConfig, ps: PredictionSet) -> dict[str, tuple[recal.RecalibratedPredictionSet, dict]]:
    calib, test = split(ps, SplitSpec(cfg.split, cfg.seed))

    def one(method):
        r = _fit(method, calib, cfg)
        rps = recal.identity(test) if r is None else r.apply(test)
        return rps, _params(r)

    return dict(zip(cfg.recal, _map(cfg, one, cfg.recal)))


def _map(cfg: RunConfig, fn, items):
    if cfg.parallel and len(items) > 1:
        # results come back in submission order, so outputs stay deterministic
        with ThreadPoolExecutor(max_workers=len(items)) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    return v


def dump_json(obj, path: Path) -> None:
    path.write_text(json.dumps(_json_value(obj), indent=2, sort_keys=True, allow_nan=False) + "\n")


def format_table(rows: dict[str, MetricsTable]) -> str:
    cols = MetricsTable.DISPLAY_COLUMNS
    header = ["method"] + [label for _, label in cols]
    body = []
    for name, t in rows.items():
        cells = [name]
        for attr, _ in cols:
            v = 100.0 * getattr(t, attr)
            cells.append("inf" if math.isinf(v) and v > 0 else ("nan" if math.isnan(v) else f"{v:.2f}"))
        body.append(cells)
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths)))
             for r in [header] + body]
    return "\n".join(lines) + "\n"


def cmd_evaluate(cfg: RunConfig) -> dict:
    ps = load_predictions(cfg.input, cfg.format)
    mc = MetricsConfig(bins=cfg.bins, kernel=cfg.kernel_spec, divergence=cfg.divergence, seed=cfg.seed)
    sets = recalibrated_sets(cfg, ps)
    tables = dict(zip(sets, _map(cfg, lambda m: metrics_table(sets[m][0].predictions, mc, pred=sets[m][0].stored_pred),
                                 list(sets))))
    result = {
        "config": cfg.to_dict(),
        "methods": {m: dict(tables[m].to_dict(), params=sets[m][1]) for m in sets},
    }
    cfg.out.mkdir(parents=True, exist_ok=True)
    dump_json(result, cfg.out / "metrics.json")
    (cfg.out / "table.txt").write_text(format_table(tables))
    return result


def cmd_diagram(cfg: RunConfig) -> dict:
    ps = load_predictions(cfg.input, cfg.format)
    sets = recalibrated_sets(cfg, ps)
    ks = cfg.kernel_spec

    def analyse(m):
        rps = sets[m][0]
        curve = pointwise_sharpness_gap(rps.predictions, cfg.divergence, ks, pred=rps.stored_pred, seed=cfg.seed)
        report = decomposition_report(rps.predictions, cfg.divergence, ks, pred=rps.stored_pred, seed=cfg.seed)
        return curve, report

    analysed = dict(zip(sets, _map(cfg, analyse, list(sets))))
    style = DiagramStyle()
    if cfg.align_y:
        ranges = [calibration_sharpness_y_range(c) for c, _ in analysed.values()]
        style = style.with_align((min(r[0] for r in ranges), max(r[1] for r in ranges)))
    cfg.out.mkdir(parents=True, exist_ok=True)
    sidecars = {}
    for m, (curve, report) in analysed.items():
        svg, side = render_calibration_sharpness(curve, report, replace(style, title=m))
        side["config"]["method"] = m
        (cfg.out / f"{m}.svg").write_bytes(svg)
        dump_json(side, cfg.out / f"{m}.json")
        sidecars[m] = side
        if cfg.reliability:
            rel = render_reliability(sets[m][0].confidence_view(), cfg.bins,
                                     DiagramStyle(title=f"{m} reliability"))
            (cfg.out / f"{m}_reliability.svg").write_bytes(rel)
    return sidecars


def cmd_synthcheck(suite: str, seed: int) -> bool:
    checks = SUITES[suite](seed)
    for c in checks:
        print(c.line())
    ok = all(c.passed for c in checks)
    print(f"{suite}: {'all checks passed' if ok else 'FAILED'}")
    return ok


def _default_seed() -> int:
    raw = os.environ.get("CALSHARP_SEED")
    if raw is None or raw == "":
        return 0
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"error: CALSHARP_SEED must be an integer, got {raw!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="calsharp", description="Calibration and sharpness diagnostics.")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_args(p):
        p.add_argument("--input", required=True, type=Path, help="prediction dump (CSV or JSONL)")
        p.add_argument("--format", choices=("csv", "jsonl"), default=None)
        p.add_argument("--split", type=float, default=0.2, help="calibration fraction")
        p.add_argument("--seed", type=int, default=None, help="split/subsample seed (default $CALSHARP_SEED or 0)")
        p.add_argument("--divergence", choices=("brier", "kl"), default="brier")
        p.add_argument("--kernel", choices=("gaussian", "epanechnikov"), default="gaussian")
        p.add_argument("--bandwidth", type=float, default=0.05)
        p.add_argument("--bins", type=int, default=15)
        p.add_argument("--recal", action="append", choices=METHODS, default=None,
                       help="recalibration method; repeat for several (default: none)")
        p.add_argument("--out", type=Path, default=Path("out"))
        p.add_argument("--parallel", action="store_true", help="evaluate methods concurrently")

    ev = sub.add_parser("evaluate", help="metrics table per recalibration method")
    run_args(ev)
    dg = sub.add_parser("diagram", help="calibration-sharpness diagrams per method")
    run_args(dg)
    dg.add_argument("--align-y", action="store_true", help="share y-limits across methods")
    dg.add_argument("--reliability", action="store_true", help="also write reliability diagrams")
    sc = sub.add_parser("synthcheck", help="run a synthetic property suite")
    sc.add_argument("suite", choices=sorted(SUITES))
    sc.add_argument("--seed", type=int, default=None)
    return parser


def _run_config(args) -> RunConfig:
    return RunConfig(
        input=args.input,
        format=args.format,
        split=args.split,
        seed=args.seed,
        divergence=args.divergence,
        kernel=args.kernel,
        bandwidth=args.bandwidth,
        bins=args.bins,
        recal=args.recal or ["none"],
        out=args.out,
        align_y=getattr(args, "align_y", False),
        reliability=getattr(args, "reliability", False),
        parallel=args.parallel,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.seed is None:
        args.seed = _default_seed()
    try:
        if args.command == "synthcheck":
            return 0 if cmd_synthcheck(args.suite, args.seed) else 1
        cfg = _run_config(args)
        if args.command == "evaluate":
            cmd_evaluate(cfg)
            print((cfg.out / "table.txt").read_text(), end="")
        else:
            cmd_diagram(cfg)
            print(f"wrote diagrams for {', '.join(cfg.recal)} to {cfg.out}")
    except (CalsharpError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
