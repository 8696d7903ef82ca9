"""Self-contained SVG calibration-sharpness and reliability diagrams.

Output is plain SVG 1.1 text with fixed numeric formatting, so identical
inputs always produce identical bytes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from xml.sax.saxutils import escape

import numpy as np

from .data import ConfidenceView
from .decomposition import CurveEstimate, DecompositionReport, _nan_to_none
from .errors import ValidationError
from .metrics import uniform_bin_index


@dataclass(frozen=True)
class DiagramStyle:
    width: int = 640
    height: int = 480
    align_y: tuple[float, float] | None = None
    curve_color: str = "#d0009a"
    band_color: str = "#e00000"
    band_opacity: float = 0.5
    density_color: str = "#1f4fd8"
    density_opacity: float = 0.25
    bar_color: str = "#4a78c2"
    show_cal: bool = True
    show_tot: bool = True
    title: str = ""
    margin_left: int = 64
    margin_right: int = 64
    margin_top: int = 40
    margin_bottom: int = 52

    def __post_init__(self):
        if self.width <= self.margin_left + self.margin_right or self.height <= self.margin_top + self.margin_bottom:
            raise ValidationError("canvas too small for its margins")
        if self.align_y is not None:
            lo, hi = self.align_y
            if not hi > lo:
                raise ValidationError("align_y needs lower < upper")

    def with_align(self, y_range: tuple[float, float]) -> "DiagramStyle":
        return replace(self, align_y=(float(y_range[0]), float(y_range[1])))


def _fmt(v: float) -> str:
    s = f"{v:.2f}"
    return "0.00" if s == "-0.00" else s


class _Frame:
    """Maps data coordinates to device coordinates inside the plot area."""

    def __init__(self, style: DiagramStyle, y_range: tuple[float, float], y2_max: float = 1.0):
        self.x0 = style.margin_left
        self.x1 = style.width - style.margin_right
        self.y0 = style.height - style.margin_bottom
        self.y1 = style.margin_top
        self.ylo, self.yhi = y_range
        self.y2_max = y2_max

    def px(self, x) -> float:
        return self.x0 + (self.x1 - self.x0) * float(x)

    def py(self, y) -> float:
        return self.y0 - (self.y0 - self.y1) * (float(y) - self.ylo) / (self.yhi - self.ylo)

    def py2(self, y) -> float:
        return self.y0 - (self.y0 - self.y1) * float(y) / self.y2_max

    def scale_y(self) -> float:
        """Device units per data unit on the primary axis."""
        return (self.y0 - self.y1) / (self.yhi - self.ylo)


def _nice_ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    raw = (hi - lo) / target
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9)
    ticks = []
    t = first
    while t * step <= hi + 1e-9 * step:
        ticks.append(round(t * step, 10))
        t += 1
    return ticks


def _tick_label(v: float) -> str:
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def _segments(mask: np.ndarray) -> list[tuple[int, int]]:
    """Half-open index runs where ``mask`` is True."""
    runs = []
    start = None
    for i, ok in enumerate(mask):
        if ok and start is None:
            start = i
        elif not ok and start is not None:
            runs.append((start, i))
            start = None
    if start is not None:
        runs.append((start, len(mask)))
    return runs


def _polyline(points) -> str:
    return " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in points)


class _Svg:
    def __init__(self, style: DiagramStyle):
        self.style = style
        self.parts = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{style.width}" '
            f'height="{style.height}" viewBox="0 0 {style.width} {style.height}" '
            f'font-family="sans-serif" font-size="12">',
            f'<rect x="0" y="0" width="{style.width}" height="{style.height}" fill="#ffffff"/>',
        ]

    def add(self, element: str) -> None:
        self.parts.append(element)

    def text(self, x, y, s, anchor="start", **attrs) -> None:
        extra = "".join(f' {k.rstrip("_").replace("_", "-")}="{v}"' for k, v in attrs.items())
        self.add(f'<text x="{_fmt(x)}" y="{_fmt(y)}" text-anchor="{anchor}"{extra}>{escape(s)}</text>')

    def to_bytes(self) -> bytes:
        return ("\n".join(self.parts + ["</svg>"]) + "\n").encode("utf-8")


def _axes(svg: _Svg, fr: _Frame, xlabel: str, ylabel: str, y2label: str | None = None) -> None:
    svg.add(
        f'<rect x="{_fmt(fr.x0)}" y="{_fmt(fr.y1)}" width="{_fmt(fr.x1 - fr.x0)}" '
        f'height="{_fmt(fr.y0 - fr.y1)}" fill="none" stroke="#000000" stroke-width="1"/>'
    )
    for t in _nice_ticks(0.0, 1.0):
        x = fr.px(t)
        svg.add(f'<line x1="{_fmt(x)}" y1="{_fmt(fr.y0)}" x2="{_fmt(x)}" y2="{_fmt(fr.y0 + 5)}" stroke="#000000"/>')
        svg.text(x, fr.y0 + 18, _tick_label(t), anchor="middle")
    for t in _nice_ticks(fr.ylo, fr.yhi):
        y = fr.py(t)
        svg.add(f'<line x1="{_fmt(fr.x0 - 5)}" y1="{_fmt(y)}" x2="{_fmt(fr.x0)}" y2="{_fmt(y)}" stroke="#000000"/>')
        svg.text(fr.x0 - 8, y + 4, _tick_label(t), anchor="end")
    svg.text((fr.x0 + fr.x1) / 2, fr.y0 + 40, xlabel, anchor="middle")
    svg.text(16, (fr.y0 + fr.y1) / 2, ylabel, anchor="middle",
             transform=f"rotate(-90 16 {_fmt((fr.y0 + fr.y1) / 2)})")
    if y2label is not None:
        for t in _nice_ticks(0.0, fr.y2_max):
            y = fr.py2(t)
            svg.add(f'<line x1="{_fmt(fr.x1)}" y1="{_fmt(y)}" x2="{_fmt(fr.x1 + 5)}" y2="{_fmt(y)}" stroke="#000000"/>')
            svg.text(fr.x1 + 8, y + 4, _tick_label(t), anchor="start")
        xr = svg.style.width - 14
        svg.text(xr, (fr.y0 + fr.y1) / 2, y2label, anchor="middle",
                 transform=f"rotate(90 {_fmt(xr)} {_fmt((fr.y0 + fr.y1) / 2)})")


def _identity(svg: _Svg, fr: _Frame) -> None:
    lo = max(0.0, fr.ylo)
    hi = min(1.0, fr.yhi)
    if hi <= lo:
        return
    svg.add(
        f'<line x1="{_fmt(fr.px(lo))}" y1="{_fmt(fr.py(lo))}" x2="{_fmt(fr.px(hi))}" '
        f'y2="{_fmt(fr.py(hi))}" stroke="#555555" stroke-width="1" stroke-dasharray="5,4"/>'
    )


def band_edges(curve: CurveEstimate) -> tuple[np.ndarray, np.ndarray]:
    """Band boundaries: total extent ``density * rho_clamped`` centered on the curve.

    The lower edge is clipped at 0; the upper edge is not clipped.
    """
    half = 0.5 * curve.density * curve.rho_clamped
    return np.maximum(curve.cal_curve - half, 0.0), curve.cal_curve + half


def calibration_sharpness_y_range(curve: CurveEstimate) -> tuple[float, float]:
    """Default y-limits: ``[0, 1]`` widened to fit the band."""
    keep = ~curve.masked
    _, upper = band_edges(curve)
    top = float(np.max(upper[keep])) if keep.any() else 1.0
    return 0.0, max(1.0, top * 1.02)


def render_calibration_sharpness(
    curve: CurveEstimate,
    report: DecompositionReport,
    style: DiagramStyle = DiagramStyle(),
) -> tuple[bytes, dict]:
    """SVG bytes and a JSON-ready sidecar for one calibration-sharpness diagram."""
    y_range = style.align_y or calibration_sharpness_y_range(curve)
    keep = ~curve.masked
    finite_dens = curve.density[np.isfinite(curve.density)]
    dens_max = float(finite_dens.max()) if finite_dens.size else 0.0
    y2_max = _nice_ticks(0.0, dens_max * 1.05)[-1] if dens_max > 0 else 1.0
    if y2_max < dens_max:
        y2_max = dens_max * 1.05
    fr = _Frame(style, y_range, y2_max)
    svg = _Svg(style)
    svg.add(
        f'<clipPath id="plot"><rect x="{_fmt(fr.x0)}" y="{_fmt(fr.y1)}" '
        f'width="{_fmt(fr.x1 - fr.x0)}" height="{_fmt(fr.y0 - fr.y1)}"/></clipPath>'
    )
    svg.add('<g clip-path="url(#plot)">')
    # density overlay on the secondary axis
    dens_ok = np.isfinite(curve.density)
    for a, b in _segments(dens_ok):
        pts = [(fr.px(curve.grid[a]), fr.y0)]
        pts += [(fr.px(x), fr.py2(d)) for x, d in zip(curve.grid[a:b], curve.density[a:b])]
        pts.append((fr.px(curve.grid[b - 1]), fr.y0))
        svg.add(
            f'<polygon class="density" points="{_polyline(pts)}" fill="{style.density_color}" '
            f'fill-opacity="{style.density_opacity}" stroke="{style.density_color}" stroke-width="1"/>'
        )
    lower, upper = band_edges(curve)
    for a, b in _segments(keep):
        pts = [(fr.px(x), fr.py(u)) for x, u in zip(curve.grid[a:b], upper[a:b])]
        pts += [(fr.px(x), fr.py(lo)) for x, lo in zip(curve.grid[a:b][::-1], lower[a:b][::-1])]
        svg.add(
            f'<polygon class="band" points="{_polyline(pts)}" fill="{style.band_color}" '
            f'fill-opacity="{style.band_opacity}" stroke="none"/>'
        )
    _identity(svg, fr)
    for a, b in _segments(keep):
        pts = [(fr.px(x), fr.py(c)) for x, c in zip(curve.grid[a:b], curve.cal_curve[a:b])]
        svg.add(
            f'<polyline class="curve" points="{_polyline(pts)}" fill="none" '
            f'stroke="{style.curve_color}" stroke-width="2"/>'
        )
    svg.add("</g>")
    _axes(svg, fr, "confidence", "accuracy", "density")
    if style.title:
        svg.text(fr.x0, fr.y1 - 14, style.title, font_size="14")
    lines = []
    if style.show_cal:
        lines.append(f"d_CAL ×100 = {100 * report.cal.mean:.2f} ± {100 * report.cal.std:.2f}")
    if style.show_tot:
        lines.append(f"d_TOT ×100 = {100 * report.total.mean:.2f}")
    for i, s in enumerate(lines):
        svg.text(fr.x0 + 10, fr.y1 + 20 + 16 * i, s, class_="annotation")
    sidecar = curve.to_dict()
    sidecar.update(
        d_cal=float(report.cal.mean),
        d_cal_std=float(report.cal.std),
        d_tot=float(report.total.mean),
    )
    sidecar["config"] = dict(sidecar["config"], y_range=[float(y_range[0]), float(y_range[1])])
    return svg.to_bytes(), sidecar


def reliability_bins(view: ConfidenceView, bins: int = 15) -> tuple[np.ndarray, np.ndarray]:
    """Per-bin sample counts and accuracies (``nan`` for empty bins)."""
    idx = uniform_bin_index(view.conf, bins)
    count = np.bincount(idx, minlength=bins)
    hits = np.bincount(idx, weights=view.hit, minlength=bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        acc = np.where(count > 0, hits / count, np.nan)
    return count, acc


def render_reliability(view: ConfidenceView, bins: int = 15, style: DiagramStyle = DiagramStyle()) -> bytes:
    """Bars of within-bin accuracy at uniform confidence bins plus the identity line."""
    if view.n < 1:
        raise ValidationError("reliability diagram needs at least one sample")
    if bins < 1:
        raise ValidationError("bins must be positive")
    fr = _Frame(style, (0.0, 1.0))
    svg = _Svg(style)
    _, acc = reliability_bins(view, bins)
    width = fr.px(1.0 / bins) - fr.px(0.0)
    for b in range(bins):
        if np.isnan(acc[b]):
            continue
        x = fr.px(b / bins)
        y = fr.py(acc[b])
        svg.add(
            f'<rect class="bar" x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(width)}" '
            f'height="{_fmt(fr.y0 - y)}" fill="{style.bar_color}" stroke="#000000" stroke-width="0.5"/>'
        )
    _identity(svg, fr)
    _axes(svg, fr, "confidence", "accuracy")
    if style.title:
        svg.text(fr.x0, fr.y1 - 14, style.title, font_size="14")
    return svg.to_bytes()


def sidecar_arrays_equal(curve: CurveEstimate, sidecar: dict) -> bool:
    """True when sidecar arrays reproduce the curve fields (``None`` for ``nan``)."""
    fields = ("grid", "cal_curve", "density", "cond_div", "rho", "rho_clamped")
    return all(sidecar[f] == _nan_to_none(getattr(curve, f)) for f in fields)
