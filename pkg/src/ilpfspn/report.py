"""CSV tables and static SVG line plots for sweep results."""

from __future__ import annotations

import io
import math
from decimal import Decimal
from pathlib import Path
from typing import Sequence
from xml.sax.saxutils import escape

from .experiments import SweepTable

CSV_COLUMNS = (
    "W",
    "lambda_i",
    "mu_i",
    "p_bmis",
    "p_vmis",
    "n",
    "mean_ipc",
    "ci_halfwidth",
    "baseline_ipc",
    "speedup",
    "additional_speedup",
    "seed_base",
)

METRICS = ("speedup", "additional_speedup")
METRIC_LABELS = {"speedup": "speedup over scalar counterpart", "additional_speedup": "additional speedup from value prediction"}

VIEW_W, VIEW_H = 640, 480
MARGIN = {"left": 70, "right": 200, "top": 40, "bottom": 60}
PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def fmt6(x: float) -> str:
    """Positional decimal with 6 significant digits: 1.33333, 1.00000, 1003.00."""
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return str(x)
    return format(Decimal(f"{x:.5e}"), "f")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, int):
        return str(value)
    return fmt6(value)


def csv_rows(table: SweepTable) -> list[list[str]]:
    rows = []
    for r in table.rows:
        c = r.config
        rows.append([
            _cell(c.W), _cell(c.lambda_i), _cell(c.mu_i), _cell(c.p_bmis), _cell(c.p_vmis),
            _cell(r.stats.n), _cell(r.stats.mean_ipc), _cell(r.stats.ci_halfwidth),
            _cell(r.baseline_ipc), _cell(r.speedup), _cell(r.additional_speedup),
            _cell(table.base_seed),
        ])
    return rows


def format_csv(table: SweepTable) -> str:
    # no cell ever needs quoting, so the csv module buys nothing here
    lines = [",".join(CSV_COLUMNS)]
    lines.extend(",".join(row) for row in csv_rows(table))
    return "\n".join(lines) + "\n"


def write_csv(table: SweepTable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_csv(table))


# --------------------------------------------------------------------------
# SVG


def _padded(lo: float, hi: float) -> tuple[float, float]:
    span = hi - lo
    if span <= 0.0:
        span = abs(lo) if lo != 0.0 else 1.0
        return lo - 0.05 * span, hi + 0.05 * span
    return lo - 0.05 * span, hi + 0.05 * span


def _ticks(lo: float, hi: float, count: int = 6) -> list[float]:
    return [lo + (hi - lo) * k / (count - 1) for k in range(count)]


def _short(x: float) -> str:
    return f"{x:.4g}"


def _series_label(point: dict) -> str:
    parts = [f"{k}={_short(v)}" for k, v in point.items() if k != "W"]
    return ", ".join(parts) if parts else "all"


def metric_series(table: SweepTable, metric: str) -> list[tuple[str, list[tuple[float, float]]]]:
    """One (label, [(W, value), ...]) per combination of the non-W axes, in grid order."""
    if "W" not in table.axes:
        raise ValueError("plots need a W axis in the sweep")
    groups: dict[tuple, list] = {}
    labels: dict[tuple, str] = {}
    for r in table.rows:
        value = getattr(r, metric)
        if value is None:
            continue
        key = tuple((k, v) for k, v in r.point.items() if k != "W")
        groups.setdefault(key, []).append((float(r.config.W), float(value)))
        labels[key] = _series_label(dict(r.point))
    return [(labels[k], sorted(pts)) for k, pts in groups.items()]


def render_svg(series: Sequence[tuple[str, list]], y_label: str, title: str = "") -> str:
    xs = [x for _, pts in series for x, _ in pts]
    ys = [y for _, pts in series for _, y in pts]
    if not xs:
        raise ValueError("nothing to plot")
    x0, x1 = _padded(min(xs), max(xs))
    y0, y1 = _padded(min(ys), max(ys))
    left, top = MARGIN["left"], MARGIN["top"]
    pw = VIEW_W - MARGIN["left"] - MARGIN["right"]
    ph = VIEW_H - MARGIN["top"] - MARGIN["bottom"]

    def sx(x):
        return left + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return top + ph - (y - y0) / (y1 - y0) * ph

    out = io.StringIO()
    w = out.write
    w(f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {VIEW_W} {VIEW_H}" '
      f'width="{VIEW_W}" height="{VIEW_H}" font-family="sans-serif" font-size="12">\n')
    w(f'<rect x="0" y="0" width="{VIEW_W}" height="{VIEW_H}" fill="white"/>\n')
    if title:
        w(f'<text x="{left + pw / 2:.2f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>\n')
    w(f'<g class="axes" stroke="black" fill="none">'
      f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}"/>'
      f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}"/></g>\n')
    w('<g class="ticks">\n')
    for t in _ticks(x0, x1):
        px = sx(t)
        w(f'<line x1="{px:.2f}" y1="{top + ph}" x2="{px:.2f}" y2="{top + ph + 5}" stroke="black"/>'
          f'<text x="{px:.2f}" y="{top + ph + 18}" text-anchor="middle">{_short(t)}</text>\n')
    for t in _ticks(y0, y1):
        py = sy(t)
        w(f'<line x1="{left - 5}" y1="{py:.2f}" x2="{left}" y2="{py:.2f}" stroke="black"/>'
          f'<text x="{left - 8}" y="{py + 4:.2f}" text-anchor="end">{_short(t)}</text>\n')
    w('</g>\n')
    w(f'<text x="{left + pw / 2:.2f}" y="{VIEW_H - 15}" text-anchor="middle">machine width W</text>\n')
    w(f'<text transform="translate(18 {top + ph / 2:.2f}) rotate(-90)" text-anchor="middle">{escape(y_label)}</text>\n')
    for k, (label, pts) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        coords = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in pts)
        w(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{coords}"/>\n')
        for x, y in pts:
            w(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="3" fill="{color}"/>\n')
    lx = left + pw + 15
    w('<g class="legend">\n')
    for k, (label, _) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        ly = top + 10 + 18 * k
        w(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" stroke-width="2"/>'
          f'<text x="{lx + 26}" y="{ly + 4}">{escape(label)}</text>\n')
    w('</g>\n</svg>\n')
    return out.getvalue()


def svg_paths(path) -> dict[str, Path]:
    """``plots/fig.svg`` becomes ``plots/fig_speedup.svg`` and ``plots/fig_additional_speedup.svg``."""
    p = Path(path)
    suffix = p.suffix or ".svg"
    return {m: p.with_name(f"{p.stem}_{m}{suffix}") for m in METRICS}


def write_svgs(table: SweepTable, path) -> list[Path]:
    """One SVG per derived metric that has at least one value; returns the files written."""
    written = []
    for metric, target in svg_paths(path).items():
        series = metric_series(table, metric)
        if not series:
            continue
        text = render_svg(series, METRIC_LABELS[metric], metric.replace("_", " "))
        with open(target, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        written.append(target)
    return written
