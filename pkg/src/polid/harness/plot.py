"""Line plots of report aggregates as plain SVG 1.1 (one path per series, CI band behind it)."""
from __future__ import annotations

import csv
import math
from pathlib import Path
from xml.sax.saxutils import escape

METRIC_COLUMNS = {"alpha": "alpha_hat", "beta": "beta_hat", "match": "exact_match", "return": "return"}
COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]
WIDTH, HEIGHT = 640, 420
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 30, 55


class PlotError(ValueError):
    pass


def read_report(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def series_from_rows(rows: list[dict], metric: str) -> tuple[str, dict[str, list[tuple[float, float, float]]]]:
    """``{label: [(n, mean, ci), ...]}`` from the aggregate rows of a report."""
    if not metric:
        raise PlotError("empty metric name")
    if metric not in METRIC_COLUMNS:
        raise PlotError(f"unknown metric {metric!r}; choose from {sorted(METRIC_COLUMNS)}")
    col = METRIC_COLUMNS[metric]
    if rows and col not in rows[0]:
        raise PlotError(f"report has no {col!r} column")
    means = {}
    cis = {}
    for r in rows:
        if r["seed"] not in ("mean", "ci95"):
            continue
        label = f"{r['rule']} {'conf' if r['conf'] in ('1', 'True') else 'no-conf'}"
        if r.get("strategy"):
            label = f"{r['strategy']} ({r['rule']})"
        key = (label, float(r["n"]))
        val = float(r[col]) if r[col] != "" else math.nan
        (means if r["seed"] == "mean" else cis)[key] = val
    if not means:
        raise PlotError("report has no aggregate rows")
    series: dict[str, list] = {}
    for (label, n), mu in means.items():
        ci = cis.get((label, n), math.nan)
        series.setdefault(label, []).append((n, mu, 0.0 if math.isnan(ci) else ci))
    for pts in series.values():
        pts.sort()
    if min(len(p) for p in series.values()) < 2:
        raise PlotError("need at least two sweep points per series")
    return col, series


def render_svg(series: dict[str, list[tuple[float, float, float]]], ylabel: str, title: str = "") -> str:
    pts = [p for s in series.values() for p in s if not math.isnan(p[1])]
    if not pts:
        raise PlotError("no finite values to plot")
    xs = [p[0] for p in pts]
    lo = min(p[1] - p[2] for p in pts)
    hi = max(p[1] + p[2] for p in pts)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    log_x = min(xs) > 0 and max(xs) / min(xs) >= 10
    fx = (lambda v: math.log10(v)) if log_x else (lambda v: v)
    x0, x1 = fx(min(xs)), fx(max(xs))
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def X(v):
        return LEFT + (fx(v) - x0) / (x1 - x0) * pw

    def Y(v):
        return TOP + (hi - v) / (hi - lo) * ph

    out = [f'<?xml version="1.0" encoding="UTF-8"?>',
           f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
           f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>']
    for n in sorted(set(xs)):
        out.append(f'<text x="{X(n):.2f}" y="{TOP + ph + 18}" font-size="11" text-anchor="middle">{n:g}</text>')
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        out.append(f'<text x="{LEFT - 6}" y="{Y(v) + 4:.2f}" font-size="11" text-anchor="end">{v:.3g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 12}" font-size="12" text-anchor="middle">'
               f'episodes n{" (log scale)" if log_x else ""}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{LEFT + pw / 2:.1f}" y="18" font-size="13" text-anchor="middle">{escape(title)}</text>')
    for i, (label, s) in enumerate(series.items()):
        color = COLORS[i % len(COLORS)]
        s = [p for p in s if not math.isnan(p[1])]
        upper = " ".join(f"{X(n):.2f},{Y(m + c):.2f}" for n, m, c in s)
        lower = " ".join(f"{X(n):.2f},{Y(m - c):.2f}" for n, m, c in reversed(s))
        out.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.2" stroke="none"/>')
        d = " ".join(f"{'M' if k == 0 else 'L'}{X(n):.2f},{Y(m):.2f}" for k, (n, m, _) in enumerate(s))
        out.append(f'<path d="{d}" fill="none" stroke="{color}" stroke-width="2"/>')
        ly = TOP + 14 + 18 * i
        out.append(f'<line x1="{LEFT + pw + 12}" y1="{ly}" x2="{LEFT + pw + 32}" y2="{ly}" stroke="{color}" '
                   f'stroke-width="2"/>')
        out.append(f'<text x="{LEFT + pw + 38}" y="{ly + 4}" font-size="11">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(report_path, metric: str, out_path=None) -> Path:
    """Write ``<report>.<metric>.svg`` (or ``out_path``) and return its path."""
    rows = read_report(report_path)
    col, series = series_from_rows(rows, metric)
    env = rows[0]["env"] if rows else ""
    svg = render_svg(series, col, title=env)
    path = Path(out_path) if out_path else Path(report_path).with_suffix(f".{metric}.svg")
    path.write_text(svg)
    return path
