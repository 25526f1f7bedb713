"""CSV, run manifest and SVG emission for study results."""

from __future__ import annotations

import datetime as _dt
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

from .lab import ERROR_COLUMNS, CaseResult, RateReport, fit_eoc

CSV_HEADER = "delta,dim,e_std_l2,e_std_h1,e_best_l2,e_best_h1,e_sup_l2,e_sup_h1,lambda_err,cbar,iters,wall_ms"


def format_float(x: Optional[float]) -> str:
    """Scientific notation with 17 significant digits and a bare exponent."""
    if x is None:
        return ""
    x = float(x)
    if x == 0.0:
        return "0.0E0"
    if not math.isfinite(x):
        return "inf" if x > 0 else ("-inf" if x < 0 else "nan")
    mant, exp = f"{x:.16E}".split("E")
    return f"{mant}E{int(exp)}"


def csv_text(results: Sequence[CaseResult], timings: bool = False) -> str:
    """Rows sorted by delta descending.

    ``wall_ms`` is left empty unless ``timings`` is set, so repeated runs of
    one config give byte-identical files.
    """
    if not results:
        raise ValueError("no results to write")
    lines = [CSV_HEADER]
    for r in sorted(results, key=lambda r: -r.delta):
        cells = [format_float(r.delta), str(r.dim)]
        cells += [format_float(r.column(c)) for c in ERROR_COLUMNS]
        cells += [format_float(r.lambda_err), format_float(r.cbar), str(r.iters)]
        cells.append(format_float(r.wall_ms) if timings else "")
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def emit_csv(results: Sequence[CaseResult], path, timings: bool = False) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(results, timings))
    return path


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    return v


def emit_manifest(path, config_text: str, results: Sequence[CaseResult], report: Optional[RateReport], extra: Optional[dict] = None) -> Path:
    """JSON record of one run: version, config echo, timestamp, rows, fits and verdicts."""
    from . import __version__

    data = {
        "tool_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "config": config_text,
        "rows": [dict(vars(r)) for r in sorted(results, key=lambda r: -r.delta)],
    }
    if report is not None:
        data["report"] = {
            "slopes": report.slopes,
            "gain_l2": report.gain_l2,
            "gain_h1": report.gain_h1,
            "theory": {k: getattr(report.theory, k) for k in ("std_l2", "std_h1", "gain_l2", "gain_h1", "note")},
            "verdicts": report.verdicts,
        }
    if extra:
        data.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------- plot

W, H = 760, 520
LEFT, RIGHT, TOP, BOTTOM = 80, 230, 40, 60
COLORS = {
    "e_std_l2": "#1f77b4",
    "e_std_h1": "#aec7e8",
    "e_best_l2": "#2ca02c",
    "e_best_h1": "#98df8a",
    "e_sup_l2": "#d62728",
    "e_sup_h1": "#ff9896",
}


@dataclass(frozen=True)
class PlotResult:
    svg: str
    slopes: dict
    notes: tuple[str, ...]


def _decades(lo: float, hi: float) -> list[int]:
    return list(range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1))


def render_plot(results: Sequence[CaseResult], report: Optional[RateReport] = None, title: str = "") -> PlotResult:
    """Log-log chart of the error columns against delta.

    Slopes come from ``report`` when given, otherwise from ``fit_eoc`` over
    all plotted points. Columns without two positive entries are skipped and
    listed in ``notes``.
    """
    if not results:
        raise ValueError("no results to plot")
    rows = sorted(results, key=lambda r: -r.delta)
    series, notes, slopes = {}, [], {}
    for col in ERROR_COLUMNS:
        pts = [(r.delta, r.column(col)) for r in rows if r.column(col) > 0]
        if len(pts) < 2:
            notes.append(f"{col} omitted: fewer than two positive values")
            continue
        series[col] = pts
        s = report.slopes.get(col) if report is not None else None
        slopes[col] = fit_eoc(pts) if s is None or not math.isfinite(s) else s
    if not series:
        raise ValueError("every error column is degenerate; nothing to plot")

    xs = [p[0] for pts in series.values() for p in pts]
    ys = [p[1] for pts in series.values() for p in pts]
    xd, yd = _decades(min(xs), max(xs)), _decades(min(ys), max(ys))
    lx0, lx1 = xd[0], max(xd[-1], xd[0] + 1)
    ly0, ly1 = yd[0], max(yd[-1], yd[0] + 1)
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def px(x):
        return LEFT + (math.log10(x) - lx0) / (lx1 - lx0) * pw

    def py(y):
        return TOP + (ly1 - math.log10(y)) / (ly1 - ly0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="white" stroke="black"/>',
        f'<clipPath id="plot"><rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}"/></clipPath>',
    ]
    if title:
        out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{TOP - 14}" text-anchor="middle" font-size="13">{escape(title)}</text>')
    for d in range(lx0, lx1 + 1):
        x = px(10.0**d)
        out.append(f'<line x1="{x:.1f}" y1="{TOP}" x2="{x:.1f}" y2="{TOP + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{x:.1f}" y="{TOP + ph + 16}" text-anchor="middle">1e{d}</text>')
    for d in range(ly0, ly1 + 1):
        y = py(10.0**d)
        out.append(f'<line x1="{LEFT}" y1="{y:.1f}" x2="{LEFT + pw}" y2="{y:.1f}" stroke="#ddd"/>')
        out.append(f'<text x="{LEFT - 6}" y="{y + 4:.1f}" text-anchor="end">1e{d}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{H - 20}" text-anchor="middle">delta</text>')
    out.append(f'<text x="20" y="{TOP + ph / 2:.1f}" transform="rotate(-90 20 {TOP + ph / 2:.1f})" text-anchor="middle">error</text>')

    # guide lines: e_best_h1 rate plus each theoretical gain, anchored at the coarsest e_sup point
    guides = []
    if report is not None and "e_best_h1" in slopes:
        base = slopes["e_best_h1"]
        for col, gain in (("e_sup_l2", report.theory.gain_l2), ("e_sup_h1", report.theory.gain_h1)):
            if gain is not None and col in series:
                guides.append((col, base + gain, gain))
    for col, slope, gain in guides:
        (x0, y0), x1 = series[col][0], series[col][-1][0]
        y1 = y0 * (x1 / x0) ** slope
        if y1 <= 0 or not math.isfinite(y1):
            continue
        out.append(
            f'<line x1="{px(x0):.1f}" y1="{py(y0):.1f}" x2="{px(x1):.1f}" y2="{py(y1):.1f}" '
            f'stroke="{COLORS[col]}" stroke-dasharray="6 4" clip-path="url(#plot)"/>'
        )
        ty = min(max(py(y1), TOP + 10), TOP + ph - 4)
        out.append(f'<text x="{px(x1) - 4:.1f}" y="{ty:.1f}" text-anchor="end" fill="{COLORS[col]}">theory gain {gain:g}</text>')

    for col, pts in series.items():
        c = COLORS[col]
        path = " ".join(f"{'M' if i == 0 else 'L'}{px(x):.1f},{py(y):.1f}" for i, (x, y) in enumerate(pts))
        out.append(f'<path d="{path}" fill="none" stroke="{c}" stroke-width="1.6"/>')
        for x, y in pts:
            out.append(f'<circle cx="{px(x):.1f}" cy="{py(y):.1f}" r="2.8" fill="{c}"/>')

    ly = TOP + 10
    for col in series:
        out.append(f'<rect x="{LEFT + pw + 14}" y="{ly - 8}" width="12" height="8" fill="{COLORS[col]}"/>')
        out.append(f'<text x="{LEFT + pw + 32}" y="{ly}">{col}  slope {slopes[col]:.3f}</text>')
        ly += 18
    if report is not None:
        for label, v in (("gain L2", report.gain_l2), ("gain H1", report.gain_h1)):
            out.append(f'<text x="{LEFT + pw + 14}" y="{ly + 6}">{label} {v:.3f}</text>')
            ly += 18
    for note in notes:
        out.append(f'<text x="{LEFT + pw + 14}" y="{ly + 6}" fill="#888">note: {escape(note)}</text>')
        ly += 18
    out.append("</svg>")
    return PlotResult("\n".join(out) + "\n", slopes, tuple(notes))


def emit_plot(results: Sequence[CaseResult], report: Optional[RateReport], path, title: str = "") -> PlotResult:
    plot = render_plot(results, report, title)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(plot.svg, encoding="utf-8")
    return plot
