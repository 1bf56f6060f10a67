"""Tiny deterministic SVG charts for report artifacts.

Hand-rolled on purpose: no plotting runtime, and the output bytes depend only on
the data, so rerunning a stage reproduces identical files.
"""

from __future__ import annotations

WIDTH, HEIGHT = 640, 400
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 64, 16, 36, 48
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]


def _fmt(x: float) -> str:
    return f"{x:.6g}"


def _scaler(lo: float, hi: float, out_lo: float, out_hi: float):
    if hi <= lo:
        hi = lo + 1.0
    k = (out_hi - out_lo) / (hi - lo)
    return lambda v: out_lo + (v - lo) * k


def _frame(title: str, xlabel: str, ylabel: str) -> list[str]:
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH // 2}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{WIDTH // 2}" y="{HEIGHT - 10}" text-anchor="middle">{xlabel}</text>',
        f'<text x="16" y="{HEIGHT // 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {HEIGHT // 2})">{ylabel}</text>',
        f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{WIDTH - MARGIN_L - MARGIN_R}" '
        f'height="{HEIGHT - MARGIN_T - MARGIN_B}" fill="none" stroke="black"/>',
    ]


def _axis_ticks(parts: list[str], lo, hi, scale, axis: str):
    for i in range(5):
        v = lo + (hi - lo) * i / 4
        if axis == "x":
            px = scale(v)
            parts.append(
                f'<text x="{_fmt(px)}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle">{_fmt(v)}</text>'
            )
        else:
            py = scale(v)
            parts.append(
                f'<text x="{MARGIN_L - 6}" y="{_fmt(py + 4)}" text-anchor="end">{_fmt(v)}</text>'
            )


def svg_line_chart(series: dict[str, list[tuple[float, float]]], path, title, xlabel, ylabel):
    """Multi-series line chart; series maps legend label -> [(x, y), ...]."""
    points = [p for pts in series.values() for p in pts]
    if not points:
        xs, ys = [0.0, 1.0], [0.0, 1.0]
    else:
        xs = [p[0] for p in points]
        ys = [p[1] for p in points]
    x_scale = _scaler(min(xs), max(xs), MARGIN_L, WIDTH - MARGIN_R)
    y_scale = _scaler(min(min(ys), 0.0), max(ys), HEIGHT - MARGIN_B, MARGIN_T)
    parts = _frame(title, xlabel, ylabel)
    _axis_ticks(parts, min(xs), max(xs), x_scale, "x")
    _axis_ticks(parts, min(min(ys), 0.0), max(ys), y_scale, "y")
    for idx, (label, pts) in enumerate(series.items()):
        color = PALETTE[idx % len(PALETTE)]
        coords = " ".join(f"{_fmt(x_scale(x))},{_fmt(y_scale(y))}" for x, y in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{WIDTH - MARGIN_R - 4}" y="{MARGIN_T + 16 + 14 * idx}" '
            f'text-anchor="end" fill="{color}">{label}</text>'
        )
    parts.append("</svg>")
    _write(path, parts)


def svg_bar_chart(labels: list[str], groups: dict[str, list[float]], path, title, ylabel):
    """Grouped bar chart; groups maps legend label -> one value per x label."""
    values = [v for vs in groups.values() for v in vs] or [0.0, 1.0]
    y_scale = _scaler(min(min(values), 0.0), max(values), HEIGHT - MARGIN_B, MARGIN_T)
    parts = _frame(title, "", ylabel)
    _axis_ticks(parts, min(min(values), 0.0), max(values), y_scale, "y")
    plot_w = WIDTH - MARGIN_L - MARGIN_R
    slot = plot_w / max(len(labels), 1)
    bar = slot * 0.8 / max(len(groups), 1)
    y0 = y_scale(0.0)
    for gi, (gname, vals) in enumerate(groups.items()):
        color = PALETTE[gi % len(PALETTE)]
        for li, v in enumerate(vals):
            x = MARGIN_L + li * slot + slot * 0.1 + gi * bar
            y = y_scale(v)
            top, height = (y, y0 - y) if v >= 0 else (y0, y - y0)
            parts.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(top)}" width="{_fmt(bar)}" '
                f'height="{_fmt(height)}" fill="{color}"/>'
            )
        parts.append(
            f'<text x="{WIDTH - MARGIN_R - 4}" y="{MARGIN_T + 16 + 14 * gi}" '
            f'text-anchor="end" fill="{color}">{gname}</text>'
        )
    for li, label in enumerate(labels):
        x = MARGIN_L + li * slot + slot / 2
        parts.append(
            f'<text x="{_fmt(x)}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle">{label}</text>'
        )
    parts.append("</svg>")
    _write(path, parts)


def _write(path, parts: list[str]):
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write("\n".join(parts))
        fh.write("\n")
