"""Dependency-free static SVG charts.

Panels (line or bar) are stacked vertically into one document. Output
is deterministic: fixed layout, fixed palette, fixed number formatting,
so repeated runs produce byte-identical files and diffs stay readable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")

_MARGIN_LEFT = 60
_MARGIN_RIGHT = 16
_MARGIN_TOP = 30
_MARGIN_BOTTOM = 42


@dataclass
class Panel:
    title: str = ""
    x_label: str = ""
    y_label: str = ""
    kind: str = "line"                 # "line" | "bar"
    series: list = field(default_factory=list)  # line: (label, xs, ys)
    bars: list = field(default_factory=list)    # bar: (label, value)
    hline: float | None = None         # horizontal marker, e.g. an objective threshold


def _esc(text: str) -> str:
    return str(text).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".") if v == v else "0"


def _tick_label(v: float) -> str:
    return f"{v:.4g}"


def _ranges(panel: Panel):
    if panel.kind == "bar":
        ys = [v for _, v in panel.bars] or [0.0]
        xs = [0.0, 1.0]
    else:
        xs, ys = [], []
        for _, sx, sy in panel.series:
            xs.extend(float(v) for v in sx)
            ys.extend(float(v) for v in sy)
        xs = xs or [0.0, 1.0]
        ys = ys or [0.0, 1.0]
    if panel.hline is not None:
        ys = list(ys) + [float(panel.hline)]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    y_lo = min(y_lo, 0.0)
    if x_hi <= x_lo:
        x_hi = x_lo + 1.0
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    y_hi += 0.05 * (y_hi - y_lo)
    return x_lo, x_hi, y_lo, y_hi


def _render_panel(panel: Panel, y_offset: int, width: int, height: int) -> list[str]:
    plot_w = width - _MARGIN_LEFT - _MARGIN_RIGHT
    plot_h = height - _MARGIN_TOP - _MARGIN_BOTTOM
    x_lo, x_hi, y_lo, y_hi = _ranges(panel)

    def px(v: float) -> float:
        return _MARGIN_LEFT + (v - x_lo) / (x_hi - x_lo) * plot_w

    def py(v: float) -> float:
        return y_offset + _MARGIN_TOP + plot_h - (v - y_lo) / (y_hi - y_lo) * plot_h

    out = [
        f'<rect x="{_MARGIN_LEFT}" y="{y_offset + _MARGIN_TOP}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#444" stroke-width="1"/>',
        f'<text x="{_MARGIN_LEFT}" y="{y_offset + _MARGIN_TOP - 10}" font-size="13" '
        f'font-family="sans-serif" fill="#111">{_esc(panel.title)}</text>',
        f'<text x="{_MARGIN_LEFT + plot_w / 2:.1f}" y="{y_offset + height - 8}" font-size="11" '
        f'text-anchor="middle" font-family="sans-serif" fill="#333">{_esc(panel.x_label)}</text>',
        f'<text x="14" y="{y_offset + _MARGIN_TOP + plot_h / 2:.1f}" font-size="11" '
        f'text-anchor="middle" font-family="sans-serif" fill="#333" '
        f'transform="rotate(-90 14 {y_offset + _MARGIN_TOP + plot_h / 2:.1f})">{_esc(panel.y_label)}</text>',
    ]

    for i in range(5):
        fy = y_lo + (y_hi - y_lo) * i / 4
        yy = py(fy)
        out.append(f'<line x1="{_MARGIN_LEFT - 4}" y1="{yy:.2f}" x2="{_MARGIN_LEFT}" '
                   f'y2="{yy:.2f}" stroke="#444"/>')
        out.append(f'<text x="{_MARGIN_LEFT - 7}" y="{yy + 3.5:.2f}" font-size="10" '
                   f'text-anchor="end" font-family="sans-serif" fill="#333">{_tick_label(fy)}</text>')

    if panel.hline is not None:
        yy = py(panel.hline)
        out.append(f'<line x1="{_MARGIN_LEFT}" y1="{yy:.2f}" x2="{_MARGIN_LEFT + plot_w}" '
                   f'y2="{yy:.2f}" stroke="#999" stroke-dasharray="5,4"/>')

    if panel.kind == "bar":
        n = max(len(panel.bars), 1)
        slot = plot_w / n
        bar_w = slot * 0.6
        for i, (label, value) in enumerate(panel.bars):
            cx = _MARGIN_LEFT + slot * (i + 0.5)
            top = py(max(value, 0.0))
            base = py(0.0)
            out.append(f'<rect x="{cx - bar_w / 2:.2f}" y="{top:.2f}" width="{bar_w:.2f}" '
                       f'height="{abs(base - top):.2f}" fill="{PALETTE[i % len(PALETTE)]}"/>')
            out.append(f'<text x="{cx:.2f}" y="{y_offset + _MARGIN_TOP + plot_h + 14}" '
                       f'font-size="9" text-anchor="middle" font-family="sans-serif" '
                       f'fill="#333">{_esc(label)}</text>')
            out.append(f'<text x="{cx:.2f}" y="{top - 3:.2f}" font-size="9" '
                       f'text-anchor="middle" font-family="sans-serif" fill="#333">{_tick_label(value)}</text>')
    else:
        for i in range(5):
            fx = x_lo + (x_hi - x_lo) * i / 4
            xx = px(fx)
            out.append(f'<line x1="{xx:.2f}" y1="{py(y_lo):.2f}" x2="{xx:.2f}" '
                       f'y2="{py(y_lo) + 4:.2f}" stroke="#444"/>')
            out.append(f'<text x="{xx:.2f}" y="{py(y_lo) + 15:.2f}" font-size="10" '
                       f'text-anchor="middle" font-family="sans-serif" fill="#333">{_tick_label(fx)}</text>')
        for idx, (label, xs, ys) in enumerate(panel.series):
            color = PALETTE[idx % len(PALETTE)]
            pts = " ".join(f"{px(float(x)):.2f},{py(float(y)):.2f}" for x, y in zip(xs, ys))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            ly = y_offset + _MARGIN_TOP + 12 + idx * 13
            lx = _MARGIN_LEFT + plot_w - 150
            out.append(f'<line x1="{lx}" y1="{ly - 3}" x2="{lx + 18}" y2="{ly - 3}" '
                       f'stroke="{color}" stroke-width="2"/>')
            out.append(f'<text x="{lx + 23}" y="{ly}" font-size="10" '
                       f'font-family="sans-serif" fill="#111">{_esc(label)}</text>')
    return out


def render(panels: list[Panel], width: int = 720, panel_height: int = 240) -> str:
    """Compose panels vertically into one standalone SVG document."""
    total_h = panel_height * len(panels)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{total_h}" '
        f'viewBox="0 0 {width} {total_h}">',
        f'<rect x="0" y="0" width="{width}" height="{total_h}" fill="#ffffff"/>',
    ]
    for i, panel in enumerate(panels):
        parts.extend(_render_panel(panel, i * panel_height, width, panel_height))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
