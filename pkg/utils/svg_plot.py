# Standalone SVG line charts of run metrics
from html import escape
from typing import Dict, List, Sequence

from utils.errors import PreconditionError

WIDTH = 640
PANEL_HEIGHT = 220
MARGIN = 48
COLORS = ['#1f77b4', '#d62728', '#2ca02c', '#9467bd']


def _polyline(xs: Sequence[float], ys: Sequence[float], left: float, top: float,
              width: float, height: float) -> str:
    x_low, x_high = min(xs), max(xs)
    y_low, y_high = min(ys), max(ys)
    x_span = (x_high - x_low) or 1.0
    y_span = (y_high - y_low) or 1.0
    points = [
        f"{left + (x - x_low) / x_span * width:.2f},{top + height - (y - y_low) / y_span * height:.2f}"
        for x, y in zip(xs, ys)
    ]
    return ' '.join(points)


def _panel(name: str, xs: Sequence[float], ys: Sequence[float], top: float, color: str) -> List[str]:
    inner_width = WIDTH - 2 * MARGIN
    inner_height = PANEL_HEIGHT - 2 * MARGIN
    plot_top = top + MARGIN
    parts = [
        f'<rect x="{MARGIN}" y="{plot_top}" width="{inner_width}" height="{inner_height}" '
        f'fill="none" stroke="#999"/>',
        f'<text x="{MARGIN}" y="{plot_top - 8}" font-size="13">{escape(name)}</text>',
        f'<text x="{MARGIN - 4}" y="{plot_top + 4}" font-size="10" text-anchor="end">{max(ys):.4g}</text>',
        f'<text x="{MARGIN - 4}" y="{plot_top + inner_height}" font-size="10" text-anchor="end">{min(ys):.4g}</text>',
        f'<text x="{MARGIN}" y="{plot_top + inner_height + 14}" font-size="10">{min(xs):.0f}</text>',
        f'<text x="{WIDTH - MARGIN}" y="{plot_top + inner_height + 14}" font-size="10" '
        f'text-anchor="end">{max(xs):.0f}</text>',
    ]
    if len(xs) > 1:
        points = _polyline(xs, ys, MARGIN, plot_top, inner_width, inner_height)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{points}"/>')
    else:
        parts.append(f'<circle cx="{MARGIN}" cy="{plot_top + inner_height / 2}" r="3" fill="{color}"/>')
    return parts


def line_chart(xs: Sequence[float], series: Dict[str, Sequence[float]], title: str = '') -> str:
    """One stacked panel per series, sharing the x axis"""
    if not xs:
        raise PreconditionError("Nothing to plot: no metrics rows")
    for name, ys in series.items():
        if len(ys) != len(xs):
            raise PreconditionError(f"Series '{name}' has {len(ys)} points for {len(xs)} x values")

    height = PANEL_HEIGHT * len(series) + 30
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
        f'viewBox="0 0 {WIDTH} {height}" font-family="sans-serif">',
        f'<text x="{WIDTH / 2}" y="20" font-size="15" text-anchor="middle">{escape(title)}</text>',
    ]
    for index, (name, ys) in enumerate(series.items()):
        parts.extend(_panel(name, xs, ys, 30 + index * PANEL_HEIGHT, COLORS[index % len(COLORS)]))
    parts.append('</svg>')
    return '\n'.join(parts) + '\n'


def metrics_chart(rows: Sequence[Dict[str, float]], title: str = 'training curves') -> str:
    """Meta loss and mean mask density against iteration"""
    xs = [row['iteration'] for row in rows]
    return line_chart(xs, {
        'meta loss': [row['meta_loss'] for row in rows],
        'mask density': [row['density'] for row in rows],
    }, title)
