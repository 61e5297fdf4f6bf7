"""Self-contained static SVG charts.

Output depends only on the inputs (no timestamps or random ids), so files
are byte-identical across reruns.
"""

from xml.sax.saxutils import escape

WIDTH, HEIGHT = 480, 360
LEFT, RIGHT, TOP, BOTTOM = 60, 20, 40, 50
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e")


def _fmt(v):
    return f"{v:.2f}"


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    step = (hi - lo) / n
    return [lo + i * step for i in range(n + 1)]


def _frame(title, xlabel, ylabel, x_range, y_range):
    x0, x1 = x_range
    y0, y1 = y_range
    pw = WIDTH - LEFT - RIGHT
    ph = HEIGHT - TOP - BOTTOM

    def sx(x):
        return LEFT + (x - x0) / (x1 - x0) * pw

    def sy(y):
        return TOP + ph - (y - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for t in _nice_ticks(x0, x1):
        parts.append(f'<line x1="{_fmt(sx(t))}" y1="{TOP + ph}" x2="{_fmt(sx(t))}" '
                     f'y2="{TOP + ph + 4}" stroke="black"/>')
        parts.append(f'<text x="{_fmt(sx(t))}" y="{TOP + ph + 16}" '
                     f'text-anchor="middle">{t:.3g}</text>')
    for t in _nice_ticks(y0, y1):
        parts.append(f'<line x1="{LEFT - 4}" y1="{_fmt(sy(t))}" x2="{LEFT}" '
                     f'y2="{_fmt(sy(t))}" stroke="black"/>')
        parts.append(f'<text x="{LEFT - 6}" y="{_fmt(sy(t) + 4)}" '
                     f'text-anchor="end">{t:.3g}</text>')
    parts.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 10}" '
                 f'text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="14" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    return parts, sx, sy


def line_chart_svg(series, title="", xlabel="", ylabel="", x_range=(0.0, 1.0),
                   y_range=(0.0, 1.0), diagonal=False):
    """``series`` is a list of ``(label, xs, ys)``."""
    parts, sx, sy = _frame(title, xlabel, ylabel, x_range, y_range)
    if diagonal:
        parts.append(f'<line x1="{_fmt(sx(x_range[0]))}" y1="{_fmt(sy(y_range[0]))}" '
                     f'x2="{_fmt(sx(x_range[1]))}" y2="{_fmt(sy(y_range[1]))}" '
                     f'stroke="gray" stroke-dasharray="4 4"/>')
    for i, (label, xs, ys) in enumerate(series):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{_fmt(sx(x))},{_fmt(sy(y))}" for x, y in zip(xs, ys)
                       if y is not None)
        if pts:
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                         f'stroke-width="1.5"/>')
        ly = TOP + 14 + 14 * i
        parts.append(f'<text x="{WIDTH - RIGHT - 6}" y="{ly}" text-anchor="end" '
                     f'fill="{color}">{escape(label)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bar_chart_svg(edges, counts, title="", xlabel="", ylabel=""):
    top = max(1, int(max(counts)) if len(counts) else 1)
    parts, sx, sy = _frame(title, xlabel, ylabel, (float(edges[0]), float(edges[-1])),
                           (0.0, float(top)))
    for lo, hi, c in zip(edges[:-1], edges[1:], counts):
        x = sx(lo)
        w = sx(hi) - x
        y = sy(c)
        parts.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}" '
                     f'height="{_fmt(sy(0) - y)}" fill="{COLORS[0]}" stroke="white"/>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
