"""Minimal in-tree SVG emitters: line plots and heat maps.

Kept dependency-free and deterministic (fixed coordinate formatting) so the
plots are reviewable in version control.
"""

import os

import numpy as np

_WIDTH, _HEIGHT = 640, 420
_MARGIN_L, _MARGIN_R, _MARGIN_T, _MARGIN_B = 62, 16, 30, 46
_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]

# sampled viridis-like ramp for heat maps
_RAMP = [
    (68, 1, 84), (71, 44, 122), (59, 81, 139), (44, 113, 142),
    (33, 144, 141), (39, 173, 129), (92, 200, 99), (170, 220, 50),
    (253, 231, 37),
]


def _fmt(x):
    return format(float(x), ".6g")


def _ticks(lo, hi, count=5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10.0 ** np.floor(np.log10(span / count))
    for mult in (1.0, 2.0, 5.0, 10.0):
        if span / (step * mult) <= count:
            step *= mult
            break
    first = np.ceil(lo / step) * step
    vals = []
    v = first
    while v <= hi + 1e-12 * span:
        vals.append(0.0 if abs(v) < 1e-12 * span else v)
        v += step
    return vals


def _color_of(t):
    t = min(max(float(t), 0.0), 1.0)
    pos = t * (len(_RAMP) - 1)
    i = min(int(pos), len(_RAMP) - 2)
    frac = pos - i
    rgb = [round(_RAMP[i][k] + frac * (_RAMP[i + 1][k] - _RAMP[i][k]))
           for k in range(3)]
    return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"


def _write(path, body):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        handle.write(
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
            f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">\n'
        )
        handle.write('<rect width="100%" height="100%" fill="white"/>\n')
        handle.write(body)
        handle.write("</svg>\n")


def line_plot(path, x, series, title="", xlabel="", ylabel="", logy=False):
    """Write a line plot; ``series`` maps label -> y-array."""
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    all_y = np.concatenate([v for v in ys.values()]) if ys else np.zeros(1)
    if logy:
        all_y = np.log10(np.maximum(all_y, 1e-300))
        ys = {k: np.log10(np.maximum(v, 1e-300)) for k, v in ys.items()}
    x_lo, x_hi = float(x.min()), float(x.max())
    y_lo, y_hi = float(all_y.min()), float(all_y.max())
    if y_hi <= y_lo:
        y_hi = y_lo + 1.0
    pad = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad, y_hi + pad
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B

    def sx(v):
        return _MARGIN_L + (v - x_lo) / (x_hi - x_lo or 1.0) * plot_w

    def sy(v):
        return _MARGIN_T + (y_hi - v) / (y_hi - y_lo) * plot_h

    parts = []
    parts.append(
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#444"/>\n'
    )
    for tick in _ticks(x_lo, x_hi):
        px = sx(tick)
        parts.append(
            f'<line x1="{_fmt(px)}" y1="{_MARGIN_T + plot_h}" x2="{_fmt(px)}" '
            f'y2="{_MARGIN_T + plot_h + 4}" stroke="#444"/>\n'
            f'<text x="{_fmt(px)}" y="{_MARGIN_T + plot_h + 18}" '
            f'font-size="11" text-anchor="middle">{_fmt(tick)}</text>\n'
        )
    for tick in _ticks(y_lo, y_hi):
        py = sy(tick)
        label = _fmt(tick) if not logy else f"1e{_fmt(tick)}"
        parts.append(
            f'<line x1="{_MARGIN_L - 4}" y1="{_fmt(py)}" x2="{_MARGIN_L}" '
            f'y2="{_fmt(py)}" stroke="#444"/>\n'
            f'<text x="{_MARGIN_L - 8}" y="{_fmt(py + 4)}" font-size="11" '
            f'text-anchor="end">{label}</text>\n'
        )
    for k, (label, y) in enumerate(ys.items()):
        color = _COLORS[k % len(_COLORS)]
        pts = " ".join(f"{_fmt(sx(a))},{_fmt(sy(b))}" for a, b in zip(x, y))
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.6"/>\n'
        )
        ly = _MARGIN_T + 14 + 15 * k
        parts.append(
            f'<line x1="{_WIDTH - _MARGIN_R - 110}" y1="{ly - 4}" '
            f'x2="{_WIDTH - _MARGIN_R - 90}" y2="{ly - 4}" stroke="{color}" '
            f'stroke-width="2"/>\n'
            f'<text x="{_WIDTH - _MARGIN_R - 84}" y="{ly}" font-size="11">'
            f'{label}</text>\n'
        )
    if title:
        parts.append(
            f'<text x="{_WIDTH / 2}" y="18" font-size="13" '
            f'text-anchor="middle">{title}</text>\n'
        )
    if xlabel:
        parts.append(
            f'<text x="{_WIDTH / 2}" y="{_HEIGHT - 8}" font-size="12" '
            f'text-anchor="middle">{xlabel}</text>\n'
        )
    if ylabel:
        parts.append(
            f'<text x="14" y="{_HEIGHT / 2}" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 14 {_HEIGHT / 2})">{ylabel}</text>\n'
        )
    _write(path, "".join(parts))


def heatmap(path, matrix, extent, title="", xlabel="", ylabel=""):
    """Write a heat map of a 2-d array; extent = (x_lo, x_hi, y_lo, y_hi)."""
    matrix = np.asarray(matrix, dtype=float)
    lo, hi = float(matrix.min()), float(matrix.max())
    if hi <= lo:
        hi = lo + 1.0
    ny, nx = matrix.shape
    plot_w = _WIDTH - _MARGIN_L - _MARGIN_R
    plot_h = _HEIGHT - _MARGIN_T - _MARGIN_B
    cw, ch = plot_w / nx, plot_h / ny
    parts = []
    for i in range(ny):
        for j in range(nx):
            color = _color_of((matrix[i, j] - lo) / (hi - lo))
            px = _MARGIN_L + j * cw
            py = _MARGIN_T + plot_h - (i + 1) * ch
            parts.append(
                f'<rect x="{_fmt(px)}" y="{_fmt(py)}" width="{_fmt(cw + 0.5)}" '
                f'height="{_fmt(ch + 0.5)}" fill="{color}"/>\n'
            )
    parts.append(
        f'<rect x="{_MARGIN_L}" y="{_MARGIN_T}" width="{plot_w}" '
        f'height="{plot_h}" fill="none" stroke="#444"/>\n'
    )
    x_lo, x_hi, y_lo, y_hi = extent
    parts.append(
        f'<text x="{_MARGIN_L}" y="{_MARGIN_T + plot_h + 18}" font-size="11" '
        f'text-anchor="middle">{_fmt(x_lo)}</text>\n'
        f'<text x="{_MARGIN_L + plot_w}" y="{_MARGIN_T + plot_h + 18}" '
        f'font-size="11" text-anchor="middle">{_fmt(x_hi)}</text>\n'
        f'<text x="{_MARGIN_L - 8}" y="{_MARGIN_T + plot_h}" font-size="11" '
        f'text-anchor="end">{_fmt(y_lo)}</text>\n'
        f'<text x="{_MARGIN_L - 8}" y="{_MARGIN_T + 10}" font-size="11" '
        f'text-anchor="end">{_fmt(y_hi)}</text>\n'
    )
    if title:
        parts.append(
            f'<text x="{_WIDTH / 2}" y="18" font-size="13" '
            f'text-anchor="middle">{title}</text>\n'
        )
    if xlabel:
        parts.append(
            f'<text x="{_WIDTH / 2}" y="{_HEIGHT - 8}" font-size="12" '
            f'text-anchor="middle">{xlabel}</text>\n'
        )
    if ylabel:
        parts.append(
            f'<text x="14" y="{_HEIGHT / 2}" font-size="12" text-anchor="middle" '
            f'transform="rotate(-90 14 {_HEIGHT / 2})">{ylabel}</text>\n'
        )
    _write(path, "".join(parts))
