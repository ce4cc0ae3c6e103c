"""Minimal log-log SVG plot of a rate table."""
import math

import numpy as np

from .exceptions import InvalidArgumentError

WIDTH, HEIGHT = 640, 440
LEFT, RIGHT, TOP, BOTTOM = 80, 20, 30, 60


def _fmt(v):
    return f"{v:.2f}"


def _log_ticks(lo, hi):
    """Decade ticks covering ``[lo, hi]`` (natural-log inputs), with 2x and 5x fill-ins."""
    out = []
    for e in range(math.floor(lo / math.log(10)) - 1, math.ceil(hi / math.log(10)) + 1):
        for mult in (1, 2, 5):
            v = mult * 10.0**e
            if lo - 1e-12 <= math.log(v) <= hi + 1e-12:
                out.append(v)
    return out


def render_svg(table, fit=None, column="mean_rho_phi", stderr_column="stderr_phi"):
    """SVG document as a string; identical inputs give identical bytes."""
    rows = table.rows
    if len(rows) < 2:
        raise InvalidArgumentError("plotting needs at least 2 rows")
    n = np.array([r.n for r in rows], dtype=float)
    y = np.array([getattr(r, column) for r in rows], dtype=float)
    se = np.array([getattr(r, stderr_column) for r in rows], dtype=float)
    if np.any(y <= 0) or np.any(n <= 0):
        raise InvalidArgumentError("log-log plot needs positive n and positive values")
    lo_y = np.where(y - se > 0, y - se, y / 2.0)
    hi_y = y + se
    lx, ly_lo, ly_hi = np.log(n), np.log(lo_y), np.log(hi_y)
    xmin, xmax = lx.min(), lx.max()
    ymin, ymax = ly_lo.min(), ly_hi.max()
    padx = 0.05 * (xmax - xmin or 1.0)
    pady = 0.08 * (ymax - ymin or 1.0)
    xmin, xmax, ymin, ymax = xmin - padx, xmax + padx, ymin - pady, ymax + pady

    def px(v):
        return LEFT + (math.log(v) - xmin) / (xmax - xmin) * (WIDTH - LEFT - RIGHT)

    def py(v):
        return HEIGHT - BOTTOM - (math.log(v) - ymin) / (ymax - ymin) * (HEIGHT - TOP - BOTTOM)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<rect x="{LEFT}" y="{TOP}" width="{WIDTH - LEFT - RIGHT}" '
           f'height="{HEIGHT - TOP - BOTTOM}" fill="none" stroke="black"/>']
    for v in _log_ticks(xmin, xmax):
        x = _fmt(px(v))
        out.append(f'<line x1="{x}" y1="{HEIGHT - BOTTOM}" x2="{x}" y2="{HEIGHT - BOTTOM + 5}" '
                   'stroke="black"/>')
        out.append(f'<text x="{x}" y="{HEIGHT - BOTTOM + 18}" text-anchor="middle">{v:g}</text>')
    for v in _log_ticks(ymin, ymax):
        yv = _fmt(py(v))
        out.append(f'<line x1="{LEFT - 5}" y1="{yv}" x2="{LEFT}" y2="{yv}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{yv}" text-anchor="end" '
                   f'dominant-baseline="middle">{v:g}</text>')
    out.append(f'<text x="{(LEFT + WIDTH - RIGHT) / 2:.2f}" y="{HEIGHT - 15}" '
               'text-anchor="middle">n</text>')
    out.append(f'<text x="18" y="{(TOP + HEIGHT - BOTTOM) / 2:.2f}" text-anchor="middle" '
               f'transform="rotate(-90 18 {(TOP + HEIGHT - BOTTOM) / 2:.2f})">{column}</text>')

    pts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(n, y))
    out.append(f'<polyline points="{pts}" fill="none" stroke="#1f5fa8" stroke-width="1.5"/>')
    for a, b, l, h in zip(n, y, lo_y, hi_y):
        x = _fmt(px(a))
        out.append(f'<line x1="{x}" y1="{_fmt(py(l))}" x2="{x}" y2="{_fmt(py(h))}" '
                   'stroke="#1f5fa8"/>')
        out.append(f'<circle cx="{x}" cy="{_fmt(py(b))}" r="3" fill="#1f5fa8"/>')

    legend = [("#1f5fa8", f"{column} (bars: 1 stderr)")]
    if fit is not None:
        grid = np.exp(np.linspace(math.log(n.min()), math.log(n.max()), 64))
        curve = fit.C * grid**fit.alpha
        if fit.form == "power_times_log":
            curve = curve * np.log(grid)
        ok = curve > 0
        cpts = " ".join(f"{_fmt(px(a))},{_fmt(py(b))}" for a, b in zip(grid[ok], curve[ok]))
        out.append(f'<polyline points="{cpts}" fill="none" stroke="#c0392b" '
                   'stroke-dasharray="6,4" stroke-width="1.5"/>')
        shape = "C n^alpha" if fit.form == "power" else "C n^alpha log n"
        legend.append(("#c0392b", f"fit {fit.form}: {shape}, alpha={fit.alpha:.3f}, "
                                  f"r2={fit.r_squared:.3f}"))
    for i, (color, text) in enumerate(legend):
        yv = TOP + 16 + 16 * i
        out.append(f'<line x1="{WIDTH - RIGHT - 330}" y1="{yv}" x2="{WIDTH - RIGHT - 306}" '
                   f'y2="{yv}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{WIDTH - RIGHT - 300}" y="{yv}" '
                   f'dominant-baseline="middle">{text}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_svg(table, path, fit=None, column="mean_rho_phi", stderr_column="stderr_phi"):
    text = render_svg(table, fit, column, stderr_column)
    with open(path, "w", newline="\n") as fh:
        fh.write(text)
    return path
