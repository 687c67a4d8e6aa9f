"""Static SVG rendering of deferral curves: axes, polylines and error bars."""

from __future__ import annotations

from xml.sax.saxutils import escape

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
           "#7f7f7f", "#17becf", "#e377c2")
WIDTH, HEIGHT = 640, 420
MARGIN = {"left": 64, "right": 170, "top": 36, "bottom": 52}


def _nice_range(lo, hi):
    pad = max(0.005, 0.05 * (hi - lo))
    return max(0.0, lo - pad), min(1.0, hi + pad)


def curves_svg(curves, title="", width=WIDTH, height=HEIGHT) -> str:
    """Accuracy (y) against realized deferral rate (x), one polyline per curve."""
    pw = width - MARGIN["left"] - MARGIN["right"]
    ph = height - MARGIN["top"] - MARGIN["bottom"]
    ys = [p.accuracy + s * p.std for c in curves for p in c.points for s in (-1, 1)]
    y0, y1 = _nice_range(min(ys, default=0.0), max(ys, default=1.0))
    if y1 - y0 < 1e-9:
        y0, y1 = max(0.0, y0 - 0.01), min(1.0, y1 + 0.01)

    def sx(v):
        return MARGIN["left"] + v * pw

    def sy(v):
        return MARGIN["top"] + (1.0 - (v - y0) / (y1 - y0)) * ph

    el = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
          f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
          f'<rect width="{width}" height="{height}" fill="white"/>']
    x_axis = sy(y0)
    el.append(f'<line x1="{sx(0):.2f}" y1="{x_axis:.2f}" x2="{sx(1):.2f}" y2="{x_axis:.2f}" '
              'stroke="black"/>')
    el.append(f'<line x1="{sx(0):.2f}" y1="{sy(y1):.2f}" x2="{sx(0):.2f}" y2="{x_axis:.2f}" '
              'stroke="black"/>')
    for i in range(6):
        xv = i / 5
        el.append(f'<line x1="{sx(xv):.2f}" y1="{x_axis:.2f}" x2="{sx(xv):.2f}" '
                  f'y2="{x_axis + 4:.2f}" stroke="black"/>')
        el.append(f'<text x="{sx(xv):.2f}" y="{x_axis + 16:.2f}" '
                  f'text-anchor="middle">{xv:.1f}</text>')
        yv = y0 + i * (y1 - y0) / 5
        el.append(f'<line x1="{sx(0) - 4:.2f}" y1="{sy(yv):.2f}" x2="{sx(0):.2f}" '
                  f'y2="{sy(yv):.2f}" stroke="black"/>')
        el.append(f'<text x="{sx(0) - 7:.2f}" y="{sy(yv) + 4:.2f}" '
                  f'text-anchor="end">{yv:.3f}</text>')
    el.append(f'<text x="{sx(0.5):.2f}" y="{height - 12}" text-anchor="middle">'
              'deferral rate</text>')
    el.append(f'<text transform="translate(16 {sy((y0 + y1) / 2):.2f}) rotate(-90)" '
              'text-anchor="middle">system accuracy</text>')
    if title:
        el.append(f'<text x="{width / 2:.2f}" y="20" text-anchor="middle" '
                  f'font-size="13">{escape(title)}</text>')
    for k, c in enumerate(curves):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{sx(p.realized_rate):.2f},{sy(p.accuracy):.2f}" for p in c.points)
        dash = ' stroke-dasharray="5 3"' if c.method in ("random", "chow-oracle") else ""
        el.append(f'<polyline points="{pts}" fill="none" stroke="{color}" '
                  f'stroke-width="1.6"{dash}/>')
        for p in c.points:
            if p.std > 0:
                x = sx(p.realized_rate)
                el.append(f'<line x1="{x:.2f}" y1="{sy(p.accuracy - p.std):.2f}" x2="{x:.2f}" '
                          f'y2="{sy(p.accuracy + p.std):.2f}" stroke="{color}"/>')
        ly = MARGIN["top"] + 16 * k
        lx = width - MARGIN["right"] + 14
        el.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 18}" y2="{ly}" stroke="{color}" '
                  f'stroke-width="2"{dash}/>')
        el.append(f'<text x="{lx + 24}" y="{ly + 4}">{escape(c.method)}</text>')
    el.append("</svg>")
    return "\n".join(el) + "\n"
