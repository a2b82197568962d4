"""Dependency-free SVG log-log scaling plots. CSV is the contract; this is a convenience."""

from __future__ import annotations

import math

_PALETTE = ("#1f6f8b", "#c05746", "#5b8c5a", "#7a5195", "#b8860b")


def _ticks(lo: float, hi: float):
    """Decade ticks covering [lo, hi] in log10 space."""
    start = math.floor(math.log10(lo))
    stop = math.ceil(math.log10(hi))
    return [10.0**e for e in range(start, stop + 1)]


def scaling_svg(path: str, series: list, title: str = "scaling"):
    """Write a log-log plot of cost vs N.

    series: list of dicts with keys name, ns, means, and optional fit
    (slope, intercept) drawn as a line in log space.
    """
    W, H = 720, 520
    ml, mr, mt, mb = 70, 20, 40, 55
    pw, ph = W - ml - mr, H - mt - mb

    xs = [x for s in series for x in s["ns"]]
    ys = [y for s in series for y in s["means"] if y > 0]
    if not xs or not ys:
        raise ValueError("nothing to plot")
    lx0, lx1 = math.log10(min(xs)), math.log10(max(xs))
    ly0, ly1 = math.log10(min(ys)), math.log10(max(ys))
    if lx1 == lx0:
        lx1 = lx0 + 1
    pad = 0.05 * (ly1 - ly0 + 1e-9) + 0.1
    ly0, ly1 = ly0 - pad, ly1 + pad

    def X(v):
        return ml + (math.log10(v) - lx0) / (lx1 - lx0) * pw

    def Y(v):
        return mt + ph - (math.log10(v) - ly0) / (ly1 - ly0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}" font-family="monospace" font-size="12">',
        f'<rect width="{W}" height="{H}" fill="white"/>',
        f'<text x="{W/2}" y="24" text-anchor="middle" font-size="15">{title}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>',
    ]
    for t in _ticks(min(xs), max(xs)):
        if not (10**lx0 - 1e-12 <= t <= 10**lx1 + 1e-12):
            continue
        x = X(t)
        parts.append(f'<line x1="{x:.1f}" y1="{mt}" x2="{x:.1f}" y2="{mt+ph}" stroke="#ddd"/>')
        parts.append(
            f'<text x="{x:.1f}" y="{mt+ph+18}" text-anchor="middle">1e{int(math.log10(t))}</text>'
        )
    for t in _ticks(10**ly0, 10**ly1):
        if not (10**ly0 <= t <= 10**ly1):
            continue
        y = Y(t)
        parts.append(f'<line x1="{ml}" y1="{y:.1f}" x2="{ml+pw}" y2="{y:.1f}" stroke="#ddd"/>')
        parts.append(
            f'<text x="{ml-8}" y="{y+4:.1f}" text-anchor="end">1e{int(math.log10(t))}</text>'
        )
    parts.append(
        f'<text x="{ml+pw/2}" y="{H-14}" text-anchor="middle">N (log)</text>'
    )
    parts.append(
        f'<text x="18" y="{mt+ph/2}" text-anchor="middle" '
        f'transform="rotate(-90 18 {mt+ph/2})">cost (log)</text>'
    )

    for i, s in enumerate(series):
        color = _PALETTE[i % len(_PALETTE)]
        fit = s.get("fit")
        if fit is not None:
            slope, intercept = fit
            n0, n1 = min(s["ns"]), max(s["ns"])
            y0 = math.exp(intercept + slope * math.log(n0))
            y1 = math.exp(intercept + slope * math.log(n1))
            if y0 > 0 and y1 > 0:
                parts.append(
                    f'<line x1="{X(n0):.1f}" y1="{Y(y0):.1f}" x2="{X(n1):.1f}" '
                    f'y2="{Y(y1):.1f}" stroke="{color}" stroke-dasharray="5 4"/>'
                )
        for n, m in zip(s["ns"], s["means"]):
            if m <= 0:
                continue
            parts.append(f'<circle cx="{X(n):.1f}" cy="{Y(m):.1f}" r="4" fill="{color}"/>')
        ly = mt + 16 + 16 * i
        parts.append(f'<circle cx="{ml+12}" cy="{ly-4}" r="4" fill="{color}"/>')
        parts.append(f'<text x="{ml+22}" y="{ly}">{s["name"]}</text>')

    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
