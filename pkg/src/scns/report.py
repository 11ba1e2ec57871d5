"""Render diagnostic time series as CSV tables or standalone SVG charts.

The SVG output is a static, dependency-free line chart: the point is an
artifact for lab notebooks, not an interface.  Every number written by
this module is checked finite first.
"""

from __future__ import annotations

import csv
import math
import os

import numpy as np

# one CSV per diagnostic family; header rows repeat the record field names
FAMILIES = {
    "conservation": ("t", "mass_n", "linf_c"),
    "entropy": ("t", "entropy", "grad_psi_energy", "kinetic"),
    "dissipation": ("t", "diss_n", "diss_c4", "diss_lap", "diss_u"),
    "martingale": ("t", "me_inc"),
    "auxiliary": ("t", "aux_grad_sqrt_n", "aux_grad_c14", "aux_n_l53",
                  "aux_u_l103"),
    "boundary": ("t", "ms_ratio"),
}

_PALETTE = ("#1f6fb2", "#c23b22", "#2e8540", "#8a5fb0", "#b8860b",
            "#3b7f8c")


def _finite(value, label):
    value = float(value)
    if not math.isfinite(value):
        raise FloatingPointError(f"non-finite value for {label}: {value!r}")
    return value


def emit_csv(records, outdir):
    """Write one CSV per family; returns the list of paths written."""
    os.makedirs(outdir, exist_ok=True)
    written = []
    for family, names in FAMILIES.items():
        rows = []
        for rec in records:
            row = [getattr(rec, name) for name in names]
            if any(v is None for v in row):
                rows = []
                break
            rows.append([_finite(v, name) for v, name in zip(row, names)])
        if not rows:
            continue
        path = os.path.join(outdir, f"{family}.csv")
        with open(path, "w", newline="", encoding="utf-8") as sink:
            writer = csv.writer(sink)
            writer.writerow(names)
            writer.writerows(rows)
        written.append(path)
    return written


def _ticks(lo, hi, count=5):
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _fmt(value):
    return f"{value:.5g}"


def render_line_chart(title, x, series, band=None, x_label="t"):
    """Build a standalone SVG line chart as a string.

    series maps legend labels to y-arrays; band, when given, is a pair
    (low, high) of arrays drawn as a shaded region behind the lines.
    """
    x = [_finite(v, "x") for v in x]
    named = {label: [_finite(v, label) for v in ys]
             for label, ys in series.items()}
    for label, ys in named.items():
        if len(ys) != len(x):
            raise ValueError(f"series {label!r} has {len(ys)} points for "
                             f"{len(x)} abscissae")
    all_y = [v for ys in named.values() for v in ys]
    if band is not None:
        lo_band = [_finite(v, "band-low") for v in band[0]]
        hi_band = [_finite(v, "band-high") for v in band[1]]
        all_y += lo_band + hi_band
    x_lo, x_hi = min(x), max(x)
    y_lo, y_hi = min(all_y), max(all_y)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    pad = 0.05 * (y_hi - y_lo) or 1.0
    y_lo, y_hi = y_lo - pad, y_hi + pad

    width, height = 720, 420
    left, right, top, bottom = 80, 24, 40, 48
    plot_w, plot_h = width - left - right, height - top - bottom

    def sx(v):
        return left + (v - x_lo) / (x_hi - x_lo) * plot_w

    def sy(v):
        return top + (y_hi - v) / (y_hi - y_lo) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2}" y="24" text-anchor="middle" '
        f'font-family="sans-serif" font-size="15">{title}</text>',
    ]
    if band is not None:
        points = [f"{sx(xx):.2f},{sy(yy):.2f}"
                  for xx, yy in zip(x, lo_band)]
        points += [f"{sx(xx):.2f},{sy(yy):.2f}"
                   for xx, yy in zip(reversed(x), reversed(hi_band))]
        parts.append(f'<polygon points="{" ".join(points)}" '
                     f'fill="#9ecbe8" fill-opacity="0.45" stroke="none"/>')
    # axes and ticks
    parts.append(f'<line x1="{left}" y1="{top}" x2="{left}" '
                 f'y2="{top + plot_h}" stroke="black"/>')
    parts.append(f'<line x1="{left}" y1="{top + plot_h}" '
                 f'x2="{left + plot_w}" y2="{top + plot_h}" '
                 f'stroke="black"/>')
    for tick in _ticks(x_lo, x_hi):
        parts.append(f'<line x1="{sx(tick):.2f}" y1="{top + plot_h}" '
                     f'x2="{sx(tick):.2f}" y2="{top + plot_h + 5}" '
                     f'stroke="black"/>')
        parts.append(f'<text x="{sx(tick):.2f}" y="{top + plot_h + 20}" '
                     f'text-anchor="middle" font-family="sans-serif" '
                     f'font-size="11">{_fmt(tick)}</text>')
    for tick in _ticks(y_lo, y_hi):
        parts.append(f'<line x1="{left - 5}" y1="{sy(tick):.2f}" '
                     f'x2="{left}" y2="{sy(tick):.2f}" stroke="black"/>')
        parts.append(f'<text x="{left - 8}" y="{sy(tick):.2f}" '
                     f'text-anchor="end" dominant-baseline="middle" '
                     f'font-family="sans-serif" font-size="11">'
                     f'{_fmt(tick)}</text>')
    parts.append(f'<text x="{left + plot_w / 2}" y="{height - 8}" '
                 f'text-anchor="middle" font-family="sans-serif" '
                 f'font-size="12">{x_label}</text>')
    for index, (label, ys) in enumerate(named.items()):
        color = _PALETTE[index % len(_PALETTE)]
        points = " ".join(f"{sx(xx):.2f},{sy(yy):.2f}"
                          for xx, yy in zip(x, ys))
        parts.append(f'<polyline points="{points}" fill="none" '
                     f'stroke="{color}" stroke-width="1.6"/>')
        parts.append(f'<text x="{left + plot_w - 4}" '
                     f'y="{top + 16 + 16 * index}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="12" '
                     f'fill="{color}">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts)


def emit_svg(records, outdir):
    """Standalone charts of the entropy, dissipation, and martingale
    series of one run; returns the list of paths written."""
    os.makedirs(outdir, exist_ok=True)
    t = [rec.t for rec in records]
    written = []

    def chart(name, title, series, band=None):
        path = os.path.join(outdir, f"{name}.svg")
        with open(path, "w", encoding="utf-8") as sink:
            sink.write(render_line_chart(title, t, series, band=band))
            sink.write("\n")
        written.append(path)

    chart("entropy", "entropy-energy components", {
        "entropy": [rec.entropy for rec in records],
        "grad-psi energy": [rec.grad_psi_energy for rec in records],
        "kinetic": [rec.kinetic for rec in records],
    })
    chart("dissipation", "dissipation components", {
        "fisher": [rec.diss_n for rec in records],
        "grad-c quartic": [rec.diss_c4 for rec in records],
        "laplacian": [rec.diss_lap for rec in records],
        "velocity": [rec.diss_u for rec in records],
    })
    me = np.cumsum([rec.me_inc for rec in records])
    chart("martingale", "cumulative martingale term", {
        "M_E": list(me),
    })
    return written


def emit_ensemble_svg(times, me_mean, me_stderr, outdir,
                      band_width=4.0):
    """Pooled martingale mean with a +-band_width stderr CI band."""
    os.makedirs(outdir, exist_ok=True)
    mean = np.asarray(me_mean, dtype=float)
    err = np.asarray(me_stderr, dtype=float)
    band = (mean - band_width * err, mean + band_width * err)
    path = os.path.join(outdir, "martingale_ensemble.svg")
    svg = render_line_chart(
        f"pooled martingale mean (band: +-{band_width:g} stderr)",
        list(times), {"mean M_E": list(mean)}, band=band)
    with open(path, "w", encoding="utf-8") as sink:
        sink.write(svg)
        sink.write("\n")
    return path


def emit_ensemble_csv(times, me_mean, me_stderr, outdir):
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "martingale_ensemble.csv")
    with open(path, "w", newline="", encoding="utf-8") as sink:
        writer = csv.writer(sink)
        writer.writerow(("t", "me_mean", "me_stderr"))
        for row in zip(times, me_mean, me_stderr):
            writer.writerow([_finite(v, "ensemble") for v in row])
    return path
