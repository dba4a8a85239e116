"""SVG picture of a 2-D state: points, separating lines and their normals."""

from __future__ import annotations

from typing import List, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

from hypersep.errors import DimensionError

WIDTH = 640
HEIGHT = 640
MARGIN = 30
PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def clip_line(c: float, a: Sequence[float], box: Tuple[float, float, float, float]) -> Optional[tuple]:
    """Segment of ``c + a0 x + a1 y = 0`` inside the box, or None if it misses."""
    x0, y0, x1, y1 = box
    a0, a1 = float(a[0]), float(a[1])
    hits = []
    if a1 != 0:
        for x in (x0, x1):
            y = -(c + a0 * x) / a1
            if y0 <= y <= y1:
                hits.append((x, y))
    if a0 != 0:
        for y in (y0, y1):
            x = -(c + a1 * y) / a0
            if x0 <= x <= x1:
                hits.append((x, y))
    uniq: List[tuple] = []
    for h in hits:
        if all(abs(h[0] - u[0]) + abs(h[1] - u[1]) > 1e-12 for u in uniq):
            uniq.append(h)
    if len(uniq) < 2:
        return None
    return uniq[0], uniq[1]


def render(points, planes, title: str = "") -> str:
    """SVG markup; one circle per point, one line and normal arrow per plane."""
    points = list(points)
    planes = list(planes)
    for obj in points:
        if len(obj.coords) != 2:
            raise DimensionError("plots are only drawn for 2-D states")
    for pl in planes:
        if len(pl.coeffs) != 2:
            raise DimensionError("plots are only drawn for 2-D states")
    if points:
        X = np.array([np.asarray(p.coords, dtype=float) for p in points])
        lo, hi = X.min(axis=0), X.max(axis=0)
    else:
        lo, hi = np.array([-1.0, -1.0]), np.array([1.0, 1.0])
    pad = np.maximum((hi - lo) * 0.1, 1.0)
    lo, hi = lo - pad, hi + pad
    box = (lo[0], lo[1], hi[0], hi[1])
    sx = (WIDTH - 2 * MARGIN) / (hi[0] - lo[0])
    sy = (HEIGHT - 2 * MARGIN) / (hi[1] - lo[1])

    def px(x, y):
        return MARGIN + (x - lo[0]) * sx, HEIGHT - MARGIN - (y - lo[1]) * sy

    labels = sorted({p.label for p in points})
    colour = {lab: PALETTE[i % len(PALETTE)] for i, lab in enumerate(labels)}
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        "<defs><marker id=\"arrow\" markerWidth=\"8\" markerHeight=\"8\" refX=\"6\" refY=\"3\" "
        "orient=\"auto\"><path d=\"M0,0 L6,3 L0,6 z\" fill=\"black\"/></marker></defs>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{MARGIN}" y="20" font-size="14">{escape(title)}</text>')
    for j, pl in enumerate(planes):
        seg = clip_line(float(pl.constant), pl.coeffs, box)
        if seg is None:
            continue
        (xa, ya), (xb, yb) = seg
        (pa, qa), (pb, qb) = px(xa, ya), px(xb, yb)
        out.append(f'<line class="plane" data-index="{j}" x1="{pa:.2f}" y1="{qa:.2f}" '
                   f'x2="{pb:.2f}" y2="{qb:.2f}" stroke="black" stroke-width="1"/>')
        # the normal points toward the positive side
        a = np.asarray(pl.coeffs, dtype=float)
        u = a / np.linalg.norm(a)
        mx, my = (xa + xb) / 2, (ya + yb) / 2
        step = 0.04 * float(np.min(hi - lo))
        (na, nb), (ma, mb) = px(mx, my), px(mx + step * u[0], my + step * u[1])
        out.append(f'<line class="normal" x1="{na:.2f}" y1="{nb:.2f}" x2="{ma:.2f}" y2="{mb:.2f}" '
                   f'stroke="black" marker-end="url(#arrow)"/>')
        out.append(f'<text class="plane-label" x="{pa + 3:.2f}" y="{qa - 3:.2f}" font-size="10">{j + 1}</text>')
    for p in points:
        cx, cy = px(*np.asarray(p.coords, dtype=float))
        fill = colour.get(p.label, PALETTE[0])
        name = f"{p.label}{p.id}" if p.label else str(p.id)
        out.append(f'<circle class="point" data-id="{p.id}" cx="{cx:.2f}" cy="{cy:.2f}" r="4" fill="{fill}"/>')
        out.append(f'<text x="{cx + 5:.2f}" y="{cy - 5:.2f}" font-size="10">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_state(state, path, title: str = "") -> None:
    if state.n != 2:
        raise DimensionError(f"plots are only drawn for 2-D states, this one has n={state.n}")
    pts = [state.points[pid] for pid in sorted(state.points) if state.status[pid] != "D"]
    svg = render(pts, state.planes, title)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
