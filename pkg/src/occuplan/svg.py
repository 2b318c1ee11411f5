"""Minimal SVG emitter: region rectangles and time-colored trajectory segments."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

# viridis anchors
_CMAP = np.array([[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], float)
_REGION_COLORS = ["#d62728", "#2ca02c", "#1f77b4", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"]


def time_color(s: float) -> str:
    """Colormap lookup for ``s`` in [0, 1]."""
    s = float(np.clip(s, 0.0, 1.0)) * (len(_CMAP) - 1)
    k = min(int(s), len(_CMAP) - 2)
    rgb = _CMAP[k] + (s - k) * (_CMAP[k + 1] - _CMAP[k])
    return "#" + "".join(f"{int(round(v)):02x}" for v in rgb)


def _finite_box(s, dims=(0, 1)):
    lo, hi = s.box_bounds()
    lo, hi = lo[list(dims)], hi[list(dims)]
    return lo, hi


def render(regions: dict, segments: list, world: tuple, size: int = 480) -> str:
    """SVG document text.

    ``regions`` maps names to ``(lo, hi)`` 2-D boxes (infinite sides are
    clipped to ``world``); ``segments`` is a list of ``(t, xy)`` arrays, one
    path each.
    """
    wlo, whi = (np.asarray(v, float) for v in world)
    span = np.maximum(whi - wlo, 1e-9)
    scale = size / span.max()
    W, H = span * scale
    pad = 10.0

    def px(p):
        # flip y so that up is up
        return pad + (p[0] - wlo[0]) * scale, pad + (whi[1] - p[1]) * scale

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W + 2 * pad:.1f}" height="{H + 2 * pad:.1f}" '
        f'viewBox="0 0 {W + 2 * pad:.1f} {H + 2 * pad:.1f}">',
        f'<rect x="{pad}" y="{pad}" width="{W:.2f}" height="{H:.2f}" fill="white" stroke="black" stroke-width="1"/>',
    ]
    for k, (name, (lo, hi)) in enumerate(sorted(regions.items())):
        lo = np.maximum(np.where(np.isfinite(lo), lo, wlo), wlo)
        hi = np.minimum(np.where(np.isfinite(hi), hi, whi), whi)
        if np.any(hi <= lo):
            continue
        x, y = px((lo[0], hi[1]))
        w, h = (hi - lo) * scale
        color = _REGION_COLORS[k % len(_REGION_COLORS)]
        out.append(
            f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="{color}" '
            f'fill-opacity="0.25" stroke="{color}"><title>{escape(str(name))}</title></rect>'
        )
    t_all = [t for t, _ in segments if len(t)]
    t_lo = min((float(t.min()) for t in t_all), default=0.0)
    t_hi = max((float(t.max()) for t in t_all), default=1.0)
    for t, xy in segments:
        if len(xy) == 0:
            continue
        pts = " L ".join("{:.2f} {:.2f}".format(*px(p)) for p in xy)
        s = (float(np.mean(t)) - t_lo) / max(t_hi - t_lo, 1e-12)
        out.append(f'<path d="M {pts}" fill="none" stroke="{time_color(s)}" stroke-width="2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_run(res, path) -> Path:
    """Plot the recovered trajectory (or the rollout) of a pipeline run."""
    scn = res.scenario
    path = Path(path)
    n = scn.state_dim
    dims = (0, 1) if n >= 2 else (0, 0)
    regions = {}
    for name, s in scn.regions().items():
        regions[name] = _finite_box(s, dims)
    bounds = scn.bounds()
    if bounds is not None:
        wlo, whi = _finite_box(bounds, dims)
    else:
        boxes = list(regions.values())
        wlo = np.min([b[0] for b in boxes], axis=0) if boxes else np.full(2, -1.0)
        whi = np.max([b[1] for b in boxes], axis=0) if boxes else np.full(2, 1.0)
    segments = _segments(res, dims)
    pts = [xy for _, xy in segments if len(xy)]
    if pts:
        allp = np.vstack(pts)
        wlo = np.where(np.isfinite(wlo), wlo, allp.min(axis=0))
        whi = np.where(np.isfinite(whi), whi, allp.max(axis=0))
    wlo = np.where(np.isfinite(wlo), wlo, -1.0)
    whi = np.where(np.isfinite(whi), whi, 1.0)
    if n < 2:
        # 1-D systems: plot the state against time
        segments = [(t, np.column_stack([t, xy[:, 0]])) for t, xy in segments]
        t_end = max((float(t.max()) for t, _ in segments if len(t)), default=1.0)
        wlo, whi = np.array([0.0, wlo[0]]), np.array([max(t_end, 1e-9), whi[0]])
        regions = {}
    path.write_text(render(regions, segments, (wlo, whi)))
    return path


def _segments(res, dims) -> list:
    out = []
    if res.recovered is not None:
        rec = res.recovered
        t0 = 0.0
        for k, (_, xs, _) in enumerate(rec.segments):
            t = t0 + rec.h[k] * np.arange(len(xs))
            out.append((t, xs[:, list(dims)]))
            t0 = t[-1]
        return out
    traj = res.trajectory
    if traj is None or len(traj.t) == 0:
        return out
    start = 0
    for k in range(1, len(traj.t) + 1):
        if k == len(traj.t) or traj.mode[k] != traj.mode[start]:
            # include the first point of the next segment so paths connect
            stop = min(k + 1, len(traj.t))
            out.append((traj.t[start:stop], traj.x[start:stop][:, list(dims)]))
            start = k
    return out
