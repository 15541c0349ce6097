"""Run artifacts: metric CSV, trajectory CSV, JSON header, SVG frames and energy chart."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Optional
from xml.sax.saxutils import escape

import numpy as np

from . import __version__
from . import geometry as geo
from .engine import RunMetrics, World, sensing_graph
from .scenario import Scenario

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"]


def _fmt(v) -> str:
    v = float(v)
    if math.isnan(v) or math.isinf(v):
        return "nan"
    return repr(v)


def metric_columns(n: int, with_energy: bool) -> list:
    """Fixed column order of metrics.csv."""
    cols = ["t", "J"] + [f"J_{i}" for i in range(n)] + [f"delta_{i}" for i in range(n)]
    cols += ["min_h_energy", "min_h_obstacle"]
    if with_energy:
        cols += [f"E_{i}" for i in range(n)]
    return cols


def write_metrics_csv(path, metrics: RunMetrics, n: int, with_energy: bool):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(metric_columns(n, with_energy))
        for k in range(metrics.n_steps):
            row = [metrics.t[k], metrics.cost[k], *metrics.costs[k], *metrics.deltas[k],
                   metrics.min_h_energy[k], metrics.min_h_obstacle[k]]
            if with_energy:
                row += list(metrics.energies[k])
            w.writerow([_fmt(v) for v in row])


def write_trajectory_csv(path, metrics: RunMetrics, n: int):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        cols = ["t"]
        for i in range(n):
            cols += [f"x_{i}", f"y_{i}", f"theta_{i}"]
        w.writerow(cols)
        for k in range(metrics.n_steps):
            row = [metrics.t[k]]
            for i in range(n):
                row += [*metrics.positions[k, i], metrics.headings[k, i]]
            w.writerow([_fmt(v) for v in row])


def run_header(sc: Scenario, metrics: Optional[RunMetrics]) -> dict:
    """Effective configuration plus a run summary."""
    head = {"version": __version__, "scenario": sc.to_dict()}
    if metrics is not None:
        head["summary"] = {
            "steps": metrics.n_steps,
            "final_cost": None if math.isnan(metrics.final_cost) else metrics.final_cost,
            "settling_time": metrics.settling_time,
            "aborted": metrics.aborted,
            "eps_int_energy": metrics.integration_tolerance("energy"),
            "eps_int_obstacle": metrics.integration_tolerance("obstacle"),
        }
    return head


def write_header(path, sc: Scenario, metrics: Optional[RunMetrics]):
    with open(path, "w") as fh:
        json.dump(run_header(sc, metrics), fh, indent=2, sort_keys=True)
        fh.write("\n")


# -- SVG ---------------------------------------------------------------------

class _Canvas:
    """Maps world coordinates (y up) into an SVG viewport (y down)."""

    def __init__(self, domain: geo.ConvexPolygon, width: int = 640, margin: int = 20):
        lo = domain.vertices.min(axis=0)
        hi = domain.vertices.max(axis=0)
        span = hi - lo
        self.scale = (width - 2 * margin) / span[0]
        self.lo, self.hi, self.margin = lo, hi, margin
        self.width = width
        self.height = int(round(span[1] * self.scale + 2 * margin))
        self.items = []

    def xy(self, p):
        x = self.margin + (p[0] - self.lo[0]) * self.scale
        y = self.margin + (self.hi[1] - p[1]) * self.scale
        return x, y

    def polygon(self, pts, **style):
        s = " ".join("%.2f,%.2f" % self.xy(p) for p in pts)
        self.items.append(f'<polygon points="{s}" {_style(style)}/>')

    def line(self, a, b, **style):
        (x1, y1), (x2, y2) = self.xy(a), self.xy(b)
        self.items.append(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" {_style(style)}/>')

    def circle(self, c, r_world=None, r_px=None, **style):
        x, y = self.xy(c)
        r = r_px if r_px is not None else r_world * self.scale
        self.items.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{r:.2f}" {_style(style)}/>')

    def text(self, p, s, px_offset=(0, 0), size=12):
        x, y = self.xy(p)
        self.items.append(f'<text x="{x + px_offset[0]:.2f}" y="{y + px_offset[1]:.2f}" '
                          f'font-size="{size}" font-family="sans-serif">{escape(s)}</text>')

    def render(self) -> str:
        body = "\n".join(self.items)
        return (f'<?xml version="1.0" encoding="UTF-8"?>\n'
                f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
                f'width="{self.width}" height="{self.height}">\n{body}\n</svg>\n')


def _style(style: dict) -> str:
    return " ".join(f'{k.replace("_", "-")}="{v}"' for k, v in style.items())


def render_frame(world: World, metrics: RunMetrics, k: int) -> str:
    """One SVG snapshot of step ``k``."""
    cv = _Canvas(world.domain)
    cv.polygon(world.domain.vertices, fill="white", stroke="black", stroke_width=2)
    x = metrics.positions[k]
    t = float(metrics.t[k])
    n = len(x)
    if world.is_coverage:
        cells = geo.voronoi_partition(world.domain, x, world.density, t, world.resolution)
        for c in cells:
            if not c.polygon.is_empty:
                cv.polygon(c.polygon.vertices, fill=PALETTE[c.owner % len(PALETTE)],
                           fill_opacity="0.15", stroke="#555555", stroke_width=1)
            cv.circle(c.centroid, r_px=4, fill="#999999")
    else:
        graph = world.graph if world.graph is not None else sensing_graph(x, world.sensing_radius)
        for (i, j) in graph.edges:
            cv.line(x[i], x[j], stroke="#888888", stroke_width=1.5)
    for i, st in enumerate(world.stations):
        charging = bool(metrics.charging[k, i]) if metrics.charging.size else False
        cv.circle(st.xy, r_world=st.d_chg, fill="#ffd700" if charging else "#4a90d9",
                  stroke="black", stroke_width=1)
    for m, obs in enumerate(world.obstacles):
        p = metrics.obstacle_positions[k, m]
        cv.circle(p, r_world=obs.d_o, fill="none", stroke="#d62728", stroke_width=1.5,
                  stroke_dasharray="4,3")
        cv.circle(p, r_px=6, fill="#d62728")
    for i in range(n):
        cv.circle(x[i], r_px=7, fill=PALETTE[i % len(PALETTE)], stroke="black", stroke_width=1)
        cv.text(x[i], str(i), px_offset=(8, -8), size=11)
    cv.text(world.domain.vertices.min(axis=0), f"t = {t:.2f} s", px_offset=(4, -4), size=12)
    return cv.render()


def render_energy_chart(metrics: RunMetrics, e_min: float, e_chg: float,
                        width: int = 640, height: int = 360) -> str:
    """Energy of every robot over time, with horizontal E_min and E_chg rules."""
    pad_l, pad_r, pad_t, pad_b = 50, 20, 20, 40
    t = metrics.t
    t_max = float(t[-1]) if len(t) else 1.0
    t_max = t_max if t_max > 0 else 1.0
    y_lo = min(0.0, e_min - 0.1)
    y_hi = max(1.0, e_chg + 0.05)

    def px(tv, ev):
        return (pad_l + (tv / t_max) * (width - pad_l - pad_r),
                pad_t + (y_hi - ev) / (y_hi - y_lo) * (height - pad_t - pad_b))

    items = [f'<rect x="{pad_l}" y="{pad_t}" width="{width - pad_l - pad_r}" '
             f'height="{height - pad_t - pad_b}" fill="white" stroke="black"/>']
    for level, name in ((e_min, "E_min"), (e_chg, "E_chg")):
        (x1, y), (x2, _) = px(0.0, level), px(t_max, level)
        items.append(f'<line x1="{x1:.2f}" y1="{y:.2f}" x2="{x2:.2f}" y2="{y:.2f}" '
                     f'stroke="black" stroke-width="3"/>')
        items.append(f'<text x="{pad_l - 45}" y="{y + 4:.2f}" font-size="11" '
                     f'font-family="sans-serif">{name}</text>')
    if metrics.n_steps and not np.all(np.isnan(metrics.energies)):
        stride = max(1, metrics.n_steps // 1000)
        for i in range(metrics.energies.shape[1]):
            pts = " ".join("%.2f,%.2f" % px(float(t[k]), float(metrics.energies[k, i]))
                           for k in range(0, metrics.n_steps, stride))
            items.append(f'<polyline points="{pts}" fill="none" '
                         f'stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="1.5"/>')
    x_lab, y_lab = px(t_max / 2, y_lo)
    items.append(f'<text x="{x_lab:.2f}" y="{y_lab + 30:.2f}" font-size="12" '
                 f'font-family="sans-serif" text-anchor="middle">time [s]</text>')
    body = "\n".join(items)
    return (f'<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
            f'width="{width}" height="{height}">\n{body}\n</svg>\n')


def emit_outputs(out_dir, sc: Scenario, world: World, metrics: RunMetrics, csv_files: bool = True,
                 svg: bool = False, frames_stride: int = 100) -> list:
    """Write the requested artifacts into ``out_dir``; returns the written paths."""
    if frames_stride < 1:
        raise ValueError("frames stride must be >= 1")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    n = sc.n_robots
    with_energy = bool(world.batteries_enabled)
    written = []
    p = out / "header.json"
    write_header(p, sc, metrics)
    written.append(p)
    if csv_files:
        p = out / "metrics.csv"
        write_metrics_csv(p, metrics, n, with_energy)
        written.append(p)
        p = out / "trajectory.csv"
        write_trajectory_csv(p, metrics, n)
        written.append(p)
    if svg:
        frames = out / "frames"
        frames.mkdir(exist_ok=True)
        for k in range(0, metrics.n_steps, frames_stride):
            p = frames / f"frame_{k:06d}.svg"
            p.write_text(render_frame(world, metrics, k))
            written.append(p)
        if with_energy:
            b = sc.survivability["battery"]
            p = out / "energy.svg"
            p.write_text(render_energy_chart(metrics, b["e_min"], b["e_chg"]))
            written.append(p)
    return written
