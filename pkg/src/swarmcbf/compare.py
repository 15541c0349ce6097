"""Side-by-side runs of the decentralized QP and the truncated-series
centralized law on a time-varying density."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .scenario import Scenario, build_world, initial_snapshot, run
from .tasks import tvd_neumann_control


@dataclass
class TrackingComparison:
    t: np.ndarray
    qp_error: np.ndarray        # (steps, N)
    neumann_error: np.ndarray   # (steps, N)
    steady_fraction: float

    def _steady(self, err):
        start = int(len(err) * (1.0 - self.steady_fraction))
        return float(err[start:].mean())

    @property
    def qp_steady(self) -> float:
        return self._steady(self.qp_error)

    @property
    def neumann_steady(self) -> float:
        return self._steady(self.neumann_error)

    @property
    def qp_max_mean(self) -> float:
        """Largest per-step mean error of the QP run."""
        return float(self.qp_error.mean(axis=1).max())


def run_neumann(sc: Scenario) -> np.ndarray:
    """Euler-integrate u = (I + dG/dx)((G - x) + dG/dt); returns ||x_i - G_i|| per step."""
    world = build_world(sc)
    x = initial_snapshot(sc, world).positions.copy()
    errs = []
    for k in range(sc.n_steps):
        t = k * sc.dt
        cells = geo.voronoi_partition(world.domain, x, world.density, t, world.resolution)
        errs.append([np.linalg.norm(x[c.owner] - c.centroid) for c in cells])
        u = tvd_neumann_control(x, world.domain, world.density, t, world.fd_step,
                                world.time_fd_step, world.resolution)
        x = np.array([geo.project_to_polygon(world.domain, p) for p in x + sc.dt * u])
    return np.array(errs)


def compare_tvd(sc: Scenario, steady_fraction: float = 0.5) -> TrackingComparison:
    """Run both controllers from the same initial state; steady = last ``steady_fraction``."""
    if sc.task != "tvd_coverage":
        raise ValueError("comparison needs a tvd_coverage scenario")
    metrics = run(sc)
    return TrackingComparison(metrics.t, metrics.tracking_error(), run_neumann(sc), steady_fraction)
