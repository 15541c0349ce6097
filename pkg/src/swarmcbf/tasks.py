"""Multi-robot task encoders: local costs J_i and gradients dJ_i/dx_i.

Pairwise tasks (consensus, formation) sum over graph neighbors.  The global
cost is the double sum over ordered neighbor pairs, ``J = sum_i J_i``, so
for an undirected graph ``dJ/dx_i = 2 dJ_i/dx_i``.

Coverage tasks use J_i = 1/2 ||x_i - G_i||^2 with G_i the centroid of robot
i's Voronoi cell.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import geometry as geo
from .errors import CoincidentNeighbors, SingularJacobian

COINCIDENT_NEIGHBOR_TOL = 1e-9


@dataclass
class InteractionGraph:
    """Undirected graph with optional per-edge desired distances.

    ``edges`` maps ``(i, j)`` with ``i < j`` to d_ij (0 for consensus).
    """

    n: int
    edges: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for (i, j), d in self.edges.items():
            i, j = int(i), int(j)
            if i == j:
                raise ValueError("self-loops are not allowed")
            key = (min(i, j), max(i, j))
            if key in clean and clean[key] != float(d):
                raise ValueError(f"asymmetric desired distance on edge {key}")
            if d < 0:
                raise ValueError("desired distances must be nonnegative")
            clean[key] = float(d)
        self.edges = dict(sorted(clean.items()))

    @classmethod
    def from_pairs(cls, n, pairs, distance=0.0):
        return cls(n, {(i, j): distance for i, j in pairs})

    def neighbors(self, i: int) -> list:
        out = [j for (a, j) in self.edges if a == i] + [a for (a, j) in self.edges if j == i]
        return sorted(out)

    def distance(self, i: int, j: int) -> float:
        return self.edges[(min(i, j), max(i, j))]

    def has_edge(self, i: int, j: int) -> bool:
        return (min(i, j), max(i, j)) in self.edges


@dataclass
class TaskEvaluation:
    cost: float
    grad: np.ndarray
    extra_rhs: float = 0.0


# -- pairwise tasks ---------------------------------------------------------

def formation_eval(i: int, positions, graph: InteractionGraph) -> TaskEvaluation:
    """J_i = sum_j 1/2 (||x_i - x_j|| - d_ij)^2 and its gradient in x_i."""
    x = np.asarray(positions, dtype=float)
    cost = 0.0
    grad = np.zeros(x.shape[1])
    for j in graph.neighbors(i):
        d_ij = graph.distance(i, j)
        diff = x[i] - x[j]
        r = float(np.linalg.norm(diff))
        if r < COINCIDENT_NEIGHBOR_TOL:
            if d_ij > 0:
                raise CoincidentNeighbors(f"robots {i} and {j} coincide with d_ij={d_ij}")
            continue
        cost += 0.5 * (r - d_ij) ** 2
        grad += (r - d_ij) / r * diff
    return TaskEvaluation(cost, grad)


def formation_cost(positions, graph: InteractionGraph) -> float:
    """Global double-sum cost J = sum_i J_i."""
    return sum(formation_eval(i, positions, graph).cost for i in range(graph.n))


def formation_global_grad(positions, graph: InteractionGraph) -> np.ndarray:
    """dJ/dx stacked as (N, d), computed edge by edge."""
    x = np.asarray(positions, dtype=float)
    g = np.zeros_like(x)
    for (i, j), d_ij in graph.edges.items():
        diff = x[i] - x[j]
        r = float(np.linalg.norm(diff))
        if r < COINCIDENT_NEIGHBOR_TOL:
            continue
        # edge contributes 1/2 (r - d)^2 once from each endpoint's sum
        w = 2.0 * (r - d_ij) / r
        g[i] += w * diff
        g[j] -= w * diff
    return g


def consensus_eval(i: int, positions, graph: InteractionGraph) -> TaskEvaluation:
    """Formation with every d_ij = 0 regardless of the graph's distances."""
    zero = InteractionGraph(graph.n, {e: 0.0 for e in graph.edges})
    return formation_eval(i, positions, zero)


# -- coverage ---------------------------------------------------------------

def coverage_eval(i, positions, domain, density=None, t=0.0, cells=None, step=None,
                  resolution=geo.DEFAULT_RESOLUTION) -> TaskEvaluation:
    """J_i = 1/2 ||x_i - G_i||^2, grad = (x_i - G_i)^T (I - dG_i/dx_i).

    ``cells`` may carry a precomputed partition at ``positions``.
    """
    x = np.asarray(positions, dtype=float)
    if cells is not None:
        g_i = cells[i].centroid
    else:
        g_i = geo.cell_centroid(domain, x, i, density, t, resolution)
    e = x[i] - g_i
    jac = geo.centroid_jacobian_fd(domain, x, density, t, i, step=step, resolution=resolution)
    grad = e @ (np.eye(2) - jac)
    return TaskEvaluation(0.5 * float(e @ e), grad)


def tvd_coverage_eval(i, positions, domain, density, t=0.0, cells=None, step=None,
                      time_step=1e-4, resolution=geo.DEFAULT_RESOLUTION) -> TaskEvaluation:
    """Coverage under a time-varying density.

    Same cost and gradient as :func:`coverage_eval`; ``extra_rhs`` is
    ``-(x_i - G_i)^T dG_i/dt``, which the row adds to its right-hand side.
    """
    ev = coverage_eval(i, positions, domain, density, t, cells, step, resolution)
    x = np.asarray(positions, dtype=float)
    g_i = cells[i].centroid if cells is not None else geo.cell_centroid(domain, x, i, density, t, resolution)
    dgdt = geo.centroid_time_derivative_fd(domain, x, density, t, i, time_step, resolution)
    ev.extra_rhs = -float((x[i] - g_i) @ dgdt)
    return ev


def coverage_cost(positions, cells) -> float:
    x = np.asarray(positions, dtype=float)
    return sum(0.5 * float(((x[c.owner] - c.centroid) ** 2).sum()) for c in cells)


# -- centralized comparison controllers --------------------------------------

def _tvd_terms(positions, domain, density, t, step, time_step, resolution):
    x = np.asarray(positions, dtype=float)
    cells = geo.voronoi_partition(domain, x, density, t, resolution)
    G = np.array([c.centroid for c in cells])
    jac = geo.centroid_jacobian_full_fd(domain, x, density, t, step, resolution, cells)
    dgdt = np.array([geo.centroid_time_derivative_fd(domain, x, density, t, i, time_step, resolution)
                     for i in range(len(x))])
    drive = (G - x).ravel() + dgdt.ravel()
    return jac, drive


def tvd_centralized_control(positions, domain, density, t=0.0, step=None, time_step=1e-4,
                            resolution=geo.DEFAULT_RESOLUTION, cond_limit=1e10) -> np.ndarray:
    """u = (I - dG/dx)^-1 ((G - x) + dG/dt) for the whole ensemble, shape (N, 2)."""
    jac, drive = _tvd_terms(positions, domain, density, t, step, time_step, resolution)
    m = np.eye(len(drive)) - jac
    if np.linalg.cond(m) > cond_limit:
        raise SingularJacobian("I - dG/dx is singular to working precision")
    return np.linalg.solve(m, drive).reshape(-1, 2)


def tvd_neumann_control(positions, domain, density, t=0.0, step=None, time_step=1e-4,
                        resolution=geo.DEFAULT_RESOLUTION) -> np.ndarray:
    """Truncated-series approximation u = (I + dG/dx) ((G - x) + dG/dt)."""
    jac, drive = _tvd_terms(positions, domain, density, t, step, time_step, resolution)
    return (drive + jac @ drive).reshape(-1, 2)
