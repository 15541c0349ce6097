"""Convex-domain Voronoi partitions with density-weighted centroids and their sensitivities.

Cells are built by clipping the (convex) domain against the perpendicular
bisectors between a generator and every other generator.  Each edge of a
clipped polygon remembers where it came from: ``-1`` for the domain boundary,
``j >= 0`` for the bisector with generator ``j``.  Voronoi neighbors are read
off those labels.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CoincidentGenerators, ZeroMass

COLLINEAR_TOL = 1e-12
COINCIDENT_TOL = 1e-9
BOUNDARY_LABEL = -1


def polygon_area(vertices: np.ndarray) -> float:
    """Signed shoelace area (positive for counterclockwise order)."""
    v = np.asarray(vertices, dtype=float)
    if len(v) < 3:
        return 0.0
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def polygon_centroid(vertices: np.ndarray) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    a = 0.5 * cross.sum()
    cx = ((x + xn) * cross).sum() / (6.0 * a)
    cy = ((y + yn) * cross).sum() / (6.0 * a)
    return np.array([cx, cy])


@dataclass(eq=False)
class ConvexPolygon:
    """Counterclockwise convex polygon.

    ``edge_labels[k]`` tags the edge from ``vertices[k]`` to ``vertices[k+1]``.
    A polygon with no vertices is the distinguished empty polygon.
    """

    vertices: np.ndarray
    edge_labels: tuple = ()

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if not self.edge_labels:
            self.edge_labels = (BOUNDARY_LABEL,) * len(self.vertices)
        self.edge_labels = tuple(int(l) for l in self.edge_labels)

    @classmethod
    def empty(cls) -> "ConvexPolygon":
        return cls(np.zeros((0, 2)), ())

    @classmethod
    def from_points(cls, points) -> "ConvexPolygon":
        """Build and validate a domain polygon; orientation is normalized to CCW."""
        v = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(v) < 3:
            raise ValueError("a polygon needs at least 3 vertices")
        if polygon_area(v) < 0:
            v = v[::-1]
        poly = _cleanup(v, [BOUNDARY_LABEL] * len(v))
        if poly.is_empty:
            raise ValueError("degenerate polygon (zero area)")
        if not poly.is_convex():
            raise ValueError("polygon is not convex")
        return poly

    @property
    def is_empty(self) -> bool:
        return len(self.vertices) == 0

    @property
    def area(self) -> float:
        return polygon_area(self.vertices) if not self.is_empty else 0.0

    @property
    def centroid(self) -> np.ndarray:
        return polygon_centroid(self.vertices)

    @property
    def diameter(self) -> float:
        v = self.vertices
        d = v[:, None, :] - v[None, :, :]
        return float(np.sqrt((d ** 2).sum(-1)).max())

    def edges(self):
        v = self.vertices
        return list(zip(v, np.roll(v, -1, axis=0), self.edge_labels))

    def is_convex(self, tol: float = COLLINEAR_TOL) -> bool:
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        en = np.roll(e, -1, axis=0)
        cross = e[:, 0] * en[:, 1] - e[:, 1] * en[:, 0]
        scale = np.linalg.norm(e, axis=1) * np.linalg.norm(en, axis=1)
        return bool(np.all(cross >= -tol * scale))

    def contains(self, points, tol: float = 1e-12) -> np.ndarray:
        """Vectorized closed point-in-polygon test for a convex CCW polygon."""
        p = np.atleast_2d(np.asarray(points, dtype=float))
        if self.is_empty:
            return np.zeros(len(p), dtype=bool)
        v = self.vertices
        e = np.roll(v, -1, axis=0) - v
        rel = p[:, None, :] - v[None, :, :]
        cross = e[None, :, 0] * rel[:, :, 1] - e[None, :, 1] * rel[:, :, 0]
        return np.all(cross >= -tol * np.linalg.norm(e, axis=1)[None, :], axis=1)


def project_to_polygon(poly: ConvexPolygon, point) -> np.ndarray:
    """Closest point of ``poly`` to ``point`` (the point itself when inside)."""
    p = np.asarray(point, dtype=float)
    if poly.contains(p, tol=0.0)[0]:
        return p.copy()
    best, best_d = None, np.inf
    for a, b, _ in poly.edges():
        e = b - a
        s = min(max(float((p - a) @ e) / float(e @ e), 0.0), 1.0)
        q = a + s * e
        d = float(((p - q) ** 2).sum())
        if d < best_d:
            best, best_d = q, d
    return best


def _cleanup(points, labels, tol: float = COLLINEAR_TOL) -> ConvexPolygon:
    """Drop zero-length edges and merge collinear vertices."""
    # plain floats: these polygons have a handful of vertices and numpy overhead dominates
    pts = [(float(p[0]), float(p[1])) for p in points]
    labs = list(labels)
    if not pts:
        return ConvexPolygon.empty()
    scale = max(1.0, max(max(abs(x), abs(y)) for x, y in pts))

    changed = True
    while changed and len(pts) >= 3:
        changed = False
        n = len(pts)
        # zero-length edge k (pts[k] -> pts[k+1]): drop its start vertex and label
        for k in range(n):
            (ax, ay), (bx, by) = pts[k], pts[(k + 1) % n]
            if math.hypot(bx - ax, by - ay) <= tol * scale:
                del pts[k]
                del labs[k]
                changed = True
                break
        if changed:
            continue
        for k in range(n):
            (ax, ay), (bx, by), (cx, cy) = pts[k - 1], pts[k], pts[(k + 1) % n]
            e1x, e1y, e2x, e2y = bx - ax, by - ay, cx - bx, cy - by
            cross = e1x * e2y - e1y * e2x
            if abs(cross) <= tol * math.hypot(e1x, e1y) * math.hypot(e2x, e2y) and e1x * e2x + e1y * e2y > 0:
                # edge k-1 absorbs edge k
                del pts[k]
                del labs[k]
                changed = True
                break

    if len(pts) < 3:
        return ConvexPolygon.empty()
    area = 0.5 * sum(pts[k - 1][0] * pts[k][1] - pts[k][0] * pts[k - 1][1] for k in range(len(pts)))
    if area <= tol * scale * scale:
        return ConvexPolygon.empty()
    return ConvexPolygon(np.array(pts), tuple(labs))


def clip_halfplane(poly: ConvexPolygon, normal, offset: float, label: int = BOUNDARY_LABEL,
                   tol: float = 1e-12) -> ConvexPolygon:
    """Intersect ``poly`` with ``{q : normal . q <= offset}``.

    Returns the empty polygon if the intersection has no area.  The new edge
    lying on the clipping line is tagged with ``label``.
    """
    if poly.is_empty:
        return poly
    nx, ny = float(normal[0]), float(normal[1])
    v = poly.vertices.tolist()
    d = [x * nx + y * ny - offset for x, y in v]
    scale = max(1.0, max(max(abs(x), abs(y)) for x, y in v))
    inside = [dk <= tol * scale for dk in d]
    if all(inside):
        return poly
    if not any(inside):
        return ConvexPolygon.empty()

    out_pts, out_labels = [], []
    m = len(v)
    for k in range(m):
        k1 = (k + 1) % m
        cur, nxt = v[k], v[k1]
        dc, dn = d[k], d[k1]
        lab = poly.edge_labels[k]
        if inside[k]:
            out_pts.append(cur)
            out_labels.append(lab)
            if not inside[k1]:
                s = dc / (dc - dn)
                out_pts.append((cur[0] + s * (nxt[0] - cur[0]), cur[1] + s * (nxt[1] - cur[1])))
                out_labels.append(label)
        elif inside[k1]:
            s = dc / (dc - dn)
            out_pts.append((cur[0] + s * (nxt[0] - cur[0]), cur[1] + s * (nxt[1] - cur[1])))
            out_labels.append(lab)
    return _cleanup(out_pts, out_labels)


# ---------------------------------------------------------------------------
# Density fields
# ---------------------------------------------------------------------------

@dataclass
class GaussianComponent:
    """One bump of a gaussian-sum density.

    The center either drifts linearly (``center + velocity * t``) or, when
    ``orbit_radius > 0``, travels a circle around ``center`` at ``orbit_rate``
    rad/s.  ``pulse_amplitude`` modulates the weight as ``1 + a*sin(rate*t)``.
    """

    center: Sequence[float]
    sigma: float
    weight: float = 1.0
    velocity: Sequence[float] = (0.0, 0.0)
    orbit_radius: float = 0.0
    orbit_rate: float = 0.0
    orbit_phase: float = 0.0
    pulse_amplitude: float = 0.0
    pulse_rate: float = 0.0

    def center_at(self, t: float) -> np.ndarray:
        c = np.asarray(self.center, dtype=float)
        if self.orbit_radius > 0:
            ang = self.orbit_rate * t + self.orbit_phase
            return c + self.orbit_radius * np.array([np.cos(ang), np.sin(ang)])
        return c + np.asarray(self.velocity, dtype=float) * t

    def weight_at(self, t: float) -> float:
        return self.weight * (1.0 + self.pulse_amplitude * np.sin(self.pulse_rate * t))

    @property
    def is_static(self) -> bool:
        moving = self.orbit_radius > 0 and self.orbit_rate != 0
        moving = moving or bool(np.any(np.asarray(self.velocity) != 0))
        return not moving and (self.pulse_amplitude == 0 or self.pulse_rate == 0)


class DensityField:
    """Nonnegative importance function phi(q, t) over the plane.

    Use the constructors :meth:`uniform`, :meth:`gaussian_sum`, :meth:`grid`
    or :meth:`from_callable`.  Evaluation is vectorized over points.
    """

    def __init__(self, kind: str, fn: Callable[[np.ndarray, float], np.ndarray],
                 static: bool = True, params: Optional[dict] = None):
        self.kind = kind
        self._fn = fn
        self.is_static = static
        self.params = params or {}

    @property
    def is_uniform(self) -> bool:
        return self.kind == "uniform"

    def __call__(self, q, t: float = 0.0) -> np.ndarray:
        q = np.atleast_2d(np.asarray(q, dtype=float))
        return np.maximum(self._fn(q, t), 0.0)

    @classmethod
    def uniform(cls) -> "DensityField":
        return cls("uniform", lambda q, t: np.ones(len(q)))

    @classmethod
    def gaussian_sum(cls, components: Sequence[GaussianComponent], baseline: float = 0.0) -> "DensityField":
        comps = list(components)

        def fn(q, t):
            out = np.full(len(q), float(baseline))
            for c in comps:
                r2 = ((q - c.center_at(t)) ** 2).sum(axis=1)
                out += c.weight_at(t) * np.exp(-0.5 * r2 / c.sigma ** 2)
            return out

        static = all(c.is_static for c in comps)
        return cls("gaussian_sum", fn, static, {"components": comps, "baseline": baseline})

    @classmethod
    def grid(cls, values, bounds) -> "DensityField":
        """Static density bilinearly interpolated from samples on a regular grid.

        ``values[iy, ix]`` is sampled at x = linspace(xmin, xmax, nx),
        y = linspace(ymin, ymax, ny); ``bounds = (xmin, xmax, ymin, ymax)``.
        Points outside the grid take the nearest edge value.
        """
        from scipy.interpolate import RegularGridInterpolator

        vals = np.asarray(values, dtype=float)
        if np.any(vals < 0):
            raise ValueError("grid density values must be nonnegative")
        xmin, xmax, ymin, ymax = bounds
        xs = np.linspace(xmin, xmax, vals.shape[1])
        ys = np.linspace(ymin, ymax, vals.shape[0])
        interp = RegularGridInterpolator((ys, xs), vals, method="linear")

        def fn(q, t):
            qy = np.clip(q[:, 1], ymin, ymax)
            qx = np.clip(q[:, 0], xmin, xmax)
            return interp(np.column_stack([qy, qx]))

        return cls("grid", fn, True, {"values": vals, "bounds": tuple(bounds)})

    @classmethod
    def from_callable(cls, fn, static: bool = False) -> "DensityField":
        return cls("callable", lambda q, t: np.asarray(fn(q, t), dtype=float), static)


# ---------------------------------------------------------------------------
# Quadrature
# ---------------------------------------------------------------------------

# degree-5, 7-point rule on the reference triangle (barycentric, weights sum to 1)
_A1, _B1, _W1 = 0.059715871789770, 0.470142064105115, 0.132394152788506
_A2, _B2, _W2 = 0.797426985353087, 0.101286507323456, 0.125939180544827
_RULE_BARY = np.array([
    [1 / 3, 1 / 3, 1 / 3],
    [_A1, _B1, _B1], [_B1, _A1, _B1], [_B1, _B1, _A1],
    [_A2, _B2, _B2], [_B2, _A2, _B2], [_B2, _B2, _A2],
])
_RULE_W = np.array([0.225, _W1, _W1, _W1, _W2, _W2, _W2])


@lru_cache(maxsize=32)
def _reference_rule(n: int):
    """Points (s, r) and weights on the reference triangle split into n*n pieces."""
    subs = []
    for i in range(n):
        for j in range(n - i):
            subs.append(((i, j), (i + 1, j), (i, j + 1)))
            if i + j <= n - 2:
                subs.append(((i + 1, j), (i + 1, j + 1), (i, j + 1)))
    tri = np.array(subs, dtype=float) / n          # (S, 3, 2)
    pts = np.einsum("qk,skd->sqd", _RULE_BARY, tri).reshape(-1, 2)
    w = np.tile(_RULE_W, len(subs)) / len(subs)
    return pts, w


def _quadrature_points(poly: ConvexPolygon, resolution: int):
    v = poly.vertices
    a = np.repeat(v[:1], len(v) - 2, axis=0)
    b, c = v[1:-1], v[2:]
    ab, ac = b - a, c - a
    areas = 0.5 * (ab[:, 0] * ac[:, 1] - ab[:, 1] * ac[:, 0])
    ref, w = _reference_rule(resolution)
    pts = a[:, None, :] + ref[None, :, :1] * ab[:, None, :] + ref[None, :, 1:] * ac[:, None, :]
    weights = areas[:, None] * w[None, :]
    return pts.reshape(-1, 2), weights.ravel()


DEFAULT_RESOLUTION = 8


def cell_mass_centroid(cell, density: Optional[DensityField] = None, t: float = 0.0,
                       resolution: int = DEFAULT_RESOLUTION):
    """Density-weighted mass and centroid of a cell (or bare polygon).

    Uniform density uses the closed-form shoelace expressions.  Other
    densities are integrated by fan-triangulating the cell and applying a
    7-point degree-5 rule on ``resolution**2`` sub-triangles of each fan
    triangle; the result is smooth in the cell's vertices.
    """
    poly = cell.polygon if isinstance(cell, VoronoiCell) else cell
    if poly.is_empty:
        raise ZeroMass("empty cell")
    if density is None or density.is_uniform:
        area = poly.area
        if area < 1e-12:
            raise ZeroMass(f"cell area {area:.3g} below 1e-12")
        return area, poly.centroid
    pts, w = _quadrature_points(poly, resolution)
    phi = density(pts, t) * w
    mass = float(phi.sum())
    if mass < 1e-12:
        raise ZeroMass(f"cell mass {mass:.3g} below 1e-12")
    return mass, (phi @ pts) / mass


# ---------------------------------------------------------------------------
# Voronoi
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class VoronoiCell:
    owner: int
    polygon: ConvexPolygon
    mass: float
    centroid: np.ndarray
    neighbors: frozenset = field(default_factory=frozenset)


def _check_generators(domain: ConvexPolygon, positions: np.ndarray):
    tol = COINCIDENT_TOL * domain.diameter
    if len(positions) < 2:
        return
    d = positions[:, None, :] - positions[None, :, :]
    dist = np.sqrt((d ** 2).sum(-1))
    np.fill_diagonal(dist, np.inf)
    if dist.min() < tol:
        i, j = np.unravel_index(np.argmin(dist), dist.shape)
        raise CoincidentGenerators(f"generators {min(i, j)} and {max(i, j)} coincide "
                                   f"(distance {dist.min():.3g} < {tol:.3g})")


def voronoi_polygon(domain: ConvexPolygon, positions, i: int) -> ConvexPolygon:
    """Voronoi cell of generator ``i`` clipped to ``domain`` (edge-labelled)."""
    x = np.asarray(positions, dtype=float)
    xi = x[i]
    diff = x - xi
    dist = np.sqrt((diff ** 2).sum(axis=1))
    tol = COINCIDENT_TOL * domain.diameter
    poly = domain
    for j in np.argsort(dist, kind="stable"):
        if j == i:
            continue
        if dist[j] < tol:
            raise CoincidentGenerators(f"generators {i} and {j} coincide")
        # bisector cannot cut once every vertex is nearer than half the distance
        reach = np.sqrt(((poly.vertices - xi) ** 2).sum(axis=1)).max()
        if reach <= 0.5 * dist[j]:
            break
        normal = diff[j] / dist[j]
        offset = float(normal @ (0.5 * (xi + x[j])))
        poly = clip_halfplane(poly, normal, offset, label=int(j))
        if poly.is_empty:
            break
    return poly


def polygon_neighbors(poly: ConvexPolygon, min_length: float) -> set:
    out = set()
    for a, b, lab in poly.edges():
        if lab >= 0 and np.linalg.norm(b - a) > min_length:
            out.add(lab)
    return out


def voronoi_partition(domain: ConvexPolygon, positions, density: Optional[DensityField] = None,
                      t: float = 0.0, resolution: int = DEFAULT_RESOLUTION) -> list:
    """Partition a convex domain into the Voronoi cells of ``positions``.

    Neighbor sets are symmetrized (an edge seen from either side counts).
    """
    x = np.asarray(positions, dtype=float).reshape(-1, 2)
    _check_generators(domain, x)
    min_len = COINCIDENT_TOL * domain.diameter
    polys = [voronoi_polygon(domain, x, i) for i in range(len(x))]
    nbrs = [polygon_neighbors(p, min_len) for p in polys]
    for i, s in enumerate(nbrs):
        for j in list(s):
            nbrs[j].add(i)
    cells = []
    for i, poly in enumerate(polys):
        if poly.is_empty:
            mass, cen = 0.0, x[i].copy()
        else:
            mass, cen = cell_mass_centroid(poly, density, t, resolution)
        cells.append(VoronoiCell(i, poly, mass, cen, frozenset(nbrs[i])))
    return cells


def cell_centroid(domain, positions, i, density=None, t=0.0, resolution=DEFAULT_RESOLUTION):
    """Centroid G_i of generator ``i``'s cell, recomputing the cell from scratch."""
    poly = voronoi_polygon(domain, positions, i)
    return cell_mass_centroid(poly, density, t, resolution)[1]


def default_fd_step(domain: ConvexPolygon) -> float:
    return 1e-5 * domain.diameter


def centroid_jacobian_fd(domain, positions, density=None, t=0.0, i=0, step=None, j=None,
                         resolution=DEFAULT_RESOLUTION) -> np.ndarray:
    """Central-difference Jacobian dG_i/dx_j (``j`` defaults to ``i``).

    Each perturbed evaluation rebuilds cell ``i`` from all generators.
    """
    x = np.array(positions, dtype=float).reshape(-1, 2)
    j = i if j is None else j
    eps = default_fd_step(domain) if step is None else step
    jac = np.zeros((2, 2))
    for a in range(2):
        xp, xm = x.copy(), x.copy()
        xp[j, a] += eps
        xm[j, a] -= eps
        gp = cell_centroid(domain, xp, i, density, t, resolution)
        gm = cell_centroid(domain, xm, i, density, t, resolution)
        jac[:, a] = (gp - gm) / (2 * eps)
    return jac


def centroid_time_derivative_fd(domain, positions, density=None, t=0.0, i=0, step=1e-4,
                                resolution=DEFAULT_RESOLUTION) -> np.ndarray:
    """Central difference of G_i in time with generators frozen."""
    if density is None or density.is_static:
        return np.zeros(2)
    poly = voronoi_polygon(domain, positions, i)
    gp = cell_mass_centroid(poly, density, t + step, resolution)[1]
    gm = cell_mass_centroid(poly, density, t - step, resolution)[1]
    return (gp - gm) / (2 * step)


def centroid_jacobian_full_fd(domain, positions, density=None, t=0.0, step=None,
                              resolution=DEFAULT_RESOLUTION, cells=None) -> np.ndarray:
    """Full (2N x 2N) Jacobian dG/dx of all centroids w.r.t. all generators.

    Only cells of the perturbed generator and its Voronoi neighbors can
    change, so only those are recomputed; all other blocks are zero.
    """
    x = np.array(positions, dtype=float).reshape(-1, 2)
    n = len(x)
    if cells is None:
        cells = voronoi_partition(domain, x, density, t, resolution)
    eps = default_fd_step(domain) if step is None else step
    jac = np.zeros((2 * n, 2 * n))
    for j in range(n):
        affected = sorted({j} | set(cells[j].neighbors))
        for a in range(2):
            xp, xm = x.copy(), x.copy()
            xp[j, a] += eps
            xm[j, a] -= eps
            for i in affected:
                gp = cell_centroid(domain, xp, i, density, t, resolution)
                gm = cell_centroid(domain, xm, i, density, t, resolution)
                jac[2 * i:2 * i + 2, 2 * j + a] = (gp - gm) / (2 * eps)
    return jac
