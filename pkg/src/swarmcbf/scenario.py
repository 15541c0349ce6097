"""JSON scenario files: validated parsing with materialized defaults, presets, world building.

A parsed :class:`Scenario` is fully materialized: every default is filled in
and randomly placed robots are replaced by their sampled coordinates, so
``parse(serialize(s)) == s`` and the serialized form reproduces a run
exactly.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from . import geometry as geo
from .barriers import ClassKappa
from .engine import World, WorldSnapshot, make_snapshot, simulate, RunMetrics
from .errors import SchemaError, ValidationError
from .survivability import BatteryState, ChargingStation, Obstacle
from .tasks import InteractionGraph

TASKS = ("formation", "coverage", "tvd_coverage", "consensus")
ROBOTARIUM = [[-1.6, -1.0], [1.6, -1.0], [1.6, 1.0], [-1.6, 1.0]]


@dataclass
class Scenario:
    name: str
    task: str
    domain: list
    robots: list
    seed: int = 0
    graph: dict = field(default_factory=lambda: {"mode": "disk", "edges": []})
    density: dict = field(default_factory=lambda: {"kind": "uniform"})
    class_k: dict = field(default_factory=lambda: {"kind": "signed_power", "c": 1.0, "gamma": 1.0 / 3.0})
    survivability: dict = field(default_factory=lambda: {"enabled": False})
    dynamics: dict = field(default_factory=lambda: {"model": "single_integrator", "d_offset": 0.05})
    dt: float = 0.01
    horizon: float = 10.0
    settle_tol: float = 1e-4
    settle_window: int = 50
    slack_weight: float = 1.0
    sensing_radius: float = 1.0
    quadrature_resolution: int = geo.DEFAULT_RESOLUTION
    fd_step: Optional[float] = None
    time_fd_step: float = 1e-4
    max_speed: Optional[float] = None

    @property
    def n_robots(self) -> int:
        return len(self.robots)

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))

    def to_dict(self) -> dict:
        return copy.deepcopy(asdict(self))


# ---------------------------------------------------------------------------
# field helpers
# ---------------------------------------------------------------------------

def _num(doc, key, path, default=None, positive=False, allow_none=False, nonneg=False):
    val = doc.get(key, default)
    if val is None and allow_none:
        return None
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise SchemaError(f"{path}.{key}", f"expected a number, got {val!r}")
    val = float(val)
    if not math.isfinite(val):
        raise SchemaError(f"{path}.{key}", "must be finite")
    if positive and val <= 0:
        raise ValidationError(f"{path}.{key} must be positive (got {val})")
    if nonneg and val < 0:
        raise ValidationError(f"{path}.{key} must be nonnegative (got {val})")
    return val


def _int(doc, key, path, default=None):
    val = doc.get(key, default)
    if isinstance(val, bool) or not isinstance(val, int):
        raise SchemaError(f"{path}.{key}", f"expected an integer, got {val!r}")
    return val


def _point(val, path):
    if (not isinstance(val, (list, tuple)) or len(val) != 2
            or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val)):
        raise SchemaError(path, f"expected [x, y], got {val!r}")
    return [float(val[0]), float(val[1])]


def _dict(doc, key, path, default):
    val = doc.get(key, default)
    if not isinstance(val, dict):
        raise SchemaError(f"{path}.{key}", f"expected an object, got {type(val).__name__}")
    return val


# ---------------------------------------------------------------------------
# section parsers
# ---------------------------------------------------------------------------

def _parse_class_k(doc, path):
    kind = doc.get("kind", "signed_power")
    if kind == "cube_root":
        kind, doc = "signed_power", {"c": 1.0, "gamma": 1.0 / 3.0}
    if kind not in ("linear", "signed_power"):
        raise SchemaError(f"{path}.kind", f"unknown class-K kind {kind!r}")
    c = _num(doc, "c", path, 1.0, positive=True)
    gamma = _num(doc, "gamma", path, 1.0 / 3.0 if kind == "signed_power" else 1.0)
    if kind == "signed_power" and not 0 < gamma < 1:
        raise ValidationError(f"{path}.gamma must lie in (0, 1) (got {gamma})")
    if kind == "linear":
        gamma = 1.0
    return {"kind": kind, "c": c, "gamma": gamma}


def _parse_domain(doc):
    raw = doc.get("domain", ROBOTARIUM)
    if not isinstance(raw, list):
        raise SchemaError("domain", "expected a list of [x, y] vertices")
    pts = [_point(p, f"domain[{k}]") for k, p in enumerate(raw)]
    try:
        poly = geo.ConvexPolygon.from_points(pts)
    except ValueError as exc:
        raise ValidationError(f"domain: {exc}") from exc
    return [[float(a), float(b)] for a, b in poly.vertices], poly


def _sample_robots(count, box, seed, poly, min_sep):
    rng = np.random.default_rng(seed)
    (xmin, ymin), (xmax, ymax) = box
    pts = []
    tries = 0
    while len(pts) < count:
        tries += 1
        if tries > 100000:
            raise ValidationError("could not place robots inside the sampling box")
        p = rng.uniform([xmin, ymin], [xmax, ymax])
        if not poly.contains(p)[0]:
            continue
        if all(np.linalg.norm(p - q) >= min_sep for q in pts):
            pts.append(p)
    return [[float(round(a, 12)), float(round(b, 12))] for a, b in pts]


def _parse_robots(doc, seed, poly, task):
    raw = doc.get("robots")
    if raw is None:
        if "N" not in doc:
            raise SchemaError("robots", "give either a robots list or N")
        raw = {"count": _int(doc, "N", "")}
    if isinstance(raw, dict):
        count = _int(raw, "count", "robots")
        if count < 1:
            raise ValidationError("robots.count must be >= 1")
        v = poly.vertices
        box = raw.get("box", [v.min(axis=0).tolist(), v.max(axis=0).tolist()])
        box = [_point(box[0], "robots.box[0]"), _point(box[1], "robots.box[1]")]
        min_sep = _num(raw, "min_separation", "robots", 0.1 * poly.diameter / max(count, 1) ** 0.5)
        positions = _sample_robots(count, box, seed, poly, min_sep)
        headings = [0.0] * count
        energy = raw.get("energy")
        raw = [{"position": p, "heading": h} for p, h in zip(positions, headings)]
        if energy is not None:
            for r in raw:
                r["energy"] = energy
    if not isinstance(raw, list) or not raw:
        raise SchemaError("robots", "expected a non-empty list")
    out = []
    for k, r in enumerate(raw):
        path = f"robots[{k}]"
        if isinstance(r, list):
            r = {"position": r}
        if not isinstance(r, dict):
            raise SchemaError(path, "expected an object or [x, y]")
        entry = {"position": _point(r.get("position"), f"{path}.position"),
                 "heading": _num(r, "heading", path, 0.0)}
        if "energy" in r and r["energy"] is not None:
            entry["energy"] = _num(r, "energy", path)
        out.append(entry)
    return out


def _parse_graph(doc, n, task):
    default_mode = "fixed" if task == "formation" else ("voronoi" if task in ("coverage", "tvd_coverage") else "disk")
    g = _dict(doc, "graph", "", {"mode": default_mode})
    mode = g.get("mode", default_mode)
    if mode not in ("fixed", "disk", "voronoi"):
        raise SchemaError("graph.mode", f"unknown graph mode {mode!r}")
    edges = {}
    if "distances" in g:
        table = g["distances"]
        if not isinstance(table, list) or len(table) != n or any(not isinstance(r, list) or len(r) != n for r in table):
            raise SchemaError("graph.distances", f"expected an {n}x{n} table")
        for i in range(n):
            for j in range(n):
                a, b = table[i][j], table[j][i]
                if (a is None) != (b is None) or (a is not None and abs(float(a) - float(b)) > 1e-12):
                    raise ValidationError(f"graph.distances: d[{i}][{j}]={a} but d[{j}][{i}]={b}")
                if i < j and a is not None:
                    edges[(i, j)] = float(a)
    for k, e in enumerate(g.get("edges", [])):
        if not isinstance(e, list) or len(e) not in (2, 3):
            raise SchemaError(f"graph.edges[{k}]", "expected [i, j] or [i, j, d_ij]")
        i, j = int(e[0]), int(e[1])
        if not (0 <= i < n and 0 <= j < n) or i == j:
            raise ValidationError(f"graph.edges[{k}]: bad endpoints {i}, {j}")
        d = float(e[2]) if len(e) == 3 else 0.0
        if d < 0:
            raise ValidationError(f"graph.edges[{k}]: d_ij must be nonnegative")
        key = (min(i, j), max(i, j))
        if key in edges and abs(edges[key] - d) > 1e-12:
            raise ValidationError(f"graph.edges: d_ij asymmetric on {key} ({edges[key]} vs {d})")
        edges[key] = d
    if task == "formation" and mode == "fixed" and not edges:
        raise ValidationError("formation needs a fixed graph with desired distances")
    return {"mode": mode, "edges": [[i, j, d] for (i, j), d in sorted(edges.items())]}


def _parse_density(doc):
    d = _dict(doc, "density", "", {"kind": "uniform"})
    kind = d.get("kind", "uniform")
    if kind == "uniform":
        return {"kind": "uniform"}
    if kind == "gaussian_sum":
        comps = d.get("components")
        if not isinstance(comps, list) or not comps:
            raise SchemaError("density.components", "expected a non-empty list")
        out = []
        for k, c in enumerate(comps):
            path = f"density.components[{k}]"
            out.append({
                "center": _point(c.get("center"), f"{path}.center"),
                "sigma": _num(c, "sigma", path, positive=True),
                "weight": _num(c, "weight", path, 1.0),
                "velocity": _point(c.get("velocity", [0.0, 0.0]), f"{path}.velocity"),
                "orbit_radius": _num(c, "orbit_radius", path, 0.0),
                "orbit_rate": _num(c, "orbit_rate", path, 0.0),
                "orbit_phase": _num(c, "orbit_phase", path, 0.0),
                "pulse_amplitude": _num(c, "pulse_amplitude", path, 0.0),
                "pulse_rate": _num(c, "pulse_rate", path, 0.0),
            })
            if out[-1]["weight"] < 0 or abs(out[-1]["pulse_amplitude"]) > 1:
                raise ValidationError(f"{path}: density must stay nonnegative")
        baseline = _num(d, "baseline", "density", 0.0)
        if baseline < 0:
            raise ValidationError("density.baseline must be nonnegative")
        return {"kind": kind, "components": out, "baseline": baseline}
    if kind == "grid":
        vals = d.get("values")
        arr = np.asarray(vals, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 2:
            raise SchemaError("density.values", "expected a 2-D table of at least 2x2")
        if np.any(arr < 0):
            raise ValidationError("density.values must be nonnegative")
        bounds = d.get("bounds")
        if not isinstance(bounds, list) or len(bounds) != 4:
            raise SchemaError("density.bounds", "expected [xmin, xmax, ymin, ymax]")
        return {"kind": "grid", "values": arr.tolist(), "bounds": [float(b) for b in bounds]}
    raise SchemaError("density.kind", f"unknown density kind {kind!r}")


def _parse_survivability(doc, robots, poly):
    s = _dict(doc, "survivability", "", {"enabled": False})
    enabled = bool(s.get("enabled", bool(s)))
    if not enabled:
        return {"enabled": False}
    n = len(robots)
    b = _dict(s, "battery", "survivability", {})
    battery = {
        "e_min": _num(b, "e_min", "survivability.battery", 0.5),
        "e_chg": _num(b, "e_chg", "survivability.battery", 0.95),
        "drain_rate": _num(b, "drain_rate", "survivability.battery", 0.01, positive=True),
        "charge_rate": _num(b, "charge_rate", "survivability.battery", 0.05, positive=True),
    }
    if not 0 <= battery["e_min"] < battery["e_chg"]:
        raise ValidationError("survivability.battery: need 0 <= e_min < e_chg")
    d_chg = _num(s, "d_chg", "survivability", 0.1, positive=True)
    raw_st = s.get("stations")
    if raw_st is None:
        # a column of stations along the left edge, one per robot
        v = poly.vertices
        xmin, ymin = v.min(axis=0)
        ymax = v.max(axis=0)[1]
        ys = np.linspace(ymin, ymax, n + 2)[1:-1]
        raw_st = [[float(xmin + 0.15), float(y)] for y in ys]
    if not isinstance(raw_st, list) or len(raw_st) != n:
        raise ValidationError(f"survivability.stations: need one station per robot ({n})")
    stations = []
    for k, st in enumerate(raw_st):
        if isinstance(st, dict):
            loc = _point(st.get("location"), f"survivability.stations[{k}].location")
            dk = _num(st, "d_chg", f"survivability.stations[{k}]", d_chg, positive=True)
        else:
            loc, dk = _point(st, f"survivability.stations[{k}]"), d_chg
        if not poly.contains(loc)[0]:
            raise ValidationError(f"survivability.stations[{k}] {loc} lies outside the domain")
        stations.append({"location": loc, "d_chg": dk})
    k_gain = _num(s, "k", "survivability", 0.04, positive=True)
    obstacles = []
    for m, o in enumerate(s.get("obstacles", [])):
        path = f"survivability.obstacles[{m}]"
        wps = o.get("waypoints")
        if not isinstance(wps, list) or not wps:
            raise SchemaError(f"{path}.waypoints", "expected a non-empty list of points")
        obstacles.append({
            "waypoints": [_point(w, f"{path}.waypoints[{q}]") for q, w in enumerate(wps)],
            "speed": _num(o, "speed", path, 0.0),
            "d_o": _num(o, "d_o", path, 0.15, positive=True),
        })
    alpha = _parse_class_k(_dict(s, "alpha", "survivability", {"kind": "linear", "c": 1.0}),
                           "survivability.alpha")
    for r in robots:
        r.setdefault("energy", battery["e_chg"])
    return {"enabled": True, "alpha": alpha, "battery": battery, "d_chg": d_chg, "k": k_gain,
            "stations": stations, "obstacles": obstacles}


def parse_dict(doc: dict) -> Scenario:
    """Validate a scenario document and materialize all defaults."""
    if not isinstance(doc, dict):
        raise SchemaError("", "scenario must be a JSON object")
    doc = copy.deepcopy(doc)
    task = doc.get("task")
    if task not in TASKS:
        raise SchemaError("task", f"expected one of {TASKS}, got {task!r}")
    seed = _int(doc, "seed", "", 0)
    domain, poly = _parse_domain(doc)
    robots = _parse_robots(doc, seed, poly, task)
    n = len(robots)
    for k, r in enumerate(robots):
        if task in ("coverage", "tvd_coverage") and not poly.contains(r["position"])[0]:
            raise ValidationError(f"robots[{k}] lies outside the domain")
    dyn = _dict(doc, "dynamics", "", {})
    model = dyn.get("model", "single_integrator")
    if model not in ("single_integrator", "unicycle"):
        raise SchemaError("dynamics.model", f"unknown model {model!r}")
    surv = _parse_survivability(doc, robots, poly)
    sc = Scenario(
        name=str(doc.get("name", "unnamed")),
        task=task,
        domain=domain,
        robots=robots,
        seed=seed,
        graph=_parse_graph(doc, n, task),
        density=_parse_density(doc),
        class_k=_parse_class_k(_dict(doc, "class_k", "", {}), "class_k"),
        survivability=surv,
        dynamics={"model": model, "d_offset": _num(dyn, "d_offset", "dynamics", 0.05, positive=True)},
        dt=_num(doc, "dt", "", 0.01, positive=True),
        horizon=_num(doc, "horizon", "", 10.0, nonneg=True),
        settle_tol=_num(doc, "settle_tol", "", 1e-4, positive=True),
        settle_window=_int(doc, "settle_window", "", 50),
        slack_weight=_num(doc, "slack_weight", "", 1.0, positive=True),
        sensing_radius=_num(doc, "sensing_radius", "", 1.0, positive=True),
        quadrature_resolution=_int(doc, "quadrature_resolution", "", geo.DEFAULT_RESOLUTION),
        fd_step=_num(doc, "fd_step", "", None, positive=True, allow_none=True),
        time_fd_step=_num(doc, "time_fd_step", "", 1e-4, positive=True),
        max_speed=_num(doc, "max_speed", "", None, positive=True, allow_none=True),
    )
    if sc.quadrature_resolution < 1:
        raise ValidationError("quadrature_resolution must be >= 1")
    return sc


def parse_scenario(path) -> Scenario:
    """Read and validate a JSON scenario file."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("", f"invalid JSON: {exc}") from exc
    return parse_dict(doc)


def serialize(scenario: Scenario) -> str:
    return json.dumps(scenario.to_dict(), indent=2, sort_keys=True)


# ---------------------------------------------------------------------------
# world construction
# ---------------------------------------------------------------------------

def _density(spec) -> geo.DensityField:
    if spec["kind"] == "uniform":
        return geo.DensityField.uniform()
    if spec["kind"] == "gaussian_sum":
        comps = [geo.GaussianComponent(**c) for c in spec["components"]]
        return geo.DensityField.gaussian_sum(comps, spec.get("baseline", 0.0))
    return geo.DensityField.grid(spec["values"], spec["bounds"])


def _class_k(spec) -> ClassKappa:
    return ClassKappa(spec["kind"], spec["c"], spec["gamma"] if spec["kind"] == "signed_power" else 1.0)


def build_world(sc: Scenario) -> World:
    poly = geo.ConvexPolygon.from_points(sc.domain)
    graph = None
    if sc.graph["mode"] == "fixed":
        graph = InteractionGraph(sc.n_robots, {(i, j): d for i, j, d in sc.graph["edges"]})
    surv = sc.survivability
    kwargs = {}
    if surv.get("enabled"):
        kwargs = dict(
            surv_alpha=_class_k(surv["alpha"]),
            stations=[ChargingStation(tuple(s["location"]), s["d_chg"]) for s in surv["stations"]],
            obstacles=[Obstacle(tuple(map(tuple, o["waypoints"])), o["d_o"], o["speed"]) for o in surv["obstacles"]],
            energy_k=surv["k"],
            batteries_enabled=True,
        )
    return World(task=sc.task, domain=poly, density=_density(sc.density), graph=graph,
                 alpha=_class_k(sc.class_k), slack_weight=sc.slack_weight,
                 sensing_radius=sc.sensing_radius, resolution=sc.quadrature_resolution,
                 fd_step=sc.fd_step, time_fd_step=sc.time_fd_step,
                 dynamics=sc.dynamics["model"], d_offset=sc.dynamics["d_offset"],
                 max_speed=sc.max_speed, **kwargs)


def initial_snapshot(sc: Scenario, world: Optional[World] = None) -> WorldSnapshot:
    world = world or build_world(sc)
    pos = [r["position"] for r in sc.robots]
    head = [r["heading"] for r in sc.robots]
    batteries = None
    if sc.survivability.get("enabled"):
        b = sc.survivability["battery"]
        batteries = [BatteryState(energy=r["energy"], **b) for r in sc.robots]
    return make_snapshot(world, 0.0, pos, head, batteries)


def run(sc: Scenario, verify: bool = False, on_step=None, abort_ok: bool = False) -> RunMetrics:
    """Execute a scenario for its full horizon."""
    world = build_world(sc)
    snap = initial_snapshot(sc, world)
    return simulate(world, snap, sc.dt, sc.n_steps, sc.settle_tol, sc.settle_window,
                    verify=verify, on_step=on_step, abort_ok=abort_ok)


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def hexagon_edges(side: float = 1.0):
    """Perimeter of a regular hexagon plus the triangle on alternate vertices.

    Chord lengths come from the vertex coordinates (1, sqrt(3), 2 times side
    for adjacent, second and opposite vertices).
    """
    ang = np.arange(6) * np.pi / 3
    verts = side * np.column_stack([np.cos(ang), np.sin(ang)])
    pairs = [(k, (k + 1) % 6) for k in range(6)] + [(0, 2), (2, 4), (0, 4)]
    return [[min(i, j), max(i, j), float(np.linalg.norm(verts[i] - verts[j]))] for i, j in pairs]


PRESETS: dict[str, dict[str, Any]] = {
    "hexagon-formation": {
        "name": "hexagon-formation",
        "task": "formation",
        "seed": 7,
        "domain": [[-2.0, -2.0], [2.0, -2.0], [2.0, 2.0], [-2.0, 2.0]],
        "robots": {"count": 6, "box": [[-1.8, -1.8], [1.8, 1.8]]},
        "graph": {"mode": "fixed", "edges": hexagon_edges(1.0)},
        "class_k": {"kind": "signed_power", "c": 1.0, "gamma": 1.0 / 3.0},
        "slack_weight": 100.0,
        "dt": 0.01,
        "horizon": 20.0,
    },
    "coverage-6": {
        "name": "coverage-6",
        "task": "coverage",
        "seed": 3,
        "domain": ROBOTARIUM,
        "robots": {"count": 6, "box": [[-1.5, -0.9], [1.5, 0.9]]},
        "class_k": {"kind": "signed_power", "c": 1.0, "gamma": 1.0 / 3.0},
        "slack_weight": 100.0,
        "dt": 0.01,
        "horizon": 60.0,
    },
    "persistence-6x2": {
        "name": "persistence-6x2",
        "task": "coverage",
        "seed": 5,
        "domain": ROBOTARIUM,
        "robots": [
            {"position": [1.2, -0.7], "energy": 0.95},
            {"position": [0.6, -0.3], "energy": 0.88},
            {"position": [1.2, 0.0], "energy": 0.81},
            {"position": [0.2, -0.1], "energy": 0.74},
            {"position": [0.6, 0.7], "energy": 0.67},
            {"position": [-0.7, 0.6], "energy": 0.60},
        ],
        "class_k": {"kind": "signed_power", "c": 1.0, "gamma": 1.0 / 3.0},
        "slack_weight": 1.0,
        "sensing_radius": 0.8,
        "max_speed": 10.0,
        "survivability": {
            "enabled": True,
            "alpha": {"kind": "linear", "c": 1.0},
            "battery": {"e_min": 0.5, "e_chg": 0.95, "drain_rate": 0.03, "charge_rate": 0.15},
            "d_chg": 0.1,
            "k": 0.04,
            "obstacles": [
                {"waypoints": [[0.4, 0.3], [1.2, 0.3], [1.2, 0.8], [0.4, 0.8]], "speed": 0.1, "d_o": 0.15},
                {"waypoints": [[-0.9, -0.8], [-0.2, -0.8], [-0.2, -0.3], [-0.9, -0.3]], "speed": 0.1, "d_o": 0.15},
            ],
        },
        "dt": 0.01,
        "horizon": 60.0,
    },
    "tvd-gaussian": {
        "name": "tvd-gaussian",
        "task": "tvd_coverage",
        "seed": 11,
        "domain": ROBOTARIUM,
        # centroidal configuration of the t=0 density (Lloyd iteration, frozen)
        "robots": [{"position": p} for p in [[-0.9382, -0.4981], [0.9374, -0.3366], [-0.8934, 0.4971],
                                             [0.2621, -0.3426], [0.971, 0.3509], [0.3065, 0.3259]]],
        "density": {
            "kind": "gaussian_sum",
            "baseline": 0.05,
            "components": [{"center": [0.0, 0.0], "sigma": 0.4, "weight": 1.0,
                            "orbit_radius": 0.6, "orbit_rate": 0.1571, "orbit_phase": 0.0}],
        },
        # J_i' = -2 J_i is the same error decay rate as the centralized law's e' = -e
        "class_k": {"kind": "linear", "c": 2.0},
        "slack_weight": 1.0e6,
        "quadrature_resolution": 6,
        "dt": 0.01,
        "horizon": 40.0,
    },
}


def preset(name: str) -> Scenario:
    if name not in PRESETS:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    return parse_dict(PRESETS[name])
