"""Deterministic fixed-step simulation of constraint-driven robot teams.

Every step builds a read-only :class:`WorldSnapshot`, assembles and solves
one QP per robot against that snapshot, then applies all inputs at once.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import geometry as geo
from . import tasks
from .barriers import ClassKappa, cbf_row, task_barrier
from .errors import (CoincidentGenerators, Infeasible, InvariantViolation, NumericallyIllConditioned,
                     SimulationAborted, ZeroMass)
from .qp import QpProblem, solve
from .survivability import (BatteryState, ChargingStation, Obstacle, battery_step,
                            dock_constraint_row, energy_barrier, energy_constraint_row, is_charging,
                            obstacle_barrier, obstacle_constraint_row)

log = logging.getLogger(__name__)

PAIRWISE_TASKS = ("formation", "consensus")
COVERAGE_TASKS = ("coverage", "tvd_coverage")


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    w = np.mod(np.asarray(theta, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.ndim(w) == 0 else w


def sensing_graph(positions, radius: float) -> tasks.InteractionGraph:
    """Closed disk graph: edge (i, j) iff ||x_i - x_j|| <= radius."""
    if radius <= 0:
        raise ValueError("sensing radius must be positive")
    x = np.asarray(positions, dtype=float)
    n = len(x)
    edges = {}
    for i in range(n):
        for j in range(i + 1, n):
            if np.linalg.norm(x[i] - x[j]) <= radius:
                edges[(i, j)] = 0.0
    return tasks.InteractionGraph(n, edges)


def unicycle_map(u_des, theta: float, d_offset: float):
    """Map a desired velocity of the look-ahead point to (v, omega).

    (v, omega) = diag(1, 1/d) R(theta)^T u_des
    """
    if d_offset <= 0:
        raise ValueError("look-ahead distance must be positive")
    c, s = np.cos(theta), np.sin(theta)
    ux, uy = np.asarray(u_des, dtype=float)
    return c * ux + s * uy, (-s * ux + c * uy) / d_offset


@dataclass
class World:
    """Static objects built once from a scenario."""

    task: str
    domain: geo.ConvexPolygon
    density: geo.DensityField
    graph: Optional[tasks.InteractionGraph]
    alpha: ClassKappa
    slack_weight: float = 1.0
    sensing_radius: float = 1.0
    resolution: int = geo.DEFAULT_RESOLUTION
    fd_step: Optional[float] = None
    time_fd_step: float = 1e-4
    dynamics: str = "single_integrator"
    d_offset: float = 0.05
    surv_alpha: ClassKappa = field(default_factory=ClassKappa.linear)
    stations: list = field(default_factory=list)
    obstacles: list = field(default_factory=list)
    energy_k: float = 0.0
    batteries_enabled: bool = False
    max_speed: Optional[float] = None

    @property
    def is_coverage(self) -> bool:
        return self.task in COVERAGE_TASKS


@dataclass
class WorldSnapshot:
    t: float
    positions: np.ndarray
    headings: np.ndarray
    batteries: Optional[list] = None
    obstacle_pos: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    obstacle_vel: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    cells: Optional[list] = None
    graph: Optional[tasks.InteractionGraph] = None

    @property
    def n(self) -> int:
        return len(self.positions)


def make_snapshot(world: World, t, positions, headings=None, batteries=None) -> WorldSnapshot:
    """Snapshot with derived fields (obstacles, partition, graph) consistent with t."""
    x = np.array(positions, dtype=float).reshape(-1, 2)
    th = np.zeros(len(x)) if headings is None else wrap_angle(np.array(headings, dtype=float))
    states = [o.state(t) for o in world.obstacles]
    op = np.array([s[0] for s in states]).reshape(-1, 2)
    ov = np.array([s[1] for s in states]).reshape(-1, 2)
    cells = None
    graph = world.graph
    if world.is_coverage:
        cells = geo.voronoi_partition(world.domain, x, world.density, t, world.resolution)
        graph = tasks.InteractionGraph(len(x), {(c.owner, j): 0.0 for c in cells for j in c.neighbors})
    elif graph is None:
        graph = sensing_graph(x, world.sensing_radius)
    return WorldSnapshot(float(t), x, np.atleast_1d(th), batteries, op, ov, cells, graph)


def task_evaluation(i: int, snap: WorldSnapshot, world: World) -> tasks.TaskEvaluation:
    if world.task == "formation":
        return tasks.formation_eval(i, snap.positions, snap.graph)
    if world.task == "consensus":
        return tasks.consensus_eval(i, snap.positions, snap.graph)
    if world.task == "coverage":
        return tasks.coverage_eval(i, snap.positions, world.domain, world.density, snap.t,
                                   snap.cells, world.fd_step, world.resolution)
    if world.task == "tvd_coverage":
        return tasks.tvd_coverage_eval(i, snap.positions, world.domain, world.density, snap.t,
                                       snap.cells, world.fd_step, world.time_fd_step, world.resolution)
    raise ValueError(f"unknown task {world.task!r}")


def _assemble(i: int, snap: WorldSnapshot, world: World):
    ev = task_evaluation(i, snap, world)
    rows = [cbf_row(task_barrier(ev.cost, ev.grad, world.alpha, ev.extra_rhs))]
    x = snap.positions[i]
    if world.batteries_enabled and snap.batteries is not None:
        bat, station = snap.batteries[i], world.stations[i]
        # E_dot follows the position, matching how the battery is stepped
        docked = is_charging(x, bat, station)
        rate = bat.charge_rate if docked else -bat.drain_rate
        rows.append(energy_constraint_row(x, bat, station, world.energy_k, world.surv_alpha, rate))
        if docked:
            rows.append(dock_constraint_row(x, station, world.surv_alpha))
    for m, obs in enumerate(world.obstacles):
        if np.linalg.norm(x - snap.obstacle_pos[m]) <= world.sensing_radius:
            rows.append(obstacle_constraint_row(x, snap.obstacle_pos[m], obs.d_o, world.surv_alpha,
                                                snap.obstacle_vel[m]))
    return QpProblem(2, world.slack_weight, rows), ev


def assemble_robot_qp(i: int, snap: WorldSnapshot, world: World) -> QpProblem:
    """Robot i's QP: one slackable task row plus hard survivability rows."""
    return _assemble(i, snap, world)[0]


@dataclass
class StepRecord:
    t: float
    costs: np.ndarray
    cost: float
    deltas: np.ndarray
    inputs: np.ndarray
    kkt: float
    min_h: dict
    decentral_margin: float
    global_margin: float
    barrier_rate: dict = field(default_factory=dict)


def _global_cost(world: World, snap: WorldSnapshot, costs) -> float:
    return float(np.sum(costs))


def saturate(u, max_speed: Optional[float]) -> np.ndarray:
    """Scale each row of ``u`` down to norm ``max_speed`` (no-op when None)."""
    u = np.asarray(u, dtype=float)
    if max_speed is None:
        return u
    norm = np.linalg.norm(u, axis=1, keepdims=True)
    return u * np.minimum(1.0, max_speed / np.maximum(norm, 1e-300))


def step(snap: WorldSnapshot, world: World, dt: float, step_index: int = 0):
    """Advance one explicit-Euler step; returns (next snapshot, record of this step)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    n = snap.n
    u = np.zeros((n, 2))
    deltas = np.zeros(n)
    costs = np.zeros(n)
    grads = np.zeros((n, 2))
    extras = np.zeros(n)
    kkt = 0.0
    min_h = {"energy": np.inf, "obstacle": np.inf}
    rates = {"energy": 0.0, "obstacle": 0.0}
    for i in range(n):
        try:
            prob, ev = _assemble(i, snap, world)
            sol = solve(prob)
        except (Infeasible, NumericallyIllConditioned, ZeroMass, CoincidentGenerators) as exc:
            rows = getattr(exc, "rows", [])
            raise SimulationAborted(f"step {step_index}, t={snap.t:.4f}: robot {i} QP failed "
                                    f"({exc}); rows {rows}", step_index, i, exc) from exc
        u[i], deltas[i] = sol.u_star, sol.delta_star
        for idx in sol.active_set:
            row = prob.rows[idx]
            if row.hard and row.label in rates:
                # how fast h can move during the step: input part plus drift
                rate = abs(float(row.a_u @ sol.u_star)) + abs(row.drift)
                rates[row.label] = max(rates[row.label], rate)
        costs[i], grads[i], extras[i] = ev.cost, ev.grad, ev.extra_rhs
        kkt = max(kkt, sol.kkt_residual)

    if world.batteries_enabled and snap.batteries is not None:
        for i, bat in enumerate(snap.batteries):
            min_h["energy"] = min(min_h["energy"], energy_barrier(snap.positions[i], bat,
                                                                 world.stations[i], world.energy_k))
    for m, obs in enumerate(world.obstacles):
        for i in range(n):
            min_h["obstacle"] = min(min_h["obstacle"],
                                    obstacle_barrier(snap.positions[i], snap.obstacle_pos[m], obs.d_o))

    total = _global_cost(world, snap, costs)
    # summed local rows vs. the global row: sum(-g_i u_i) >= -alpha(-J) + sum(extra) - sum(delta)
    lhs = float(-np.sum(grads * u))
    decentral = lhs - (-world.alpha(-total) + extras.sum() - deltas.sum())
    global_margin = np.nan
    if world.task in PAIRWISE_TASKS:
        g = tasks.formation_global_grad(snap.positions, _task_graph(world, snap))
        global_margin = float(-np.sum(g * u)) - (-2 * world.alpha(-total) - 2 * deltas.sum())

    record = StepRecord(snap.t, costs, total, deltas, u, kkt, min_h, decentral, global_margin, rates)

    # apply inputs; an actuator limit shrinks u but keeps its direction
    applied = saturate(u, world.max_speed)
    x = snap.positions.copy()
    th = snap.headings.copy()
    if world.dynamics == "unicycle":
        for i in range(n):
            v, w = unicycle_map(applied[i], th[i], world.d_offset)
            center = x[i] - world.d_offset * np.array([np.cos(th[i]), np.sin(th[i])])
            center = center + dt * v * np.array([np.cos(th[i]), np.sin(th[i])])
            th[i] = wrap_angle(th[i] + dt * w)
            x[i] = center + world.d_offset * np.array([np.cos(th[i]), np.sin(th[i])])
    else:
        x = x + dt * applied
    # the domain boundary acts as a wall
    for i in range(n):
        x[i] = geo.project_to_polygon(world.domain, x[i])

    batteries = None
    if snap.batteries is not None:
        batteries = []
        for i, bat in enumerate(snap.batteries):
            # a robot that ends the step inside its disk charges during it
            charging = is_charging(x[i], bat, world.stations[i]) if world.stations else False
            batteries.append(battery_step(bat, charging, dt))

    try:
        nxt = make_snapshot(world, snap.t + dt, x, th, batteries)
    except (ZeroMass, CoincidentGenerators) as exc:
        raise SimulationAborted(f"step {step_index}, t={snap.t + dt:.4f}: partition failed ({exc})",
                                step_index, -1, exc) from exc
    return nxt, record


def _task_graph(world, snap):
    if world.task == "consensus":
        return tasks.InteractionGraph(snap.graph.n, {e: 0.0 for e in snap.graph.edges})
    return snap.graph


def global_cost(world: World, snap: WorldSnapshot) -> float:
    if world.task in COVERAGE_TASKS:
        return tasks.coverage_cost(snap.positions, snap.cells)
    g = _task_graph(world, snap)
    return tasks.formation_cost(snap.positions, g)


@dataclass
class RunMetrics:
    """Per-step series; row k describes the state at t_k and the input chosen there."""

    t: np.ndarray
    cost: np.ndarray
    costs: np.ndarray
    deltas: np.ndarray
    inputs: np.ndarray
    positions: np.ndarray
    headings: np.ndarray
    energies: np.ndarray
    charging: np.ndarray
    min_h_energy: np.ndarray
    min_h_obstacle: np.ndarray
    obstacle_distance: np.ndarray
    obstacle_positions: np.ndarray
    kkt: np.ndarray
    decentral_margin: np.ndarray
    global_margin: np.ndarray
    final: WorldSnapshot
    final_cost: float
    settling_time: Optional[float]
    depleted: np.ndarray
    aborted: Optional[str] = None
    barrier_rate: dict = field(default_factory=dict)
    dt: float = 0.0
    centroids: Optional[np.ndarray] = None

    def tracking_error(self) -> Optional[np.ndarray]:
        """Per-step, per-robot ||x_i - G_i|| for coverage runs."""
        if self.centroids is None:
            return None
        return np.linalg.norm(self.positions - self.centroids, axis=-1)

    @property
    def n_steps(self) -> int:
        return len(self.t)

    def cost_with_final(self) -> np.ndarray:
        return np.append(self.cost, self.final_cost)

    def integration_tolerance(self, label: str) -> float:
        """eps_int = c * dt, c the largest rate of change of a binding ``label`` row."""
        rates = self.barrier_rate.get(label)
        if rates is None or len(rates) == 0:
            return 0.0
        return float(np.max(rates)) * self.dt


def settling_time(t, cost, tol: float, window: int = 50) -> Optional[float]:
    """First time the cost enters and stays below ``tol`` for ``window`` samples."""
    below = np.asarray(cost) <= tol
    run = 0
    for k in range(len(below) - 1, -1, -1):
        run = run + 1 if below[k] else 0
        below[k] = run >= window if below[k] else False
    # below[k] now marks "at least `window` consecutive samples from k"
    idx = np.flatnonzero(below)
    return float(t[idx[0]]) if len(idx) else None


def charging_cycles(energy, e_min: float, e_chg: float, top_tol: float = 1e-9) -> int:
    """Count completed recharges: rises from below the midpoint to E_chg."""
    mid = 0.5 * (e_min + e_chg)
    armed = False
    cycles = 0
    for e in energy:
        if e <= mid:
            armed = True
        elif armed and e >= e_chg - top_tol:
            cycles += 1
            armed = False
    return cycles


def simulate(world: World, initial: WorldSnapshot, dt: float, n_steps: int,
             settle_tol: float = 1e-4, settle_window: int = 50, verify: bool = False,
             on_step: Optional[Callable] = None, abort_ok: bool = False) -> RunMetrics:
    """Run ``n_steps`` Euler steps from ``initial``."""
    snap = initial
    recs, snaps = [], []
    running = {}
    aborted = None
    for k in range(n_steps):
        try:
            nxt, rec = step(snap, world, dt, k)
        except SimulationAborted as exc:
            if not abort_ok:
                raise
            aborted = str(exc)
            break
        if verify:
            _verify_step(world, snap, nxt, rec, dt, running)
        recs.append(rec)
        snaps.append(snap)
        if on_step is not None:
            on_step(k, snap, rec)
        snap = nxt
    return _collect(world, recs, snaps, snap, settle_tol, settle_window, aborted, dt)


def _collect(world, recs, snaps, final, settle_tol, settle_window, aborted, dt):
    n = final.n
    m = len(world.obstacles)
    k = len(recs)
    t = np.array([r.t for r in recs])
    cost = np.array([r.cost for r in recs])
    energies = np.full((k, n), np.nan)
    charging = np.zeros((k, n), dtype=bool)
    depleted = np.zeros(n, dtype=bool)
    if final.batteries is not None:
        for idx, s in enumerate(snaps):
            energies[idx] = [b.energy for b in s.batteries]
            charging[idx] = [is_charging(s.positions[i], s.batteries[i], world.stations[i]) for i in range(n)]
        depleted = np.array([b.depleted for b in final.batteries])
    obs_pos = np.array([s.obstacle_pos for s in snaps]).reshape(k, m, 2)
    pos = np.array([s.positions for s in snaps]).reshape(k, n, 2)
    if m:
        dist = np.linalg.norm(pos[:, :, None, :] - obs_pos[:, None, :, :], axis=-1).min(axis=(1, 2))
    else:
        dist = np.full(k, np.nan)
    final_cost = global_cost(world, final)
    cost_all = np.append(cost, final_cost)
    t_all = np.append(t, final.t)
    return RunMetrics(
        t=t, cost=cost,
        costs=np.array([r.costs for r in recs]).reshape(k, n),
        deltas=np.array([r.deltas for r in recs]).reshape(k, n),
        inputs=np.array([r.inputs for r in recs]).reshape(k, n, 2),
        positions=pos,
        headings=np.array([s.headings for s in snaps]).reshape(k, n),
        energies=energies, charging=charging,
        min_h_energy=np.array([r.min_h["energy"] for r in recs]),
        min_h_obstacle=np.array([r.min_h["obstacle"] for r in recs]),
        obstacle_distance=dist, obstacle_positions=obs_pos,
        kkt=np.array([r.kkt for r in recs]),
        decentral_margin=np.array([r.decentral_margin for r in recs]),
        global_margin=np.array([r.global_margin for r in recs]),
        final=final, final_cost=final_cost,
        settling_time=settling_time(t_all, cost_all, settle_tol, settle_window) if k else None,
        depleted=depleted, aborted=aborted,
        barrier_rate={lab: np.array([r.barrier_rate.get(lab, 0.0) for r in recs]) for lab in ("energy", "obstacle")},
        dt=dt,
        centroids=(np.array([[c.centroid for c in s.cells] for s in snaps]).reshape(k, n, 2)
                   if world.is_coverage else None),
    )


VERIFY_TOL = 1e-8


def _verify_step(world: World, snap: WorldSnapshot, nxt: WorldSnapshot, rec: StepRecord, dt: float,
                 running: dict):
    """Hard assertions used by ``--verify``."""
    scale = 1.0 + float(np.abs(rec.inputs).max(initial=0.0))
    if rec.kkt > 1e-8 * 100 * scale:
        raise InvariantViolation(f"t={rec.t:.3f}: KKT residual {rec.kkt:.3g}")
    if rec.decentral_margin < -VERIFY_TOL * scale:
        raise InvariantViolation(f"t={rec.t:.3f}: summed local rows miss the global row "
                                 f"by {-rec.decentral_margin:.3g}")
    if np.isfinite(rec.global_margin) and rec.global_margin < -VERIFY_TOL * scale:
        raise InvariantViolation(f"t={rec.t:.3f}: global inequality with 2*alpha fails "
                                 f"by {-rec.global_margin:.3g}")
    if snap.cells is not None:
        area = sum(c.polygon.area for c in snap.cells)
        if abs(area - world.domain.area) > 1e-9 * world.domain.area:
            raise InvariantViolation(f"t={rec.t:.3f}: cells do not tile the domain")
        for c in snap.cells:
            for j in c.neighbors:
                if c.owner not in snap.cells[j].neighbors:
                    raise InvariantViolation(f"t={rec.t:.3f}: asymmetric neighbors {c.owner},{j}")
    # hard barriers may dip below zero by eps_int = c * dt, c the running max rate of a binding row
    for lab, rate in rec.barrier_rate.items():
        running[lab] = max(running.get(lab, 0.0), rate)
    if snap.batteries is not None:
        eps = running.get("energy", 0.0) * dt
        for i, b1 in enumerate(nxt.batteries):
            if b1.energy < b1.e_min - eps - VERIFY_TOL:
                raise InvariantViolation(f"t={rec.t:.3f}: robot {i} energy {b1.energy:.4f} below E_min")
    if not world.batteries_enabled and not world.obstacles and world.task != "tvd_coverage":
        if global_cost(world, nxt) > rec.cost + 1e-6:
            raise InvariantViolation(f"t={rec.t:.3f}: task cost increased")
    eps_o = running.get("obstacle", 0.0) * dt
    for m, obs in enumerate(world.obstacles):
        for i in range(snap.n):
            h0 = obstacle_barrier(snap.positions[i], snap.obstacle_pos[m], obs.d_o)
            h1 = obstacle_barrier(nxt.positions[i], nxt.obstacle_pos[m], obs.d_o)
            if h0 >= 0 and h1 < -eps_o - VERIFY_TOL:
                raise InvariantViolation(f"t={rec.t:.3f}: robot {i} breached obstacle {m} clearance")
