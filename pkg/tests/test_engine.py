import numpy as np
import pytest

from swarmcbf import engine
from swarmcbf import geometry as geo
from swarmcbf import scenario as scn
from swarmcbf.barriers import ClassKappa
from swarmcbf.errors import SimulationAborted
from swarmcbf.survivability import BatteryState, ChargingStation, Obstacle
from swarmcbf.tasks import InteractionGraph

BOX = geo.ConvexPolygon.from_points([[-2, -2], [2, -2], [2, 2], [-2, 2]])


def formation_world(graph, **kw):
    return engine.World(task="formation", domain=BOX, density=geo.DensityField.uniform(), graph=graph,
                        alpha=ClassKappa.cube_root(), **kw)


def test_sensing_graph_examples():
    R = 1.0
    assert engine.sensing_graph([[0, 0], [R, 0]], R).edges == {(0, 1): 0.0}
    assert engine.sensing_graph([[0, 0], [1.5, 0], [0, 1.5]], R).edges == {}
    g = engine.sensing_graph([[0, 0], [0.9, 0], [1.8, 0]], R)
    assert set(g.edges) == {(0, 1), (1, 2)}


def test_unicycle_map_examples():
    assert np.allclose(engine.unicycle_map([1, 0], 0.0, 0.1), (1, 0))
    assert np.allclose(engine.unicycle_map([0, 1], np.pi / 2, 0.1), (1, 0))
    assert np.allclose(engine.unicycle_map([0, 1], 0.0, 0.1), (0, 10))


def test_unicycle_offset_point_recovers_input():
    # the off-axle point x + d (cos, sin) moves with u_des to first order
    rng = np.random.default_rng(0)
    d = 0.1
    for _ in range(20):
        th = rng.uniform(-np.pi, np.pi)
        u = rng.normal(size=2)
        v, w = engine.unicycle_map(u, th, d)
        pdot = v * np.array([np.cos(th), np.sin(th)]) + d * w * np.array([-np.sin(th), np.cos(th)])
        assert np.allclose(pdot, u, atol=1e-12)


def test_wrap_angle():
    assert engine.wrap_angle(np.pi) == pytest.approx(np.pi)
    assert engine.wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert engine.wrap_angle(3 * np.pi / 2) == pytest.approx(-np.pi / 2)


def test_formation_problem_is_one_row():
    g = InteractionGraph(2, {(0, 1): 1.0})
    w = formation_world(g)
    snap = engine.make_snapshot(w, 0.0, [[0, 0], [2, 0]])
    p = engine.assemble_robot_qp(0, snap, w)
    assert len(p.rows) == 1 and not p.rows[0].hard


def test_persistence_row_count():
    g = InteractionGraph(2, {(0, 1): 1.0})
    w = formation_world(g, stations=[ChargingStation((-1.5, 0)), ChargingStation((-1.5, 1))],
                        obstacles=[Obstacle(((0.5, 0.5),), 0.1), Obstacle(((-0.5, 0.5),), 0.1)],
                        energy_k=0.04, batteries_enabled=True, sensing_radius=3.0)
    bats = [BatteryState(0.9), BatteryState(0.9)]
    snap = engine.make_snapshot(w, 0.0, [[0, 0], [1, 0]], batteries=bats)
    labels = [r.label for r in engine.assemble_robot_qp(0, snap, w).rows]
    assert labels == ["task", "energy", "obstacle", "obstacle"]
    # a robot charging inside its disk also gets the dock row
    snap = engine.make_snapshot(w, 0.0, [[-1.5, 0.02], [1, 0]], batteries=[BatteryState(0.7), bats[1]])
    labels = [r.label for r in engine.assemble_robot_qp(0, snap, w).rows]
    assert labels == ["task", "energy", "energy", "obstacle", "obstacle"]


def test_obstacle_out_of_range_skipped():
    g = InteractionGraph(2, {(0, 1): 1.0})
    w = formation_world(g, obstacles=[Obstacle(((1.9, 1.9),), 0.1)], sensing_radius=0.5)
    snap = engine.make_snapshot(w, 0.0, [[0, 0], [1, 0]])
    assert len(engine.assemble_robot_qp(0, snap, w).rows) == 1


def test_complete_task_yields_zero_input():
    g = InteractionGraph(2, {(0, 1): 1.0})
    w = formation_world(g)
    snap = engine.make_snapshot(w, 0.0, [[0, 0], [1, 0]])
    nxt, rec = engine.step(snap, w, 0.01)
    assert np.all(rec.inputs == 0) and np.all(rec.deltas == 0)
    assert np.array_equal(nxt.positions, snap.positions) and nxt.t == pytest.approx(0.01)


def test_saturate():
    u = np.array([[3.0, 4.0], [0.3, 0.4]])
    assert np.allclose(engine.saturate(u, 1.0), [[0.6, 0.8], [0.3, 0.4]])
    assert np.array_equal(engine.saturate(u, None), u)


def test_formation_step_matches_closed_form():
    g = InteractionGraph(2, {(0, 1): 1.0})
    w = formation_world(g)
    snap = engine.make_snapshot(w, 0.0, [[-1, 0], [1, 0]])
    nxt, rec = engine.step(snap, w, 0.01)
    # J_0 = 0.5, grad (-1, 0): u = cbrt(-0.5) * (-1, 0) / 2
    u0 = -(0.5 ** (1 / 3)) * np.array([-1.0, 0.0]) / 2
    assert np.allclose(rec.inputs[0], u0)
    assert np.allclose(nxt.positions[0], [-1, 0] + 0.01 * u0)


def test_wall_projection():
    g = InteractionGraph(2, {(0, 1): 10.0})
    w = formation_world(g)
    snap = engine.make_snapshot(w, 0.0, [[-1.999, 0], [1.999, 0]])
    nxt, _ = engine.step(snap, w, 0.5)
    assert np.all(BOX.contains(nxt.positions))


def test_unicycle_step_moves_offset_point():
    g = InteractionGraph(2, {(0, 1): 1.0})
    w = formation_world(g, dynamics="unicycle", d_offset=0.05)
    snap = engine.make_snapshot(w, 0.0, [[-1, 0], [1, 0]], headings=[0.3, -2.0])
    nxt, rec = engine.step(snap, w, 1e-4)
    # for small dt the tracked point follows u_des
    assert np.allclose((nxt.positions - snap.positions) / 1e-4, rec.inputs, atol=1e-3)


def test_zero_horizon_gives_empty_series():
    sc = scn.preset("hexagon-formation")
    doc = sc.to_dict()
    doc["horizon"] = 0
    m = scn.run(scn.parse_dict(doc))
    assert m.n_steps == 0 and m.t.shape == (0,) and m.settling_time is None


def test_determinism():
    doc = scn.preset("hexagon-formation").to_dict()
    doc["horizon"] = 0.5
    sc = scn.parse_dict(doc)
    a, b = scn.run(sc), scn.run(sc)
    assert np.array_equal(a.cost, b.cost) and np.array_equal(a.positions, b.positions)


def test_decentralization_invariance_formation():
    g = InteractionGraph.from_pairs(4, [(0, 1), (1, 2), (2, 3)], 1.0)
    w = formation_world(g)
    x = np.array([[0, 0], [1.2, 0.1], [1.5, 1.2], [0.2, 1.4]])
    p0 = engine.assemble_robot_qp(0, engine.make_snapshot(w, 0.0, x), w)
    y = x.copy()
    y[2] += 0.1
    y[3] -= 0.1
    p1 = engine.assemble_robot_qp(0, engine.make_snapshot(w, 0.0, y), w)
    assert all(np.array_equal(r.a_u, s.a_u) and r.b == s.b for r, s in zip(p0.rows, p1.rows))


def test_settling_time_and_cycles_helpers():
    t = np.arange(10) * 1.0
    cost = np.array([5, 3, 1e-5, 1, 1e-5, 1e-5, 1e-5, 1e-5, 1e-5, 1e-5])
    assert engine.settling_time(t, cost, 1e-4, window=3) == 4.0
    assert engine.settling_time(t, cost, 1e-9, window=3) is None
    e = [0.95, 0.7, 0.6, 0.95, 0.8, 0.6, 0.95, 0.9]
    assert engine.charging_cycles(e, 0.5, 0.95) == 2


def test_infeasible_step_aborts_with_robot():
    g = InteractionGraph(2, {(0, 1): 1.0})
    # robot 0 sits inside two overlapping obstacles that demand opposite motion
    w = formation_world(g, obstacles=[Obstacle(((0.1, 0.0),), 0.2), Obstacle(((-0.1, 0.0),), 0.2)],
                        surv_alpha=ClassKappa.linear(1e-6), sensing_radius=1.0)
    snap = engine.make_snapshot(w, 0.0, [[0, 0], [1.5, 1.5]])
    with pytest.raises(SimulationAborted) as exc:
        engine.step(snap, w, 0.01)
    assert exc.value.robot == 0


def test_abort_ok_returns_partial():
    g = InteractionGraph(2, {(0, 1): 1.0})
    w = formation_world(g, obstacles=[Obstacle(((0.1, 0.0),), 0.2), Obstacle(((-0.1, 0.0),), 0.2)],
                        surv_alpha=ClassKappa.linear(1e-6), sensing_radius=1.0)
    snap = engine.make_snapshot(w, 0.0, [[0, 0], [1.5, 1.5]])
    m = engine.simulate(w, snap, 0.01, 5, abort_ok=True)
    assert m.aborted and m.n_steps == 0
