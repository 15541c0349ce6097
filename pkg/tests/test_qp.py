import numpy as np
import pytest

from oracles import face_grid_min, qp_objective_grid
from swarmcbf.barriers import ClassKappa, cbf_row, task_barrier
from swarmcbf.errors import Infeasible
from swarmcbf.qp import ConstraintRow, QpProblem, kkt_residual, solve, solve_single_closed_form


def one_row_problem():
    # -grad J . u + delta >= alpha(-J) rearranged: J = 1, grad = (1, 0), identity alpha
    return QpProblem(2, 1.0, [ConstraintRow([-1.0, 0.0], 1.0, 1.0, "task")])


def test_no_rows_gives_zero():
    sol = solve(QpProblem(2, 1.0, []))
    assert np.all(sol.u_star == 0) and sol.delta_star == 0


def test_one_row_example():
    sol = solve(one_row_problem())
    assert np.allclose(sol.u_star, [-0.5, 0.0], atol=1e-12)
    assert sol.delta_star == pytest.approx(0.5)
    assert sol.lam[0] == pytest.approx(1.0)
    assert sol.kkt_residual <= 1e-10


def test_one_row_example_against_coarse_grid():
    # plain 1e-3 lattice over (u, delta), no elimination tricks
    g = np.arange(-1.0, 1.0 + 1e-9, 1e-3)
    ux, d = np.meshgrid(g, g)
    feas = -ux + d >= 1.0 - 1e-12
    f = np.where(feas, ux ** 2 + d ** 2, np.inf)  # u_y = 0 is optimal by symmetry
    k = np.unravel_index(np.argmin(f), f.shape)
    assert ux[k] == pytest.approx(-0.5, abs=1e-3) and d[k] == pytest.approx(0.5, abs=1e-3)


def test_contradictory_hard_rows():
    p = QpProblem(2, 1.0, [ConstraintRow([1, 0], 0, 1.0), ConstraintRow([-1, 0], 0, 0.0)])
    with pytest.raises(Infeasible) as exc:
        solve(p)
    assert exc.value.rows == [0, 1]


def test_closed_form_examples():
    lin = ClassKappa.linear(1.0)
    assert np.all(solve_single_closed_form([0, 0], 3.0, lin) == 0)
    assert np.allclose(solve_single_closed_form([1, 0], 1.0, lin), [-0.5, 0])
    # cube root of -8 is -2: u = -2 (2, 0) / 5
    u = solve_single_closed_form([2, 0], 8.0, ClassKappa.cube_root())
    assert np.allclose(u, [-0.8, 0.0], atol=1e-14)
    row = cbf_row(task_barrier(8.0, [2, 0], ClassKappa.cube_root()))
    assert np.allclose(solve(QpProblem(2, 1.0, [row])).u_star, u, atol=1e-12)


def test_kkt_residual_cases():
    p = one_row_problem()
    sol = solve(p)
    assert kkt_residual(p, sol.u_star, sol.delta_star, sol.lam) <= 1e-10
    bad = sol.u_star + np.array([0.1, 0.0])
    assert kkt_residual(p, bad, sol.delta_star, sol.lam) >= 0.01
    assert kkt_residual(QpProblem(2, 1.0, []), np.zeros(2), 0.0, np.zeros(0)) == 0.0


def test_hard_row_active():
    # u_x >= 2 forces the minimum onto the boundary with multiplier 4
    sol = solve(QpProblem(2, 1.0, [ConstraintRow([1, 0], 0, 2.0, "energy")]))
    assert np.allclose(sol.u_star, [2, 0]) and sol.lam[0] == pytest.approx(4.0)
    assert sol.active_set == (0,)


def test_row_count_cap():
    rows = [ConstraintRow([1, 0], 0, -1.0)] * 17
    with pytest.raises(ValueError):
        solve(QpProblem(2, 1.0, rows))


def test_invalid_weight_and_label():
    with pytest.raises(ValueError):
        QpProblem(2, 0.0, [])
    with pytest.raises(ValueError):
        ConstraintRow([1, 0], 0, 0, "bogus")


def random_problem(rng):
    """Random feasible problem with up to four rows; hard rows hold at some u0 with margin."""
    m = int(rng.integers(1, 5))
    u0 = rng.uniform(-1, 1, 2)
    rows = []
    for k in range(m):
        a = rng.normal(size=2)
        if k > 0 and rng.random() < 0.5:
            rows.append(ConstraintRow(a, 0.0, float(a @ u0) - rng.uniform(0.2, 1.0), "obstacle"))
        else:
            rows.append(ConstraintRow(a, 1.0, rng.normal(), "task"))
    return QpProblem(2, float(rng.uniform(0.5, 4.0)), rows)


def test_random_problems_match_face_grid():
    rng = np.random.default_rng(11)
    for _ in range(150):
        p = random_problem(rng)
        sol = solve(p)
        assert sol.kkt_residual <= 1e-8
        A = [r.a_u for r in p.rows]
        ad, b = [r.a_delta for r in p.rows], [r.b for r in p.rows]
        ug, f_grid = face_grid_min(A, ad, b, p.slack_weight)
        (f_sol,), _ = qp_objective_grid(A, ad, b, p.slack_weight, sol.u_star[None])
        # the solver matches the best feasible lattice point in value and position
        gap = f_grid - f_sol
        assert gap >= -1e-10 * (1 + f_sol)  # roundoff: lattice points are feasible to 1e-12
        assert gap <= 1e-10
        assert np.linalg.norm(ug - sol.u_star) <= 1e-6


def test_positive_row_scaling_invariance():
    rng = np.random.default_rng(5)
    for _ in range(50):
        p = random_problem(rng)
        s = float(rng.uniform(0.1, 10))
        # hard rows only: their multipliers rescale by 1/s
        q = QpProblem(2, p.slack_weight, [r.scaled(s) if r.hard else r for r in p.rows])
        a, b = solve(p), solve(q)
        assert np.allclose(a.u_star, b.u_star, atol=1e-9)
        assert a.delta_star == pytest.approx(b.delta_star, abs=1e-9)
        for k, r in enumerate(p.rows):
            if r.hard:
                assert b.lam[k] == pytest.approx(a.lam[k] / s, abs=1e-8)


def test_all_rows_scaled():
    rng = np.random.default_rng(6)
    for _ in range(50):
        p = random_problem(rng)
        q = QpProblem(2, p.slack_weight, [r.scaled(3.0) for r in p.rows])
        assert np.allclose(solve(p).u_star, solve(q).u_star, atol=1e-9)


def test_deterministic_tie_break():
    # duplicated row: both singleton sets are optimal, the lower index wins
    r = ConstraintRow([1, 0], 0, 1.0)
    sol = solve(QpProblem(2, 1.0, [r, r]))
    assert sol.active_set == (0,)
