import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from swarmcbf.barriers import BarrierSpec, ClassKappa, cbf_row, settling_time_bound, task_barrier
from swarmcbf.errors import NegativeCost
from swarmcbf.qp import QpProblem, solve, solve_single_closed_form

KINDS = [ClassKappa.linear(1.0), ClassKappa.linear(2.5), ClassKappa.cube_root(),
         ClassKappa.signed_power(2.0, 0.5), ClassKappa.signed_power(0.7, 0.8)]


def test_cube_root_matches_real_cube_root():
    a = ClassKappa.cube_root()
    for v in (-27.0, -8.0, -1e-9, 0.0, 0.125, 64.0):
        assert a(v) == pytest.approx(math.copysign(abs(v) ** (1 / 3), v), rel=1e-14)


def test_constructor_validation():
    with pytest.raises(ValueError):
        ClassKappa("linear", 0.0)
    with pytest.raises(ValueError):
        ClassKappa.signed_power(1.0, 1.0)
    with pytest.raises(ValueError):
        ClassKappa("quadratic")


@pytest.mark.parametrize("alpha", KINDS, ids=lambda a: f"{a.kind}-{a.c}-{a.gamma:.3g}")
def test_monotone_and_zero_at_zero(alpha):
    x = np.sort(np.random.default_rng(0).uniform(-50, 50, 10_000))
    y = alpha(x)
    assert alpha(0.0) == 0.0
    assert np.all(np.diff(y) > 0)
    assert np.all(np.sign(y) == np.sign(x))


@settings(max_examples=200, deadline=None)
@given(st.floats(-1e3, -1e-6), st.floats(-1e3, -1e-6), st.floats(0.05, 0.95), st.floats(0.1, 10))
def test_superadditive_on_negatives(x1, x2, gamma, c):
    a = ClassKappa.signed_power(c, gamma)
    assert a(x1 + x2) >= a(x1) + a(x2) - 1e-12 * (abs(a(x1)) + abs(a(x2)))


def test_cbf_row_examples():
    lin = ClassKappa.linear(1.0)
    row = cbf_row(BarrierSpec(1.0, [1, 0], 0.0, lin))
    assert np.allclose(row.a_u, [1, 0]) and row.a_delta == 0 and row.b == -1.0
    row = cbf_row(BarrierSpec(0.0, [0.3, -0.2], 0.0, lin))
    assert row.b == 0.0
    # task barrier with J = 1, grad (1, 0): -grad.u + delta >= -alpha(-J) = 1
    row = cbf_row(task_barrier(1.0, [1, 0], lin))
    assert np.allclose(row.a_u, [-1, 0]) and row.a_delta == 1.0 and row.b == 1.0
    assert row.label == "task"


def test_drift_moves_rhs():
    row = cbf_row(BarrierSpec(2.0, [1, 0], 0.25, ClassKappa.linear(1.0), label="obstacle"))
    assert row.b == pytest.approx(-2.25) and row.drift == 0.25


def test_task_barrier_examples():
    sp = task_barrier(0.0, [0, 0], ClassKappa.cube_root())
    assert sp.h == 0.0 and np.all(sp.grad_h_u == 0) and sp.slackable
    # formation pair at distance 2 with desired 1 gives J = 0.5, grad (1, 0)
    sp = task_barrier(0.5, [1, 0], ClassKappa.cube_root())
    assert sp.h == -0.5 and np.allclose(sp.grad_h_u, [-1, 0])
    row = cbf_row(task_barrier(4.0, [1, 1], ClassKappa.cube_root()))
    assert row.b == pytest.approx(4 ** (1 / 3), rel=1e-14)
    assert row.b == pytest.approx(1.5874, abs=1e-4)
    with pytest.raises(NegativeCost):
        task_barrier(-1e-3, [0, 0], ClassKappa.cube_root())


def test_extra_rhs_adds_to_rhs():
    lin = ClassKappa.linear(1.0)
    base = cbf_row(task_barrier(1.0, [1, 0], lin))
    moved = cbf_row(task_barrier(1.0, [1, 0], lin, extra_rhs=0.3))
    assert moved.b - base.b == pytest.approx(0.3)


def test_synthesis_reproduces_closed_form():
    rng = np.random.default_rng(2)
    for _ in range(300):
        alpha = KINDS[rng.integers(len(KINDS))]
        J = float(rng.uniform(0, 10))
        g = rng.normal(size=2) * rng.uniform(0, 3)
        u = solve(QpProblem(2, 1.0, [cbf_row(task_barrier(J, g, alpha))])).u_star
        assert np.allclose(u, solve_single_closed_form(g, J, alpha), atol=1e-10)


def test_settling_time_bound_examples():
    assert settling_time_bound(0.0, 1.0, 1 / 3) == 0.0
    assert settling_time_bound(1.0, 1.0, 1 / 3) == pytest.approx(1.5)
    assert settling_time_bound(8.0, 2.0, 0.5) == pytest.approx(math.sqrt(8.0))
    with pytest.raises(ValueError):
        settling_time_bound(-1.0, 1.0, 0.5)


def test_settling_bound_against_scalar_ode():
    # V' = -c V^gamma reaches zero exactly at the bound
    c, gamma, v0 = 1.5, 0.4, 3.0
    T = settling_time_bound(v0, c, gamma)
    v, t, dt = v0, 0.0, 1e-5
    while v > 0:
        v -= dt * c * v ** gamma
        t += dt
    assert t == pytest.approx(T, rel=1e-3)
