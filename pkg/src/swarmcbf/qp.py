"""Exact active-set solver for minimum-energy QPs with one shared slack.

Problem family::

    min_{u, delta}  ||u||^2 + w * delta^2
    s.t.            a_u[k] . u + a_delta[k] * delta >= b[k]      k = 1..m

Slackable rows carry ``a_delta = +1`` (the row may be relaxed by a positive
delta); hard rows carry ``a_delta = 0``.  With at most a handful of rows per
robot, enumerating every active set is exact and cheap.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional

import numpy as np

from .errors import Infeasible, NumericallyIllConditioned

MAX_ROWS = 16
FEAS_TOL = 1e-9
DUAL_TOL = 1e-10
COND_LIMIT = 1e12
KKT_TOL = 1e-8

LABELS = ("task", "energy", "obstacle", "custom")


@dataclass
class ConstraintRow:
    """One linear inequality ``a_u . u + a_delta * delta >= b``.

    ``drift`` is the u-independent part of h_dot folded into ``b``; the solver
    ignores it, the simulator uses it to bound how fast h moves in a step.
    """

    a_u: np.ndarray
    a_delta: float
    b: float
    label: str = "custom"
    drift: float = 0.0

    def __post_init__(self):
        self.a_u = np.asarray(self.a_u, dtype=float).ravel()
        self.a_delta = float(self.a_delta)
        self.b = float(self.b)
        self.drift = float(self.drift)
        if self.label not in LABELS:
            raise ValueError(f"unknown row label {self.label!r}")

    @property
    def hard(self) -> bool:
        return self.a_delta == 0.0

    def value(self, u, delta=0.0) -> float:
        """Row slack: ``a_u . u + a_delta * delta - b`` (>= 0 when satisfied)."""
        return float(self.a_u @ np.asarray(u, dtype=float) + self.a_delta * delta - self.b)

    def scaled(self, s: float) -> "ConstraintRow":
        return ConstraintRow(self.a_u * s, self.a_delta * s, self.b * s, self.label, self.drift * s)


@dataclass
class QpProblem:
    dim_u: int = 2
    slack_weight: float = 1.0
    rows: list = field(default_factory=list)

    def __post_init__(self):
        if not self.slack_weight > 0:
            raise ValueError("slack weight must be positive")

    @property
    def has_slack(self) -> bool:
        return any(not r.hard for r in self.rows)

    def matrices(self):
        """(A, b) over the stacked variable z = [u, delta]."""
        m = len(self.rows)
        A = np.zeros((m, self.dim_u + 1))
        b = np.zeros(m)
        for k, r in enumerate(self.rows):
            A[k, :self.dim_u] = r.a_u
            A[k, self.dim_u] = r.a_delta
            b[k] = r.b
        return A, b


@dataclass
class QpSolution:
    u_star: np.ndarray
    delta_star: float
    lam: np.ndarray
    active_set: tuple
    kkt_residual: float

    @property
    def objective(self) -> float:
        return float(self.u_star @ self.u_star)


def kkt_residual(problem: QpProblem, u, delta, lam) -> float:
    """Largest KKT violation of a candidate primal/dual point.

    Max of primal infeasibility, dual negativity, complementary slackness
    and the stationarity norm ``||[2u, 2 w delta] - sum lam_k [a_u,k, a_delta,k]||``.
    """
    u = np.asarray(u, dtype=float)
    lam = np.asarray(lam, dtype=float).ravel()
    if not problem.rows:
        return float(max(2 * np.linalg.norm(u), 2 * problem.slack_weight * abs(delta)))
    A, b = problem.matrices()
    z = np.append(u, delta)
    slack = A @ z - b
    primal = max(0.0, float(-slack.min()))
    dual = max(0.0, float(-lam.min()))
    comp = float(np.abs(lam * slack).max())
    grad = np.append(2 * u, 2 * problem.slack_weight * delta)
    stat = float(np.linalg.norm(grad - A.T @ lam))
    return max(primal, dual, comp, stat)


def _hessian_inv(problem: QpProblem) -> np.ndarray:
    # objective z^T H z with H = diag(1, ..., 1, w); gradient 2 H z
    return np.append(np.ones(problem.dim_u), 1.0 / problem.slack_weight)


def solve(problem: QpProblem) -> QpSolution:
    """Global minimizer by enumeration of active sets.

    Subsets are tried by increasing cardinality, then lexicographically, so
    ties between degenerate active sets resolve deterministically.  Subsets
    with singular or ill-conditioned normal equations are skipped.
    """
    m = len(problem.rows)
    d = problem.dim_u
    if m > MAX_ROWS:
        raise ValueError(f"{m} rows exceeds the enumeration cap of {MAX_ROWS}")
    if m == 0:
        return QpSolution(np.zeros(d), 0.0, np.zeros(0), (), 0.0)

    A, b = problem.matrices()
    hinv = _hessian_inv(problem)
    scale = 1.0 + float(np.abs(A).max()) + float(np.abs(b).max())
    skipped_ill = False

    for size in range(m + 1):
        for active in combinations(range(m), size):
            if size == 0:
                z = np.zeros(d + 1)
                lam_s = np.zeros(0)
            else:
                As = A[list(active)]
                # stationarity: 2 H z = As^T lam  ->  z = H^-1 As^T lam / 2
                N = (As * hinv) @ As.T
                cond = np.linalg.cond(N)
                if not np.isfinite(cond) or cond > COND_LIMIT:
                    skipped_ill = skipped_ill or np.isfinite(cond)
                    continue
                lam_s = 2.0 * np.linalg.solve(N, b[list(active)])
                if lam_s.min() < -DUAL_TOL * scale:
                    continue
                z = 0.5 * hinv * (As.T @ lam_s)
            if np.all(A @ z - b >= -FEAS_TOL * scale):
                lam = np.zeros(m)
                lam[list(active)] = np.maximum(lam_s, 0.0)
                u, delta = z[:d], float(z[d])
                res = kkt_residual(problem, u, delta, lam)
                if res > KKT_TOL * scale:
                    raise NumericallyIllConditioned(
                        f"KKT residual {res:.3g} for active set {active}")
                return QpSolution(u, delta, lam, tuple(active), res)

    hard = [k for k, r in enumerate(problem.rows) if r.hard]
    msg = "no feasible active set; hard rows %s" % hard
    if skipped_ill:
        msg += " (some active sets skipped as ill-conditioned)"
    raise Infeasible(msg, rows=hard)


def solve_single_closed_form(grad_j, cost: float, alpha) -> np.ndarray:
    """Minimizer of the one-row task QP with unit slack weight.

    ``u* = alpha(-J) * grad_J / (1 + ||grad_J||^2)``.
    """
    g = np.asarray(grad_j, dtype=float)
    return float(alpha(-cost)) * g / (1.0 + float(g @ g))
