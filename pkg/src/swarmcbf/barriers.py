"""Extended class-K functions, barrier-to-row synthesis and settling-time bounds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NegativeCost
from .qp import ConstraintRow


@dataclass(frozen=True)
class ClassKappa:
    """Extended class-K function on the whole real line.

    ``linear``:        alpha(x) = c * x
    ``signed_power``:  alpha(x) = c * sign(x) * |x|**gamma, gamma in (0, 1)

    The signed power is odd, so alpha(-J) is well defined for J >= 0; with
    c = 1, gamma = 1/3 it is the real cube root.
    """

    kind: str = "signed_power"
    c: float = 1.0
    gamma: float = 1.0 / 3.0

    def __post_init__(self):
        if self.kind not in ("linear", "signed_power"):
            raise ValueError(f"unknown class-K kind {self.kind!r}")
        if not self.c > 0:
            raise ValueError("class-K gain c must be positive")
        if self.kind == "signed_power" and not 0 < self.gamma < 1:
            raise ValueError("signed-power exponent must lie in (0, 1)")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "linear":
            out = self.c * x
        else:
            out = self.c * np.sign(x) * np.abs(x) ** self.gamma
        return float(out) if out.ndim == 0 else out

    def scaled(self, factor: float) -> "ClassKappa":
        return ClassKappa(self.kind, self.c * factor, self.gamma)

    @classmethod
    def linear(cls, c: float = 1.0) -> "ClassKappa":
        return cls("linear", c, 1.0)

    @classmethod
    def signed_power(cls, c: float = 1.0, gamma: float = 1.0 / 3.0) -> "ClassKappa":
        return cls("signed_power", c, gamma)

    @classmethod
    def cube_root(cls) -> "ClassKappa":
        return cls("signed_power", 1.0, 1.0 / 3.0)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c, "gamma": self.gamma}


@dataclass
class BarrierSpec:
    """Barrier value h with input gradient and drift: h_dot = grad_h_u . u + drift."""

    h: float
    grad_h_u: np.ndarray
    drift: float
    alpha: ClassKappa
    slackable: bool = False
    label: str = "custom"

    def __post_init__(self):
        self.grad_h_u = np.asarray(self.grad_h_u, dtype=float).ravel()
        if not (np.isfinite(self.h) and np.all(np.isfinite(self.grad_h_u)) and np.isfinite(self.drift)):
            raise ValueError("barrier spec entries must be finite")


def cbf_row(spec: BarrierSpec) -> ConstraintRow:
    """Row enforcing ``h_dot >= -alpha(h)`` (relaxed by delta when slackable).

    grad_h_u . u + delta >= -alpha(h) - drift     (slackable)
    grad_h_u . u         >= -alpha(h) - drift     (hard)
    """
    return ConstraintRow(
        a_u=spec.grad_h_u,
        a_delta=1.0 if spec.slackable else 0.0,
        b=-spec.alpha(spec.h) - spec.drift,
        label=spec.label,
        drift=spec.drift,
    )


def task_barrier(cost: float, grad_cost, alpha: ClassKappa, extra_rhs: float = 0.0) -> BarrierSpec:
    """Task encoded as the slackable barrier h = -J_i.

    ``extra_rhs`` is added to the row's right-hand side; it carries known
    time variation of the cost (moving-density coverage).
    """
    if cost < 0:
        raise NegativeCost(f"task cost {cost} < 0")
    g = np.asarray(grad_cost, dtype=float)
    return BarrierSpec(h=-float(cost), grad_h_u=-g, drift=-float(extra_rhs), alpha=alpha,
                       slackable=True, label="task")


def settling_time_bound(v0: float, c: float, gamma: float) -> float:
    """Finite-time settling bound V0**(1-gamma) / (c * (1-gamma))."""
    if v0 < 0:
        raise ValueError("V0 must be nonnegative")
    return v0 ** (1.0 - gamma) / (c * (1.0 - gamma))
