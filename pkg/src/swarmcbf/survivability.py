"""Energy and obstacle barriers plus the simulated batteries behind them."""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from .barriers import BarrierSpec, ClassKappa, cbf_row
from .qp import ConstraintRow

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BatteryState:
    """Linear battery: constant drain while active, constant charge at the station."""

    energy: float
    e_min: float = 0.5
    e_chg: float = 0.95
    drain_rate: float = 0.01
    charge_rate: float = 0.05
    charging: bool = False
    depleted: bool = False

    def __post_init__(self):
        if not 0 <= self.e_min < self.e_chg:
            raise ValueError("need 0 <= E_min < E_chg")
        if self.drain_rate <= 0 or self.charge_rate <= 0:
            raise ValueError("battery rates must be positive")

    @property
    def rate(self) -> float:
        """Current dE/dt implied by the charging flag."""
        return self.charge_rate if self.charging else -self.drain_rate


@dataclass(frozen=True)
class ChargingStation:
    location: tuple
    d_chg: float = 0.1

    def __post_init__(self):
        if self.d_chg <= 0:
            raise ValueError("charging radius must be positive")

    @property
    def xy(self) -> np.ndarray:
        return np.asarray(self.location, dtype=float)


@dataclass(frozen=True)
class Obstacle:
    """Obstacle looping through ``waypoints`` at constant ``speed``.

    A single waypoint (or zero speed) gives a static obstacle.
    """

    waypoints: tuple
    d_o: float = 0.15
    speed: float = 0.0

    def __post_init__(self):
        if self.d_o <= 0:
            raise ValueError("obstacle clearance must be positive")

    def _loop(self):
        w = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)
        seg = np.roll(w, -1, axis=0) - w
        lengths = np.linalg.norm(seg, axis=1)
        return w, seg, lengths

    def state(self, t: float):
        """Position and velocity at time t."""
        w, seg, lengths = self._loop()
        total = lengths.sum()
        if len(w) < 2 or self.speed == 0 or total == 0:
            return w[0].copy(), np.zeros(2)
        s = (self.speed * t) % total
        cum = np.concatenate([[0.0], np.cumsum(lengths)])
        k = int(np.searchsorted(cum, s, side="right") - 1)
        k = min(max(k, 0), len(w) - 1)
        while lengths[k] == 0:
            k = (k + 1) % len(w)
        frac = (s - cum[k]) / lengths[k]
        direction = seg[k] / lengths[k]
        return w[k] + frac * seg[k], self.speed * direction

    def position(self, t: float) -> np.ndarray:
        return self.state(t)[0]


# -- energy ------------------------------------------------------------------

def energy_barrier(x, battery: BatteryState, station: ChargingStation, k: float) -> float:
    """h_e = E - E_min - k * max(||x_c - x|| - d_chg, 0)^2."""
    r = float(np.linalg.norm(station.xy - np.asarray(x, dtype=float)))
    gap = max(r - station.d_chg, 0.0)
    return battery.energy - battery.e_min - k * gap * gap


def energy_barrier_grad(x, station: ChargingStation, k: float) -> np.ndarray:
    """dh_e/dx; zero inside the charging disk."""
    diff = np.asarray(x, dtype=float) - station.xy
    r = float(np.linalg.norm(diff))
    if r <= station.d_chg or r == 0.0:
        return np.zeros(2)
    return -2.0 * k * (r - station.d_chg) * diff / r


def energy_constraint_row(x, battery: BatteryState, station: ChargingStation, k: float,
                          alpha: ClassKappa, energy_rate: float = None) -> ConstraintRow:
    """Hard row dh_e/dx . u + E_dot >= -alpha(h_e).

    ``energy_rate`` defaults to the battery's current drain/charge rate.
    """
    rate = battery.rate if energy_rate is None else energy_rate
    spec = BarrierSpec(h=energy_barrier(x, battery, station, k),
                       grad_h_u=energy_barrier_grad(x, station, k),
                       drift=rate, alpha=alpha, slackable=False, label="energy")
    return cbf_row(spec)


def dock_constraint_row(x, station: ChargingStation, alpha: ClassKappa) -> ConstraintRow:
    """Hard row keeping a charging robot inside its disk: h_d = d_chg^2 - ||x - x_c||^2.

    Added only while the robot is charging, so it recharges all the way to
    E_chg instead of leaving as soon as the energy row relaxes.
    """
    diff = np.asarray(x, dtype=float) - station.xy
    spec = BarrierSpec(h=station.d_chg ** 2 - float(diff @ diff), grad_h_u=-2.0 * diff,
                       drift=0.0, alpha=alpha, slackable=False, label="energy")
    return cbf_row(spec)


def is_charging(x, battery: BatteryState, station: ChargingStation) -> bool:
    r = float(np.linalg.norm(np.asarray(x, dtype=float) - station.xy))
    return r <= station.d_chg and battery.energy < battery.e_chg


def battery_step(battery: BatteryState, charging: bool, dt: float) -> BatteryState:
    """Advance the battery one step; clamps to [0, E_chg] and flags depletion."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    rate = battery.charge_rate if charging else -battery.drain_rate
    e = min(max(battery.energy + rate * dt, 0.0), battery.e_chg)
    return replace(battery, energy=e, charging=charging, depleted=battery.depleted or e <= 0.0)


def calibrate_k(domain_diameter: float, drain_rate: float, speed: float) -> float:
    """Smallest k with k * diam^2 >= (drain / speed) * diam.

    The quadratic penalty then dominates the energy needed to cross the
    domain at ``speed``.
    """
    return drain_rate / (speed * domain_diameter)


# -- obstacles ---------------------------------------------------------------

def obstacle_barrier(x, obstacle_pos, d_o: float) -> float:
    diff = np.asarray(x, dtype=float) - np.asarray(obstacle_pos, dtype=float)
    return float(diff @ diff) - d_o * d_o


_KICK_AXIS = np.array([1.0, 0.0])


def obstacle_constraint_row(x, obstacle_pos, d_o: float, alpha: ClassKappa,
                            obstacle_vel=None) -> ConstraintRow:
    """Hard row 2 (x - x_o)^T u >= -alpha(h_o) + 2 (x - x_o)^T x_o_dot."""
    diff = np.asarray(x, dtype=float) - np.asarray(obstacle_pos, dtype=float)
    h = obstacle_barrier(x, obstacle_pos, d_o)
    vel = np.zeros(2) if obstacle_vel is None else np.asarray(obstacle_vel, dtype=float)
    grad = 2.0 * diff
    if np.linalg.norm(diff) < 1e-12:
        # zero gradient with h < 0: push along a fixed axis so recovery can start
        log.warning("robot coincides with obstacle; applying unit kick along %s", _KICK_AXIS)
        grad = _KICK_AXIS.copy()
    spec = BarrierSpec(h=h, grad_h_u=grad, drift=-float(2.0 * diff @ vel), alpha=alpha,
                       slackable=False, label="obstacle")
    return cbf_row(spec)
