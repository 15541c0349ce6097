"""Exception types raised across the package."""


class SwarmCBFError(Exception):
    """Base class for all package errors."""


class CoincidentGenerators(SwarmCBFError):
    """Two Voronoi generators closer than the coincidence tolerance."""


class ZeroMass(SwarmCBFError):
    """Density integrates to (numerically) zero over a cell."""


class Infeasible(SwarmCBFError):
    """The hard rows of a QP admit no solution."""

    def __init__(self, message, rows=None):
        super().__init__(message)
        self.rows = rows or []


class NumericallyIllConditioned(SwarmCBFError):
    """Active-set normal equations too ill-conditioned to certify a solution."""


class NegativeCost(SwarmCBFError):
    """A task cost evaluated below zero."""


class CoincidentNeighbors(SwarmCBFError):
    """Formation gradient undefined: two neighbors coincide with d_ij > 0."""


class SingularJacobian(SwarmCBFError):
    """(I - dG/dx) is not safely invertible."""


class SimulationAborted(SwarmCBFError):
    """A step failed; carries the step index and the failing robot."""

    def __init__(self, message, step=None, robot=None, cause=None):
        super().__init__(message)
        self.step = step
        self.robot = robot
        self.cause = cause


class InvariantViolation(SwarmCBFError):
    """A runtime invariant check failed (only raised in verify mode)."""


class ScenarioError(SwarmCBFError):
    """Base class for scenario parsing problems."""


class SchemaError(ScenarioError):
    """Scenario document has a missing or mistyped field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


class ValidationError(ScenarioError):
    """Scenario is well-formed but breaks an invariant."""
