"""Constraint-driven coordinated control of multi-robot teams."""
from .barriers import BarrierSpec, ClassKappa, cbf_row, settling_time_bound, task_barrier
from .geometry import (ConvexPolygon, DensityField, GaussianComponent, VoronoiCell,
                       cell_mass_centroid, centroid_jacobian_fd, centroid_time_derivative_fd,
                       clip_halfplane, voronoi_partition)
from .qp import ConstraintRow, QpProblem, QpSolution, kkt_residual, solve, solve_single_closed_form
from .tasks import InteractionGraph, TaskEvaluation

__version__ = "0.1.0"
