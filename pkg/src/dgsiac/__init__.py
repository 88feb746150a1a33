"""Upwind DG discrete-ordinates transport with SIAC post-filtering."""
from .angular import OrdinateSet, ordinates_slab, ordinates_sphere_cl, parse_ordinates
from .dg_transport import DGField, PiecewisePolynomial, TransportOperator, TransportProblem
from .harness import ConvergenceTable, mms_slab_1d, mms_steady_2d, mms_transient_2d, run_convergence_study
from .mesh import Mesh, uniform_mesh
from .siac import SiacFilter, SiacKernel, build_kernel
from .solvers import NonConvergenceError, solve_steady, solve_transient, source_iteration

__version__ = "0.1.0"

__all__ = [
    "ConvergenceTable",
    "DGField",
    "Mesh",
    "NonConvergenceError",
    "OrdinateSet",
    "PiecewisePolynomial",
    "SiacFilter",
    "SiacKernel",
    "TransportOperator",
    "TransportProblem",
    "build_kernel",
    "mms_slab_1d",
    "mms_steady_2d",
    "mms_transient_2d",
    "ordinates_slab",
    "ordinates_sphere_cl",
    "parse_ordinates",
    "run_convergence_study",
    "solve_steady",
    "solve_transient",
    "source_iteration",
    "uniform_mesh",
]
