"""
COLUMN PCG - Matrix-free PCG for strongly anisotropic elliptic problems
"""

from .errors import (
    BreakdownError,
    ColumnSolverError,
    GridIndexError,
    InvalidArgumentError,
    OracleTooLargeError,
)
from .models import (
    Backend,
    CacheLevel,
    GeometryKind,
    Kernel,
    Layout,
    Precision,
    RunSpec,
    SolveResult,
    SolverConfig,
    Variant,
)
from .geometry import build_cubed_sphere_panel, build_graded_vertical_grid, build_planar_panel
from .discretization import build_vertical_profile, cost_model, throughput_estimate
from .fields import Field3D, axpy, dot, index, nrm2, scal
from .matrixfree import MatrixFreeOperator, OperatorContext, build_context, build_problem
from .csr import CsrOperator, assemble_csr, assemble_dense, assemble_preconditioner
from .solver import pcg_interleaved, pcg_standard, solve, true_residual

__version__ = "0.1.0"
__all__ = [
    "BreakdownError",
    "ColumnSolverError",
    "GridIndexError",
    "InvalidArgumentError",
    "OracleTooLargeError",
    "Backend",
    "CacheLevel",
    "GeometryKind",
    "Kernel",
    "Layout",
    "Precision",
    "RunSpec",
    "SolveResult",
    "SolverConfig",
    "Variant",
    "build_cubed_sphere_panel",
    "build_graded_vertical_grid",
    "build_planar_panel",
    "build_vertical_profile",
    "cost_model",
    "throughput_estimate",
    "Field3D",
    "axpy",
    "dot",
    "index",
    "nrm2",
    "scal",
    "MatrixFreeOperator",
    "OperatorContext",
    "build_context",
    "build_problem",
    "CsrOperator",
    "assemble_csr",
    "assemble_dense",
    "assemble_preconditioner",
    "pcg_interleaved",
    "pcg_standard",
    "solve",
    "true_residual",
]
