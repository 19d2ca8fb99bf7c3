"""
Data models shared across the solver: option enums, solver configuration,
solve results and run descriptions.
"""

from dataclasses import dataclass, field, asdict
from typing import Dict, List, Optional
from enum import Enum
import json

import numpy as np


class Layout(Enum):
    """Linear index mapping of a 3D field."""
    VERTICAL_CONTIGUOUS = "vertical_contiguous"
    HORIZONTAL_CONTIGUOUS = "horizontal_contiguous"


class Precision(Enum):
    """Scalar type of a whole solve."""
    SINGLE = "single"
    DOUBLE = "double"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(np.float32 if self is Precision.SINGLE else np.float64)

    @property
    def nbytes(self) -> int:
        return self.dtype.itemsize

    @classmethod
    def from_dtype(cls, dtype) -> 'Precision':
        return cls.SINGLE if np.dtype(dtype) == np.float32 else cls.DOUBLE


class Variant(Enum):
    """PCG loop organisation."""
    STANDARD = "standard"
    INTERLEAVED = "interleaved"


class Backend(Enum):
    """Operator representation."""
    MATRIX_FREE = "matrix_free"
    CSR = "csr"


class GeometryKind(Enum):
    """Horizontal panel geometry."""
    CUBED_SPHERE = "cubed-sphere"
    PLANAR = "planar"


class Kernel(Enum):
    """Kernels with a known FLOP / memory reference count."""
    SCAL = "scal"
    AXPY = "axpy"
    DOT = "dot"
    NRM2 = "nrm2"
    SPMV = "spmv"
    PREC = "prec"
    BLAS = "blas"
    PCG_TOTAL = "pcg_total"
    INTERLEAVED_SPMV = "interleaved_spmv"
    INTERLEAVED_PREC = "interleaved_prec"
    INTERLEAVED_TOTAL = "interleaved_total"
    CSR_SPMV = "csr_spmv"


class CacheLevel(Enum):
    """What is assumed to stay in cache when counting memory references."""
    NONE = "none"
    MATRIX_CACHED = "matrix_cached"
    COLUMNS_CACHED = "columns_cached"


@dataclass(frozen=True)
class CostReport:
    """Cost of one kernel per grid point and per iteration."""

    kernel: Kernel
    cache: CacheLevel
    flops: int
    mem_refs: int

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.value,
            "cache": self.cache.value,
            "flops": self.flops,
            "mem_refs": self.mem_refs,
        }


@dataclass(frozen=True)
class Throughput:
    """Rates derived from a cost report and a measured time."""

    flop_rate: float   # FLOP/s
    bandwidth: float   # bytes/s

    @property
    def gflops(self) -> float:
        return self.flop_rate / 1e9

    @property
    def gbytes(self) -> float:
        return self.bandwidth / 1e9


@dataclass
class SolverConfig:
    """Stopping criteria and execution options of a PCG solve."""

    epsilon: float = 1e-5
    tau: float = 1e-20
    maxiter: int = 100
    variant: Variant = Variant.INTERLEAVED
    backend: Backend = Backend.MATRIX_FREE
    precision: Precision = Precision.DOUBLE
    workers: int = 1
    fixed_iterations: bool = False  # ignore the convergence test (benchmarks)

    def __post_init__(self):
        from .errors import InvalidArgumentError

        if not self.epsilon > 0 or not self.tau > 0:
            raise InvalidArgumentError(
                f"epsilon and tau must be positive (got {self.epsilon}, {self.tau})"
            )
        if self.maxiter < 1:
            raise InvalidArgumentError(f"maxiter must be >= 1 (got {self.maxiter})")
        if self.workers < 1:
            raise InvalidArgumentError(f"workers must be >= 1 (got {self.workers})")

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "tau": self.tau,
            "maxiter": self.maxiter,
            "variant": self.variant.value,
            "backend": self.backend.value,
            "precision": self.precision.value,
            "workers": self.workers,
            "fixed_iterations": self.fixed_iterations,
        }


TIMING_KEYS = ("setup", "spmv", "prec", "blas",
               "interleaved_spmv", "interleaved_prec", "total")


@dataclass
class SolveResult:
    """Outcome and statistics of one PCG solve."""

    iterations: int = 0
    converged: bool = False
    residual_history: List[float] = field(default_factory=list)
    true_residual: Optional[float] = None
    timings: Dict[str, float] = field(
        default_factory=lambda: {key: 0.0 for key in TIMING_KEYS}
    )
    # CG scalars, aligned across variants: alphas/sigmas hold one entry per
    # iteration, kappas/betas one per search direction that was built
    alphas: List[float] = field(default_factory=list)
    betas: List[float] = field(default_factory=list)
    kappas: List[float] = field(default_factory=list)
    sigmas: List[float] = field(default_factory=list)
    metadata: Dict[str, object] = field(default_factory=dict)

    @property
    def initial_residual(self) -> float:
        return self.residual_history[0] if self.residual_history else 0.0

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else 0.0

    @property
    def relative_residual(self) -> float:
        r0 = self.initial_residual
        return self.final_residual / r0 if r0 > 0 else 0.0

    def time_per_iteration(self, key: str = "total") -> float:
        """Seconds per iteration spent in ``key``."""
        if self.iterations == 0:
            return 0.0
        return self.timings.get(key, 0.0) / self.iterations

    def residual_rows(self) -> List[tuple]:
        """(iteration, absolute residual, relative residual) rows."""
        r0 = self.initial_residual
        return [
            (j, res, res / r0 if r0 > 0 else 0.0)
            for j, res in enumerate(self.residual_history)
        ]

    def to_dict(self) -> dict:
        """Flat dictionary for the JSON report."""
        data = {
            "iterations": self.iterations,
            "converged": self.converged,
            "initial_residual": self.initial_residual,
            "final_residual": self.final_residual,
            "relative_residual": self.relative_residual,
            "true_residual": self.true_residual,
        }
        for key in TIMING_KEYS:
            data[f"time_{key}"] = self.timings.get(key, 0.0)
        data.update(self.metadata)
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass
class RunSpec:
    """Everything one CLI command needs to build and run a solve."""

    geometry: GeometryKind = GeometryKind.CUBED_SPHERE
    m: int = 64
    n_z: int = 64
    h_atmos: float = 0.01
    planar_extent: float = 2.0
    omega2: float = 6.71e-4
    lambda2: float = 3.32e-2
    backend: Backend = Backend.MATRIX_FREE
    variant: Variant = Variant.INTERLEAVED
    layout: Layout = Layout.VERTICAL_CONTIGUOUS
    precision: Precision = Precision.DOUBLE
    epsilon: float = 1e-5
    tau: float = 1e-20
    maxiter: int = 100
    workers: int = 1
    seed: int = 20130101
    out_json: Optional[str] = None
    out_csv: Optional[str] = None
    dump_matrix: Optional[str] = None
    dump_solution: Optional[str] = None
    dump_geometry: Optional[str] = None

    def validate(self):
        """Check every numeric field before anything is allocated."""
        from .errors import InvalidArgumentError

        if self.m < 1 or self.n_z < 1:
            raise InvalidArgumentError(f"grid must be at least 1x1x1 (got {self.m}x{self.m}x{self.n_z})")
        if not self.h_atmos > 0:
            raise InvalidArgumentError(f"h_atmos must be positive (got {self.h_atmos})")
        if not self.planar_extent > 0:
            raise InvalidArgumentError(f"planar extent must be positive (got {self.planar_extent})")
        if not self.omega2 > 0:
            raise InvalidArgumentError(f"omega2 must be positive (got {self.omega2})")
        if self.lambda2 < 0:
            raise InvalidArgumentError(f"lambda2 must be non-negative (got {self.lambda2})")
        # raises on its own
        self.solver_config()

    def solver_config(self, **overrides) -> SolverConfig:
        values = dict(
            epsilon=self.epsilon,
            tau=self.tau,
            maxiter=self.maxiter,
            variant=self.variant,
            backend=self.backend,
            precision=self.precision,
            workers=self.workers,
        )
        values.update(overrides)
        return SolverConfig(**values)

    @property
    def grid_points(self) -> int:
        return self.m * self.m * self.n_z

    def describe(self) -> dict:
        """Run metadata written next to results."""
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, Enum):
                data[key] = value.value
        return data


BENCH_FIELDS = (
    "backend", "variant", "layout", "precision", "workers", "m", "n_z",
    "iterations", "repetitions", "setup_ms", "time_per_iteration_ms",
    "spmv_ms", "prec_ms", "blas_ms", "interleaved_spmv_ms", "interleaved_prec_ms",
    "gflops_est", "gbytes_est", "speedup_vs_csr", "speedup_vs_standard",
)


@dataclass
class BenchRow:
    """One benchmark configuration: median times per iteration in ms."""

    backend: Backend
    variant: Variant
    layout: Layout
    precision: Precision
    workers: int
    m: int
    n_z: int
    iterations: int
    repetitions: int
    setup_ms: float = 0.0
    time_per_iteration_ms: float = 0.0
    spmv_ms: float = 0.0
    prec_ms: float = 0.0
    blas_ms: float = 0.0
    interleaved_spmv_ms: float = 0.0
    interleaved_prec_ms: float = 0.0
    gflops_est: float = 0.0   # cost model FLOPs / measured time
    gbytes_est: float = 0.0   # no-cache traffic model / measured time
    # median time of the CSR (standard) counterpart over this row's time; None
    # when the counterpart was not part of the sweep
    speedup_vs_csr: Optional[float] = None
    speedup_vs_standard: Optional[float] = None

    def to_row(self) -> list:
        data = asdict(self)
        return [
            data[key].value if isinstance(data[key], Enum) else data[key]
            for key in BENCH_FIELDS
        ]
