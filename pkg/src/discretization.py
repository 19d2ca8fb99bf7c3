"""
Vertical discretisation and cost accounting.

The operator on every column is fixed by four vectors of length n_z which
do not depend on the horizontal cell. They are stored in scaled form
a' = a/d, b' = b/d, c' = c/d together with d.
"""

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .errors import InvalidArgumentError
from .geometry import VerticalGrid
from .models import CacheLevel, CostReport, Kernel, Throughput


@dataclass(frozen=True)
class VerticalProfile:
    """Scaled per-level coefficients of the vertical operator."""

    n_z: int
    a_prime: np.ndarray
    b_prime: np.ndarray
    c_prime: np.ndarray
    d: np.ndarray
    omega2: float
    lambda2: float

    def unscaled(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Reconstruct (a, b, c, d) from the stored scaled form."""
        return self.a_prime * self.d, self.b_prime * self.d, self.c_prime * self.d, self.d

    def astype(self, dtype) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(a', b', c', d) cast to the scalar type of a solve."""
        return tuple(
            np.ascontiguousarray(v, dtype=dtype)
            for v in (self.a_prime, self.b_prime, self.c_prime, self.d)
        )


def build_vertical_profile(vgrid: VerticalGrid, omega2: float, lambda2: float) -> VerticalProfile:
    """
    Finite volume coefficients of the model equation on a vertical grid.

    With the radial volume factor v_k = (r_{k+1}^3 - r_k^3)/3 and the
    distance delta between neighbouring cell centres:

        a_k = v_k                              (zero order term)
        d_k = -omega2 * v_k                    (horizontal Laplacian)
        b_k = -omega2 * lambda2 * r_{k+1}^2 / delta_{k+1/2},  b_{n_z-1} = 0
        c_k = b_{k-1},  c_0 = 0

    Args:
        vgrid: Vertical grid
        omega2: Squared time step parameter, > 0
        lambda2: Squared vertical coupling parameter, >= 0

    Returns:
        VerticalProfile holding a', b', c' and d
    """
    if not omega2 > 0:
        raise InvalidArgumentError(f"omega2 must be positive (got {omega2})")
    if not lambda2 >= 0:
        raise InvalidArgumentError(f"lambda2 must be non-negative (got {lambda2})")

    r = np.asarray(vgrid.r, dtype=np.float64)
    n_z = vgrid.n_z

    v = (r[1:] ** 3 - r[:-1] ** 3) / 3.0
    centers = 0.5 * (r[1:] + r[:-1])
    delta = np.diff(centers)

    a = v
    d = -omega2 * v
    b = np.zeros(n_z)
    b[:-1] = -omega2 * lambda2 * r[1:-1] ** 2 / delta
    c = np.zeros(n_z)
    c[1:] = b[:-1]

    a_prime = a / d
    b_prime = b / d
    c_prime = c / d

    for vec in (a_prime, b_prime, c_prime, d):
        vec.setflags(write=False)

    return VerticalProfile(
        n_z=n_z,
        a_prime=a_prime,
        b_prime=b_prime,
        c_prime=c_prime,
        d=d,
        omega2=float(omega2),
        lambda2=float(lambda2),
    )


# Per grid point and per iteration; memory references under no cache,
# cached profile vectors, and cached profile vectors plus column data.
_BLAS_COSTS: Dict[Kernel, Tuple[int, int]] = {
    Kernel.SCAL: (1, 2),
    Kernel.AXPY: (2, 3),
    Kernel.DOT: (2, 2),
    Kernel.NRM2: (2, 1),
}

_KERNEL_COSTS: Dict[Kernel, Tuple[int, Tuple[int, int, int]]] = {
    Kernel.SPMV: (20, (12, 8, 6)),
    Kernel.PREC: (13, (12, 8, 5)),
    Kernel.BLAS: (13, (16, 16, 16)),
    Kernel.PCG_TOTAL: (46, (40, 32, 27)),
    Kernel.INTERLEAVED_SPMV: (28, (17, 13, 11)),
    Kernel.INTERLEAVED_PREC: (19, (16, 12, 9)),
    Kernel.INTERLEAVED_TOTAL: (47, (33, 25, 20)),
    # stored matrix entries change from cell to cell and never stay cached
    Kernel.CSR_SPMV: (14, (22, 22, 22)),
}

_CACHE_COLUMN = {
    CacheLevel.NONE: 0,
    CacheLevel.MATRIX_CACHED: 1,
    CacheLevel.COLUMNS_CACHED: 2,
}

TABLE_ORDER = (
    Kernel.SPMV, Kernel.PREC, Kernel.BLAS, Kernel.PCG_TOTAL,
    Kernel.INTERLEAVED_SPMV, Kernel.INTERLEAVED_PREC, Kernel.INTERLEAVED_TOTAL,
)
BLAS_ORDER = (Kernel.SCAL, Kernel.AXPY, Kernel.DOT, Kernel.NRM2)


def cost_model(kernel: Kernel, cache: CacheLevel = CacheLevel.NONE) -> CostReport:
    """FLOPs and memory references per grid point for one kernel."""
    kernel = Kernel(kernel)
    cache = CacheLevel(cache)

    if kernel in _BLAS_COSTS:
        flops, mem = _BLAS_COSTS[kernel]
        return CostReport(kernel=kernel, cache=cache, flops=flops, mem_refs=mem)

    flops, mem_by_cache = _KERNEL_COSTS[kernel]
    return CostReport(kernel=kernel, cache=cache, flops=flops,
                      mem_refs=mem_by_cache[_CACHE_COLUMN[cache]])


def cost_table() -> list:
    """Every cost report: kernels x cache levels, then BLAS ops, then CSR."""
    rows = [cost_model(k, c) for k in TABLE_ORDER for c in CacheLevel]
    rows += [cost_model(k, CacheLevel.NONE) for k in BLAS_ORDER]
    rows += [cost_model(Kernel.CSR_SPMV, c) for c in CacheLevel]
    return rows


def throughput_estimate(report: CostReport, grid_points: int, seconds: float,
                        scalar_bytes: int = 8) -> Throughput:
    """
    Convert a timing into FLOP/s and bytes/s using the counted costs.

    The bandwidth is a traffic model (mem_refs x scalar width), not a
    hardware measurement.
    """
    if not seconds > 0:
        raise InvalidArgumentError(f"seconds must be positive (got {seconds})")
    flop_rate = report.flops * grid_points / seconds
    bandwidth = report.mem_refs * grid_points * scalar_bytes / seconds
    return Throughput(flop_rate=flop_rate, bandwidth=bandwidth)
