"""
Matrix-free operator: stencil SpMV, vertical line preconditioner and the two
interleaved PCG kernels.

Nothing is stored per cell. Every kernel rebuilds the stencil from the
per-level vectors of the :class:`VerticalProfile` and the per-column
geometry (|T|, alpha) of the :class:`PanelGeometry`.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

from . import kernels
from .discretization import VerticalProfile, build_vertical_profile
from .errors import BreakdownError, InvalidArgumentError
from .fields import Field3D, check_conformant, check_distinct, column_bases
from .geometry import (
    PanelGeometry,
    VerticalGrid,
    build_cubed_sphere_panel,
    build_graded_vertical_grid,
    build_planar_panel,
)
from .models import GeometryKind


log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OperatorContext:
    """Precomputed data shared read-only by every kernel."""

    profile: VerticalProfile
    geometry: PanelGeometry
    _arrays: Dict[str, tuple] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.profile.n_z < 1 or self.geometry.m < 1:
            raise InvalidArgumentError("empty profile or geometry")

    @property
    def m(self) -> int:
        return self.geometry.m

    @property
    def n_z(self) -> int:
        return self.profile.n_z

    @property
    def size(self) -> int:
        return self.m * self.m * self.n_z

    def profile_arrays(self, dtype) -> Tuple[np.ndarray, ...]:
        """(a', b', c', d) in the scalar type of a solve."""
        key = f"profile-{np.dtype(dtype).name}"
        if key not in self._arrays:
            self._arrays[key] = self.profile.astype(dtype)
        return self._arrays[key]

    def column_arrays(self, dtype) -> Tuple[np.ndarray, ...]:
        """
        Per-column (|T|, alpha_T, alpha_west, alpha_east, alpha_south,
        alpha_north), flattened in column order ``i*m + j``.
        """
        key = f"columns-{np.dtype(dtype).name}"
        if key not in self._arrays:
            geo = self.geometry
            west, east, south, north = geo.neighbour_alphas()
            self._arrays[key] = tuple(
                np.ascontiguousarray(a, dtype=dtype).reshape(-1)
                for a in (geo.cell_area, geo.alpha_diag, west, east, south, north)
            )
        return self._arrays[key]

    def check_field(self, x: Field3D):
        if x.m != self.m or x.n_z != self.n_z:
            raise InvalidArgumentError(
                f"field is {x.m}x{x.m}x{x.n_z}, operator is {self.m}x{self.m}x{self.n_z}"
            )


def build_context(geometry: PanelGeometry, vgrid: VerticalGrid,
                  omega2: float, lambda2: float) -> OperatorContext:
    """Operator context from a panel, a vertical grid and the model parameters."""
    profile = build_vertical_profile(vgrid, omega2, lambda2)
    return OperatorContext(profile=profile, geometry=geometry)


def build_problem(kind: GeometryKind, m: int, n_z: int, h_atmos: float, omega2: float,
                  lambda2: float, planar_extent: float = 2.0) -> OperatorContext:
    """Context for a panel of the given kind on the graded vertical grid."""
    if GeometryKind(kind) is GeometryKind.PLANAR:
        geometry = build_planar_panel(m, planar_extent)
    else:
        geometry = build_cubed_sphere_panel(m)
    vgrid = build_graded_vertical_grid(n_z, h_atmos)
    log.debug("%s panel %dx%dx%d, omega2=%g lambda2=%g", geometry.kind, m, m, n_z, omega2, lambda2)
    return build_context(geometry, vgrid, omega2, lambda2)


@dataclass
class FusedState:
    """The five CG vectors and the CG scalars of the interleaved loop."""

    u: Field3D
    r: Field3D
    z: Field3D
    p: Field3D
    q: Field3D
    alpha: float = 0.0
    beta: float = 0.0
    kappa: float = 0.0
    kappa_old: float = 0.0
    sigma: float = 0.0
    r_norm: float = 0.0

    def __post_init__(self):
        check_conformant(self.u, self.r, self.z, self.p, self.q)
        check_distinct(self.u, self.r, self.z, self.p, self.q)

    @classmethod
    def zeros_like(cls, x: Field3D) -> 'FusedState':
        return cls(*(x.zeros_like() for _ in range(5)))

    def copy(self) -> 'FusedState':
        return FusedState(
            self.u.copy(), self.r.copy(), self.z.copy(), self.p.copy(), self.q.copy(),
            alpha=self.alpha, beta=self.beta, kappa=self.kappa,
            kappa_old=self.kappa_old, sigma=self.sigma, r_norm=self.r_norm,
        )


def _check_pivots(status: np.ndarray, m: int):
    if status.any():
        col = int(np.flatnonzero(status)[0])
        i, j = divmod(col, m)
        raise BreakdownError(f"zero pivot in the tridiagonal solve of column ({i}, {j})")


def apply(ctx: OperatorContext, x: Field3D, y: Field3D, workers: int = 1):
    """y <- A x with Neumann closure at the panel boundary."""
    ctx.check_field(x)
    check_conformant(x, y)
    check_distinct(x, y)
    nchunks = kernels.set_workers(workers)
    ap, bp, cp, d = ctx.profile_arrays(x.dtype)
    area, adiag, aw, ae, as_, an = ctx.column_arrays(x.dtype)
    col_base, ks = column_bases(x.layout, ctx.m, ctx.n_z)
    kernels.stencil_apply(x.data, y.data, ap, bp, cp, d, area, adiag, aw, ae, as_, an,
                          col_base, ks, ctx.m, ctx.n_z, nchunks)


def precondition(ctx: OperatorContext, y: Field3D, x: Field3D, workers: int = 1):
    """Solve M x = y, M being A without the couplings between columns."""
    ctx.check_field(y)
    check_conformant(x, y)
    check_distinct(x, y)
    nchunks = kernels.set_workers(workers)
    ap, bp, cp, d = ctx.profile_arrays(y.dtype)
    area, adiag = ctx.column_arrays(y.dtype)[:2]
    col_base, ks = column_bases(y.layout, ctx.m, ctx.n_z)
    status = np.zeros(ctx.m * ctx.m, dtype=np.int8)
    kernels.column_thomas(y.data, x.data, ap, bp, cp, d, area, adiag,
                          col_base, ks, ctx.m, ctx.n_z, nchunks, status)
    _check_pivots(status, ctx.m)


def interleaved_spmv_kernel(ctx: OperatorContext, state: FusedState, workers: int = 1) -> float:
    """
    One sweep computing u <- u + alpha p, p <- z + beta p,
    q <- A z + beta q and sigma = <p, q>.

    Returns sigma, also stored in ``state.sigma``.
    """
    ctx.check_field(state.z)
    x = state.z
    nchunks = kernels.set_workers(workers)
    ap, bp, cp, d = ctx.profile_arrays(x.dtype)
    area, adiag, aw, ae, as_, an = ctx.column_arrays(x.dtype)
    col_base, ks = column_bases(x.layout, ctx.m, ctx.n_z)
    sigma_parts = np.empty(ctx.m * ctx.m, dtype=x.dtype)
    scalar = x.dtype.type
    kernels.fused_stencil_spmv(
        state.u.data, state.p.data, state.q.data, state.z.data,
        scalar(state.alpha), scalar(state.beta),
        ap, bp, cp, d, area, adiag, aw, ae, as_, an,
        col_base, ks, ctx.m, ctx.n_z, nchunks, sigma_parts,
    )
    state.sigma = float(kernels.tree_sum(sigma_parts))
    return state.sigma


def interleaved_prec_kernel(ctx: OperatorContext, state: FusedState,
                            workers: int = 1) -> Tuple[float, float]:
    """
    One sweep computing r <- r - alpha q, z = M^-1 r, ||r|| and
    kappa = <r, z>; kappa is accumulated during the backward substitution.

    Returns (||r||, kappa), also stored in ``state.r_norm`` / ``state.kappa``.
    """
    ctx.check_field(state.r)
    x = state.r
    nchunks = kernels.set_workers(workers)
    ap, bp, cp, d = ctx.profile_arrays(x.dtype)
    area, adiag = ctx.column_arrays(x.dtype)[:2]
    col_base, ks = column_bases(x.layout, ctx.m, ctx.n_z)
    ncols = ctx.m * ctx.m
    rr_parts = np.empty(ncols, dtype=x.dtype)
    kappa_parts = np.empty(ncols, dtype=x.dtype)
    status = np.zeros(ncols, dtype=np.int8)
    kernels.fused_column_prec(
        state.r.data, state.q.data, state.z.data, x.dtype.type(state.alpha),
        ap, bp, cp, d, area, adiag, col_base, ks, ctx.m, ctx.n_z, nchunks,
        rr_parts, kappa_parts, status,
    )
    _check_pivots(status, ctx.m)
    state.r_norm = float(np.sqrt(kernels.tree_sum(rr_parts)))
    state.kappa = float(kernels.tree_sum(kappa_parts))
    return state.r_norm, state.kappa


class MatrixFreeOperator:
    """Solver backend recomputing the stencil on the fly."""

    name = "matrix_free"

    def __init__(self, ctx: OperatorContext, workers: int = 1):
        self.ctx = ctx
        self.workers = workers

    @property
    def m(self) -> int:
        return self.ctx.m

    @property
    def n_z(self) -> int:
        return self.ctx.n_z

    def apply(self, x: Field3D, y: Field3D):
        apply(self.ctx, x, y, self.workers)

    def precondition(self, y: Field3D, x: Field3D):
        precondition(self.ctx, y, x, self.workers)

    def interleaved_spmv(self, state: FusedState) -> float:
        return interleaved_spmv_kernel(self.ctx, state, self.workers)

    def interleaved_prec(self, state: FusedState) -> Tuple[float, float]:
        return interleaved_prec_kernel(self.ctx, state, self.workers)
