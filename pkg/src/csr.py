"""
Matrix-explicit reference backend.

Assembles the operator in CSR format and the vertical line preconditioner as
three stored diagonals, with a dense assembly for verification on small
grids. Rows follow the linear index of the field layout, so results can be
compared with the matrix-free backend without permuting.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Tuple, Union

import numpy as np
import scipy.io
import scipy.sparse

from . import kernels
from .errors import InvalidArgumentError, OracleTooLargeError
from .fields import Field3D, check_conformant, check_distinct, column_bases, index_array
from .matrixfree import FusedState, OperatorContext, _check_pivots
from .models import Layout


log = logging.getLogger(__name__)

DENSE_LIMIT = 4096


@dataclass
class CsrMatrix:
    """Compressed sparse row matrix."""

    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    vals: np.ndarray
    m: int = 0
    n_z: int = 0
    layout: Layout = Layout.VERTICAL_CONTIGUOUS

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    def row_lengths(self) -> np.ndarray:
        return np.diff(self.row_ptr)

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        return scipy.sparse.csr_matrix(
            (self.vals, self.col_idx, self.row_ptr), shape=(self.n, self.n)
        )

    def astype(self, dtype) -> 'CsrMatrix':
        return CsrMatrix(self.n, self.row_ptr, self.col_idx,
                         np.ascontiguousarray(self.vals, dtype=dtype),
                         self.m, self.n_z, self.layout)

    def validate(self):
        """Raise if the CSR structure is inconsistent."""
        if self.row_ptr.size != self.n + 1 or self.row_ptr[0] != 0:
            raise InvalidArgumentError("row_ptr must have n+1 entries starting at 0")
        if np.any(np.diff(self.row_ptr) < 0):
            raise InvalidArgumentError("row_ptr must be non-decreasing")
        if self.col_idx.size != self.nnz or self.vals.size != self.nnz:
            raise InvalidArgumentError("col_idx and vals must hold nnz entries")
        for row in range(self.n):
            cols = self.col_idx[self.row_ptr[row]:self.row_ptr[row + 1]]
            if np.any(np.diff(cols) <= 0):
                raise InvalidArgumentError(f"column indices of row {row} are not strictly increasing")


@dataclass
class TridiagonalSet:
    """Sub-, main- and super-diagonal of the block diagonal preconditioner."""

    dl: np.ndarray
    dd: np.ndarray
    du: np.ndarray
    m: int
    n_z: int
    layout: Layout = Layout.VERTICAL_CONTIGUOUS

    @property
    def n(self) -> int:
        return self.dd.size

    def astype(self, dtype) -> 'TridiagonalSet':
        cast = lambda a: np.ascontiguousarray(a, dtype=dtype)
        return TridiagonalSet(cast(self.dl), cast(self.dd), cast(self.du),
                              self.m, self.n_z, self.layout)

    def to_scipy(self) -> scipy.sparse.csr_matrix:
        """The block diagonal matrix; level k+1 sits ``ks`` entries after level k."""
        ks = 1 if self.layout is Layout.VERTICAL_CONTIGUOUS else self.m
        n = self.n
        if n <= ks:
            return scipy.sparse.diags([self.dd], [0], format="csr")
        return scipy.sparse.diags(
            [self.dl[ks:], self.dd, self.du[:n - ks]], [-ks, 0, ks], format="csr"
        )


def _stencil_coefficients(ctx: OperatorContext) -> Tuple[np.ndarray, ...]:
    """
    Logical (m, m, n_z) arrays of the diagonal, the coupling to k+1 and the
    coupling to k-1, in double precision.
    """
    ap, bp, cp, d = (v[np.newaxis, np.newaxis, :] for v in ctx.profile_arrays(np.float64))
    t = ctx.geometry.cell_area[:, :, np.newaxis]
    ad = ctx.geometry.alpha_diag[:, :, np.newaxis]
    diag = ((ap - bp - cp) * t - ad) * d
    up = bp * t * d
    down = cp * t * d
    return diag, up, down


def assemble_csr(ctx: OperatorContext, layout: Layout = Layout.VERTICAL_CONTIGUOUS,
                 dtype=np.float64) -> CsrMatrix:
    """
    Explicit matrix of the operator, entry for entry the matrix-free stencil.

    Args:
        ctx: Operator context
        layout: Field layout fixing the row and column order
        dtype: Scalar type of the stored values

    Returns:
        CsrMatrix with sorted column indices in every row
    """
    m, n_z = ctx.m, ctx.n_z
    n = m * m * n_z
    I, J, K = np.meshgrid(np.arange(m), np.arange(m), np.arange(n_z), indexing="ij")
    row = index_array(layout, I, J, K, m, n_z)
    d = ctx.profile.d[np.newaxis, np.newaxis, :]
    diag, up, down = _stencil_coefficients(ctx)

    rows, cols, vals = [row.ravel()], [row.ravel()], [diag.ravel()]

    def couple(mask, di, dj, dk, coeff):
        rows.append(row[mask])
        cols.append(index_array(layout, I[mask] + di, J[mask] + dj, K[mask] + dk, m, n_z))
        vals.append(np.broadcast_to(coeff, row.shape)[mask])

    couple(K < n_z - 1, 0, 0, 1, up)
    couple(K > 0, 0, 0, -1, down)

    west, east, south, north = ctx.geometry.neighbour_alphas()
    couple(I < m - 1, 1, 0, 0, east[:, :, np.newaxis] * d)
    couple(I > 0, -1, 0, 0, west[:, :, np.newaxis] * d)
    couple(J < m - 1, 0, 1, 0, north[:, :, np.newaxis] * d)
    couple(J > 0, 0, -1, 0, south[:, :, np.newaxis] * d)

    coo = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    mat = coo.tocsr()
    mat.sort_indices()

    log.debug("assembled %dx%d CSR matrix with %d entries", n, n, mat.nnz)
    return CsrMatrix(
        n=n,
        row_ptr=mat.indptr.astype(np.int64),
        col_idx=mat.indices.astype(np.int64),
        vals=np.ascontiguousarray(mat.data, dtype=dtype),
        m=m,
        n_z=n_z,
        layout=layout,
    )


def _raw(x: Union[Field3D, np.ndarray]) -> np.ndarray:
    return x.data if isinstance(x, Field3D) else x


def spmv_csr(A: CsrMatrix, x: Union[Field3D, np.ndarray],
             y: Union[Field3D, np.ndarray], workers: int = 1):
    """y <- A x, rows split across workers."""
    xd, yd = _raw(x), _raw(y)
    if xd.size != A.n or yd.size != A.n:
        raise InvalidArgumentError(f"matrix is {A.n}x{A.n}, vectors have {xd.size} and {yd.size} entries")
    if np.shares_memory(xd, yd):
        raise InvalidArgumentError("input and output vectors must not alias")
    vals = A.vals if A.vals.dtype == yd.dtype else A.vals.astype(yd.dtype)
    nchunks = kernels.set_workers(workers)
    kernels.csr_spmv(A.row_ptr, A.col_idx, vals, xd, yd, nchunks)


def assemble_preconditioner(ctx: OperatorContext, layout: Layout = Layout.VERTICAL_CONTIGUOUS,
                            dtype=np.float64) -> TridiagonalSet:
    """The tridiagonal column blocks of the operator as three vectors of length n."""
    m, n_z = ctx.m, ctx.n_z
    diag, up, down = _stencil_coefficients(ctx)
    up = up.copy()
    down = down.copy()
    up[:, :, -1] = 0.0
    down[:, :, 0] = 0.0

    def stored(values):
        return Field3D.from_array(values, layout, dtype).data

    return TridiagonalSet(stored(down), stored(diag), stored(up), m, n_z, layout)


def solve_tridiag_set(M: TridiagonalSet, y: Field3D, x: Field3D, workers: int = 1):
    """Solve M x = y with the Thomas algorithm on the stored coefficients."""
    check_conformant(x, y)
    check_distinct(x, y)
    if y.m != M.m or y.n_z != M.n_z or y.layout is not M.layout:
        raise InvalidArgumentError("field does not match the stored preconditioner")
    if M.dd.dtype != y.dtype:
        M = M.astype(y.dtype)
    nchunks = kernels.set_workers(workers)
    col_base, ks = column_bases(M.layout, M.m, M.n_z)
    status = np.zeros(M.m * M.m, dtype=np.int8)
    kernels.tridiag_thomas(M.dl, M.dd, M.du, y.data, x.data, col_base, ks,
                           M.m, M.n_z, nchunks, status)
    _check_pivots(status, M.m)


def assemble_dense(ctx: OperatorContext, layout: Layout = Layout.VERTICAL_CONTIGUOUS) -> np.ndarray:
    """Dense n x n matrix, refused above 4096 unknowns."""
    if ctx.size > DENSE_LIMIT:
        raise OracleTooLargeError(f"dense assembly is limited to n <= {DENSE_LIMIT} (got {ctx.size})")
    return assemble_csr(ctx, layout).to_scipy().toarray()


def export_matrix_market(A: CsrMatrix, output_path: str) -> str:
    """Write the matrix in Matrix Market coordinate format."""
    path = Path(output_path)
    with open(path, "wb") as f:
        scipy.io.mmwrite(
            f, A.to_scipy(),
            comment=f"column operator m={A.m} n_z={A.n_z} layout={A.layout.value}",
            symmetry="general",
        )
    return str(path)


class CsrOperator:
    """Solver backend working on the stored matrix and stored tridiagonals."""

    name = "csr"

    def __init__(self, A: CsrMatrix, M: TridiagonalSet, workers: int = 1):
        if A.layout is not M.layout or A.n != M.n:
            raise InvalidArgumentError("matrix and preconditioner do not match")
        self.A = A
        self.M = M
        self.workers = workers
        self._cast = {}

    @classmethod
    def from_context(cls, ctx: OperatorContext, layout: Layout = Layout.VERTICAL_CONTIGUOUS,
                     dtype=np.float64, workers: int = 1) -> 'CsrOperator':
        """
        Assemble in double and cast once to ``dtype``.

        The double entries stay available, so residuals recomputed in
        double use the unrounded matrix.
        """
        op = cls(assemble_csr(ctx, layout, np.float64),
                 assemble_preconditioner(ctx, layout, np.float64), workers)
        op._for(dtype)
        return op

    @property
    def m(self) -> int:
        return self.M.m

    @property
    def n_z(self) -> int:
        return self.M.n_z

    def _for(self, dtype) -> Tuple[CsrMatrix, TridiagonalSet]:
        dtype = np.dtype(dtype)
        if self.A.vals.dtype == dtype:
            return self.A, self.M
        if dtype not in self._cast:
            self._cast[dtype] = (self.A.astype(dtype), self.M.astype(dtype))
        return self._cast[dtype]

    def _check(self, x: Field3D):
        if x.layout is not self.A.layout or x.size != self.A.n:
            raise InvalidArgumentError(
                f"field ({x.m}x{x.m}x{x.n_z}, {x.layout.value}) does not match the assembled "
                f"matrix ({self.m}x{self.m}x{self.n_z}, {self.A.layout.value})"
            )

    def apply(self, x: Field3D, y: Field3D):
        self._check(x)
        check_conformant(x, y)
        A, _ = self._for(x.dtype)
        spmv_csr(A, x, y, self.workers)

    def precondition(self, y: Field3D, x: Field3D):
        self._check(y)
        _, M = self._for(y.dtype)
        solve_tridiag_set(M, y, x, self.workers)

    def interleaved_spmv(self, state: FusedState) -> float:
        x = state.z
        self._check(x)
        A, _ = self._for(x.dtype)
        nchunks = kernels.set_workers(self.workers)
        col_base, ks = column_bases(x.layout, x.m, x.n_z)
        sigma_parts = np.empty(x.m * x.m, dtype=x.dtype)
        scalar = x.dtype.type
        kernels.fused_csr_spmv(
            A.row_ptr, A.col_idx, A.vals,
            state.u.data, state.p.data, state.q.data, state.z.data,
            scalar(state.alpha), scalar(state.beta),
            col_base, ks, x.m, x.n_z, nchunks, sigma_parts,
        )
        state.sigma = float(kernels.tree_sum(sigma_parts))
        return state.sigma

    def interleaved_prec(self, state: FusedState) -> Tuple[float, float]:
        x = state.r
        self._check(x)
        _, M = self._for(x.dtype)
        nchunks = kernels.set_workers(self.workers)
        col_base, ks = column_bases(x.layout, x.m, x.n_z)
        ncols = x.m * x.m
        rr_parts = np.empty(ncols, dtype=x.dtype)
        kappa_parts = np.empty(ncols, dtype=x.dtype)
        status = np.zeros(ncols, dtype=np.int8)
        kernels.fused_tridiag_prec(
            M.dl, M.dd, M.du, state.r.data, state.q.data, state.z.data,
            x.dtype.type(state.alpha), col_base, ks, x.m, x.n_z, nchunks,
            rr_parts, kappa_parts, status,
        )
        _check_pivots(status, x.m)
        state.r_norm = float(np.sqrt(kernels.tree_sum(rr_parts)))
        state.kappa = float(kernels.tree_sum(kappa_parts))
        return state.r_norm, state.kappa
