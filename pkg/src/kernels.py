"""
Compiled column kernels.

Every kernel walks the horizontal columns of a field; the column set is cut
into ``nchunks`` contiguous pieces handled by ``prange``. Inside a column
the loop over k is sequential. A field with layout-dependent ordering is
addressed through ``col_base`` (linear index of (i, j, 0) for column
``col = i*m + j``) and ``ks`` (the stride between k and k+1).

Reductions never use ``prange`` reduction variables: each column writes
its partial sum, and ``tree_sum`` combines the partials in a fixed order,
so results do not depend on the chunk or thread count.

These functions are called from :mod:`src.fields`, :mod:`src.matrixfree`
and :mod:`src.csr`; they assume their inputs were validated there.
"""

import numba as nb
import numpy as np


_numba_setting = {'nogil': True, 'cache': True, 'error_model': 'numpy'}
_parallel_setting = dict(_numba_setting, parallel=True)


def set_workers(workers: int) -> int:
    """
    Set the numba thread count for the following kernel calls.

    Returns the number of chunks to cut the columns into, which is
    ``workers`` even if fewer threads are available.
    """
    threads = max(1, min(int(workers), nb.config.NUMBA_NUM_THREADS))
    nb.set_num_threads(threads)
    return max(1, int(workers))


# --------------------------------------------------------------------------
# Helpers
# --------------------------------------------------------------------------

@nb.njit(**_numba_setting)
def _chunk(c, nchunks, n):
    """Bounds [lo, hi) of chunk c when n items are cut into nchunks."""
    return (c * n) // nchunks, ((c + 1) * n) // nchunks


@nb.njit(**_numba_setting)
def tree_sum(partials):
    """Pairwise sum of the partials in a fixed binary tree."""
    buf = partials.copy()
    n = buf.size
    while n > 1:
        half = n // 2
        for i in range(half):
            buf[i] = buf[2 * i] + buf[2 * i + 1]
        if n % 2 == 1:
            buf[half] = buf[n - 1]
            n = half + 1
        else:
            n = half
    return buf[0]


@nb.njit(**_numba_setting)
def _neighbour_bases(col_base, col, m):
    """Bases of the (i-1,j), (i+1,j), (i,j-1), (i,j+1) columns, -1 if absent."""
    i = col // m
    j = col - i * m
    bw = col_base[col - m] if i > 0 else -1
    be = col_base[col + m] if i < m - 1 else -1
    bs = col_base[col - 1] if j > 0 else -1
    bn = col_base[col + 1] if j < m - 1 else -1
    return bw, be, bs, bn


@nb.njit(**_numba_setting)
def _stencil_point(x, base, k, ks, n_z, t, ad, bw, be, bs, bn,
                   ww, we, ws, wn, ap, bp, cp):
    """Bracketed stencil sum at level k of a column (before the d_k factor)."""
    off = k * ks
    acc = ((ap[k] - bp[k] - cp[k]) * t - ad) * x[base + off]
    if k < n_z - 1:
        acc += bp[k] * t * x[base + off + ks]
    if k > 0:
        acc += cp[k] * t * x[base + off - ks]
    if be >= 0:
        acc += we * x[be + off]
    if bw >= 0:
        acc += ww * x[bw + off]
    if bn >= 0:
        acc += wn * x[bn + off]
    if bs >= 0:
        acc += ws * x[bs + off]
    return acc


# --------------------------------------------------------------------------
# Level 1 operations
# --------------------------------------------------------------------------

@nb.njit(**_parallel_setting)
def flat_axpy(alpha, x, y, nchunks):
    """y <- alpha*x + y."""
    n = y.size
    for c in nb.prange(nchunks):
        lo, hi = _chunk(c, nchunks, n)
        for idx in range(lo, hi):
            y[idx] = y[idx] + alpha * x[idx]


@nb.njit(**_parallel_setting)
def flat_scal(alpha, x, nchunks):
    """x <- alpha*x."""
    n = x.size
    for c in nb.prange(nchunks):
        lo, hi = _chunk(c, nchunks, n)
        for idx in range(lo, hi):
            x[idx] = alpha * x[idx]


@nb.njit(**_parallel_setting)
def column_dot(x, y, col_base, ks, m, n_z, nchunks, partials):
    """Per-column sums of x*y in ascending k."""
    ncols = m * m
    for c in nb.prange(nchunks):
        lo, hi = _chunk(c, nchunks, ncols)
        for col in range(lo, hi):
            base = col_base[col]
            partials[col] = 0.0
            s = partials[col]
            for k in range(n_z):
                idx = base + k * ks
                s += x[idx] * y[idx]
            partials[col] = s


# --------------------------------------------------------------------------
# Matrix-free operator
# --------------------------------------------------------------------------

@nb.njit(**_parallel_setting)
def stencil_apply(x, y, ap, bp, cp, d, area, adiag, aw, ae, as_, an,
                  col_base, ks, m, n_z, nchunks):
    """y <- A x, recomputing the 7-point stencil in every cell."""
    ncols = m * m
    for c in nb.prange(nchunks):
        lo, hi = _chunk(c, nchunks, ncols)
        for col in range(lo, hi):
            base = col_base[col]
            bw, be, bs, bn = _neighbour_bases(col_base, col, m)
            t = area[col]
            ad = adiag[col]
            ww = aw[col]
            we = ae[col]
            ws = as_[col]
            wn = an[col]
            for k in range(n_z):
                acc = _stencil_point(x, base, k, ks, n_z, t, ad, bw, be, bs, bn,
                                     ww, we, ws, wn, ap, bp, cp)
                y[base + k * ks] = acc * d[k]


@nb.njit(**_parallel_setting)
def column_thomas(y, x, ap, bp, cp, d, area, adiag, col_base, ks, m, n_z,
                  nchunks, status):
    """Solve M x = y column by column; status[col] = 1 on a zero pivot."""
    ncols = m * m
    for c in nb.prange(nchunks):
        lo, hi = _chunk(c, nchunks, ncols)
        phi = np.empty_like(ap)
        for col in range(lo, hi):
            status[col] = 0
            base = col_base[col]
            t = area[col]
            at = adiag[col] / t
            D = (ap[0] - bp[0] - cp[0]) - at
            if D == 0.0:
                status[col] = 1
                continue
            phi[0] = bp[0] / D
            x[base] = y[base] / (D * t * d[0])
            for k in range(1, n_z):
                idx = base + k * ks
                D = ((ap[k] - bp[k] - cp[k]) - at) - phi[k - 1] * cp[k]
                if D == 0.0:
                    status[col] = 1
                    break
                phi[k] = bp[k] / D
                x[idx] = (y[idx] / (t * d[k]) - cp[k] * x[idx - ks]) / D
            if status[col] != 0:
                continue
            for k in range(n_z - 2, -1, -1):
                idx = base + k * ks
                x[idx] = x[idx] - phi[k] * x[idx + ks]


@nb.njit(**_parallel_setting)
def fused_stencil_spmv(u, p, q, z, alpha, beta, ap, bp, cp, d, area, adiag,
                       aw, ae, as_, an, col_base, ks, m, n_z, nchunks,
                       sigma_parts):
    """u <- u + alpha p, p <- z + beta p, q <- A z + beta q, sigma <- <p, q>."""
    ncols = m * m
    for c in nb.prange(nchunks):
        lo, hi = _chunk(c, nchunks, ncols)
        for col in range(lo, hi):
            base = col_base[col]
            bw, be, bs, bn = _neighbour_bases(col_base, col, m)
            t = area[col]
            ad = adiag[col]
            ww = aw[col]
            we = ae[col]
            ws = as_[col]
            wn = an[col]
            sigma_parts[col] = 0.0
            sigma = sigma_parts[col]
            for k in range(n_z):
                idx = base + k * ks
                ps = p[idx]
                qs = q[idx]
                zs = z[idx]
                u[idx] = u[idx] + alpha * ps
                ps = beta * ps + zs
                qs = beta * qs
                p[idx] = ps
                dq = _stencil_point(z, base, k, ks, n_z, t, ad, bw, be, bs, bn,
                                    ww, we, ws, wn, ap, bp, cp)
                qs = qs + d[k] * dq
                sigma += ps * qs
                q[idx] = qs
            sigma_parts[col] = sigma


@nb.njit(**_parallel_setting)
def fused_column_prec(r, q, z, alpha, ap, bp, cp, d, area, adiag, col_base,
                      ks, m, n_z, nchunks, rr_parts, kappa_parts, status):
    """r <- r - alpha q, solve M z = r, per-column <r, r> and <r, z>."""
    ncols = m * m
    for c in nb.prange(nchunks):
        lo, hi = _chunk(c, nchunks, ncols)
        phi = np.empty_like(ap)
        for col in range(lo, hi):
            status[col] = 0
            base = col_base[col]
            t = area[col]
            at = adiag[col] / t
            rr_parts[col] = 0.0
            kappa_parts[col] = 0.0
            rr = rr_parts[col]
            kappa = kappa_parts[col]

            D = (ap[0] - bp[0] - cp[0]) - at
            if D == 0.0:
                status[col] = 1
                continue
            phi[0] = bp[0] / D
            rs = r[base] - alpha * q[base]
            rr += rs * rs
            z[base] = rs / (D * t * d[0])
            r[base] = rs
            for k in range(1, n_z):
                idx = base + k * ks
                D = ((ap[k] - bp[k] - cp[k]) - at) - phi[k - 1] * cp[k]
                if D == 0.0:
                    status[col] = 1
                    break
                phi[k] = bp[k] / D
                rs = r[idx] - alpha * q[idx]
                rr += rs * rs
                z[idx] = (rs / (t * d[k]) - cp[k] * z[idx - ks]) / D
                r[idx] = rs
            if status[col] != 0:
                continue

            last = base + (n_z - 1) * ks
            kappa += z[last] * r[last]
            for k in range(n_z - 2, -1, -1):
                idx = base + k * ks
                zs = z[idx] - phi[k] * z[idx + ks]
                kappa += zs * r[idx]
                z[idx] = zs
            rr_parts[col] = rr
            kappa_parts[col] = kappa


# --------------------------------------------------------------------------
# Stored matrices
# --------------------------------------------------------------------------

@nb.njit(**_parallel_setting)
def csr_spmv(row_ptr, col_idx, vals, x, y, nchunks):
    """y <- A x for a CSR matrix, rows cut into chunks."""
    n = row_ptr.size - 1
    for c in nb.prange(nchunks):
        lo, hi = _chunk(c, nchunks, n)
        for row in range(lo, hi):
            y[row] = 0.0
            acc = y[row]
            for e in range(row_ptr[row], row_ptr[row + 1]):
                acc += vals[e] * x[col_idx[e]]
            y[row] = acc


@nb.njit(**_parallel_setting)
def fused_csr_spmv(row_ptr, col_idx, vals, u, p, q, z, alpha, beta,
                   col_base, ks, m, n_z, nchunks, sigma_parts):
    """Interleaved SpMV sweep on a stored matrix whose rows follow the field layout."""
    ncols = m * m
    for c in nb.prange(nchunks):
        lo, hi = _chunk(c, nchunks, ncols)
        for col in range(lo, hi):
            base = col_base[col]
            sigma_parts[col] = 0.0
            sigma = sigma_parts[col]
            for k in range(n_z):
                idx = base + k * ks
                ps = p[idx]
                qs = q[idx]
                zs = z[idx]
                u[idx] = u[idx] + alpha * ps
                ps = beta * ps + zs
                qs = beta * qs
                p[idx] = ps
                # every row holds its diagonal, so the first entry seeds the sum
                e0 = row_ptr[idx]
                dq = vals[e0] * z[col_idx[e0]]
                for e in range(e0 + 1, row_ptr[idx + 1]):
                    dq += vals[e] * z[col_idx[e]]
                qs = qs + dq
                sigma += ps * qs
                q[idx] = qs
            sigma_parts[col] = sigma


@nb.njit(**_parallel_setting)
def tridiag_thomas(dl, dd, du, y, x, col_base, ks, m, n_z, nchunks, status):
    """Thomas algorithm on stored sub-, main- and super-diagonals."""
    ncols = m * m
    for c in nb.prange(nchunks):
        lo, hi = _chunk(c, nchunks, ncols)
        phi = np.empty_like(dd[:n_z])
        for col in range(lo, hi):
            status[col] = 0
            base = col_base[col]
            D = dd[base]
            if D == 0.0:
                status[col] = 1
                continue
            phi[0] = du[base] / D
            x[base] = y[base] / D
            for k in range(1, n_z):
                idx = base + k * ks
                D = dd[idx] - dl[idx] * phi[k - 1]
                if D == 0.0:
                    status[col] = 1
                    break
                phi[k] = du[idx] / D
                x[idx] = (y[idx] - dl[idx] * x[idx - ks]) / D
            if status[col] != 0:
                continue
            for k in range(n_z - 2, -1, -1):
                idx = base + k * ks
                x[idx] = x[idx] - phi[k] * x[idx + ks]


@nb.njit(**_parallel_setting)
def fused_tridiag_prec(dl, dd, du, r, q, z, alpha, col_base, ks, m, n_z,
                       nchunks, rr_parts, kappa_parts, status):
    """Interleaved preconditioner sweep on stored tridiagonals."""
    ncols = m * m
    for c in nb.prange(nchunks):
        lo, hi = _chunk(c, nchunks, ncols)
        phi = np.empty_like(dd[:n_z])
        for col in range(lo, hi):
            status[col] = 0
            base = col_base[col]
            rr_parts[col] = 0.0
            kappa_parts[col] = 0.0
            rr = rr_parts[col]
            kappa = kappa_parts[col]

            D = dd[base]
            if D == 0.0:
                status[col] = 1
                continue
            phi[0] = du[base] / D
            rs = r[base] - alpha * q[base]
            rr += rs * rs
            z[base] = rs / D
            r[base] = rs
            for k in range(1, n_z):
                idx = base + k * ks
                D = dd[idx] - dl[idx] * phi[k - 1]
                if D == 0.0:
                    status[col] = 1
                    break
                phi[k] = du[idx] / D
                rs = r[idx] - alpha * q[idx]
                rr += rs * rs
                z[idx] = (rs - dl[idx] * z[idx - ks]) / D
                r[idx] = rs
            if status[col] != 0:
                continue

            last = base + (n_z - 1) * ks
            kappa += z[last] * r[last]
            for k in range(n_z - 2, -1, -1):
                idx = base + k * ks
                zs = z[idx] - phi[k] * z[idx + ks]
                kappa += zs * r[idx]
                z[idx] = zs
            rr_parts[col] = rr
            kappa_parts[col] = kappa
