"""
PCG driver for the column operator.

Two loop organisations share the same recurrences:

- ``pcg_standard``: one operator apply, one preconditioner solve and
  separate level 1 operations per iteration.
- ``pcg_interleaved``: two sweeps per iteration, the fused preconditioner
  kernel followed by the fused SpMV kernel. The solution update lags one
  sweep behind the residual and is caught up once when the loop ends.

Both work on any backend exposing ``apply``, ``precondition``,
``interleaved_spmv`` and ``interleaved_prec``.
"""

import logging
import time
from contextlib import contextmanager
from typing import Dict, Optional, Tuple

import numpy as np

from .csr import CsrOperator
from .errors import BreakdownError, InvalidArgumentError
from .fields import Field3D, axpy, check_conformant, dot, nrm2, scal
from .matrixfree import FusedState, MatrixFreeOperator, OperatorContext
from .models import Backend, Layout, SolveResult, SolverConfig, Variant


log = logging.getLogger(__name__)


@contextmanager
def _timed(timings: Dict[str, float], key: str):
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[key] += time.perf_counter() - start


def build_operator(ctx: OperatorContext, cfg: SolverConfig,
                   layout: Layout = Layout.VERTICAL_CONTIGUOUS):
    """
    Backend for a solve and the seconds spent building it.

    The CSR backend assembles its matrix and tridiagonals here; the
    matrix-free backend only prepares the per-level and per-column vectors.
    """
    start = time.perf_counter()
    dtype = cfg.precision.dtype
    if cfg.backend is Backend.CSR:
        op = CsrOperator.from_context(ctx, layout, dtype, cfg.workers)
    else:
        ctx.profile_arrays(dtype)
        ctx.column_arrays(dtype)
        op = MatrixFreeOperator(ctx, cfg.workers)
    setup = time.perf_counter() - start
    log.debug("built %s backend in %.3fs", op.name, setup)
    return op, setup


def _prepare(f: Field3D, u0: Optional[Field3D], cfg: SolverConfig) -> Tuple[Field3D, Field3D]:
    dtype = cfg.precision.dtype
    f = f if f.dtype == dtype else f.astype(dtype)
    if u0 is None:
        u = f.zeros_like()
    else:
        u = u0.astype(dtype) if u0.dtype != dtype else u0.copy()
    check_conformant(f, u)
    return f, u


def _initial_residual(op, f: Field3D, u: Field3D, r: Field3D,
                      cfg: SolverConfig, timings: Dict[str, float]) -> float:
    """r <- f - A u and returns ||r||."""
    with _timed(timings, "spmv"):
        op.apply(u, r)
    with _timed(timings, "blas"):
        scal(-1.0, r, cfg.workers)
        axpy(1.0, f, r, cfg.workers)
        return nrm2(r, cfg.workers)


def _converged(r_norm: float, r0: float, cfg: SolverConfig) -> bool:
    if r_norm < cfg.tau:
        return True
    return not cfg.fixed_iterations and r_norm / r0 < cfg.epsilon


def _check_positive(name: str, value: float, iteration: int):
    if not value > 0:
        raise BreakdownError(
            f"{name} = {value:.6e} is not positive at iteration {iteration}; "
            f"the operator or preconditioner is not positive definite"
        )


def _finish(result: SolveResult, cfg: SolverConfig, r0: float, started: float):
    result.timings["total"] = time.perf_counter() - started
    if result.iterations:
        final = result.final_residual
        result.converged = final < cfg.tau or final / r0 < cfg.epsilon
    result.metadata.update(cfg.to_dict())


def pcg_standard(op, f: Field3D, u0: Optional[Field3D],
                 cfg: SolverConfig) -> Tuple[Field3D, SolveResult]:
    """
    Left-preconditioned CG with unfused kernels.

    Per iteration: one operator apply, one preconditioner solve, three
    axpy, one scal, two dot products and one norm.

    Args:
        op: Backend (matrix-free or CSR)
        f: Right hand side
        u0: Initial guess, zero if None
        cfg: Stopping criteria and execution options

    Returns:
        (solution, SolveResult)
    """
    started = time.perf_counter()
    result = SolveResult()
    timings = result.timings
    w = cfg.workers

    f, u = _prepare(f, u0, cfg)
    r = f.zeros_like()
    z = f.zeros_like()
    q = f.zeros_like()

    r0 = _initial_residual(op, f, u, r, cfg, timings)
    result.residual_history.append(r0)
    if r0 <= cfg.tau:
        log.debug("initial residual %.3e below tau, nothing to do", r0)
        result.converged = True
        _finish(result, cfg, r0, started)
        return u, result

    with _timed(timings, "prec"):
        op.precondition(r, z)
    with _timed(timings, "blas"):
        p = z.copy()
        kappa_old = dot(r, z, w)
    _check_positive("kappa", kappa_old, 0)
    result.kappas.append(kappa_old)

    for j in range(1, cfg.maxiter + 1):
        with _timed(timings, "spmv"):
            op.apply(p, q)
        with _timed(timings, "blas"):
            sigma = dot(p, q, w)
        _check_positive("sigma", sigma, j)
        alpha = kappa_old / sigma

        with _timed(timings, "blas"):
            axpy(alpha, p, u, w)
            axpy(-alpha, q, r, w)
            r_norm = nrm2(r, w)

        result.iterations = j
        result.residual_history.append(r_norm)
        result.alphas.append(alpha)
        result.sigmas.append(sigma)
        log.debug("iteration %d: |r| = %.6e (rel %.3e)", j, r_norm, r_norm / r0)

        if _converged(r_norm, r0, cfg) or j == cfg.maxiter:
            break

        with _timed(timings, "prec"):
            op.precondition(r, z)
        with _timed(timings, "blas"):
            kappa = dot(r, z, w)
        _check_positive("kappa", kappa, j)
        beta = kappa / kappa_old
        kappa_old = kappa
        result.kappas.append(kappa)
        result.betas.append(beta)

        with _timed(timings, "blas"):
            scal(beta, p, w)
            axpy(1.0, z, p, w)

    _finish(result, cfg, r0, started)
    return u, result


def pcg_interleaved(op, f: Field3D, u0: Optional[Field3D],
                    cfg: SolverConfig) -> Tuple[Field3D, SolveResult]:
    """
    PCG with the two fused sweeps per iteration.

    Same arguments and results as :func:`pcg_standard`; the iterates agree
    with it up to round-off.
    """
    started = time.perf_counter()
    result = SolveResult()
    timings = result.timings
    w = cfg.workers

    f, u = _prepare(f, u0, cfg)
    state = FusedState(u, f.zeros_like(), f.zeros_like(), f.zeros_like(), f.zeros_like())

    r0 = _initial_residual(op, f, state.u, state.r, cfg, timings)
    result.residual_history.append(r0)
    if r0 <= cfg.tau:
        log.debug("initial residual %.3e below tau, nothing to do", r0)
        result.converged = True
        _finish(result, cfg, r0, started)
        return state.u, result

    with _timed(timings, "prec"):
        op.precondition(state.r, state.z)
    with _timed(timings, "blas"):
        np.copyto(state.p.data, state.z.data)
    with _timed(timings, "spmv"):
        op.apply(state.p, state.q)
    with _timed(timings, "blas"):
        state.kappa_old = dot(state.r, state.z, w)
        state.sigma = dot(state.p, state.q, w)
    _check_positive("kappa", state.kappa_old, 0)
    _check_positive("sigma", state.sigma, 1)
    state.alpha = state.kappa_old / state.sigma
    result.kappas.append(state.kappa_old)

    for j in range(1, cfg.maxiter + 1):
        result.alphas.append(state.alpha)
        result.sigmas.append(state.sigma)

        with _timed(timings, "interleaved_prec"):
            r_norm, kappa = op.interleaved_prec(state)

        result.iterations = j
        result.residual_history.append(r_norm)
        log.debug("iteration %d: |r| = %.6e (rel %.3e)", j, r_norm, r_norm / r0)

        if _converged(r_norm, r0, cfg) or j == cfg.maxiter:
            break

        _check_positive("kappa", kappa, j)
        state.beta = kappa / state.kappa_old
        state.kappa_old = kappa
        result.kappas.append(kappa)
        result.betas.append(state.beta)

        with _timed(timings, "interleaved_spmv"):
            sigma = op.interleaved_spmv(state)
        _check_positive("sigma", sigma, j + 1)
        state.alpha = state.kappa_old / sigma

    # u is one update behind r
    with _timed(timings, "blas"):
        axpy(state.alpha, state.p, state.u, w)

    _finish(result, cfg, r0, started)
    return state.u, result


def true_residual(op, u: Field3D, f: Field3D) -> float:
    """||f - A u||, recomputed in double precision."""
    if u.m != f.m or u.n_z != f.n_z or u.layout is not f.layout:
        raise InvalidArgumentError("solution and right hand side do not match")
    u64 = u.astype(np.float64) if u.dtype != np.float64 else u
    res = f.astype(np.float64)
    au = res.zeros_like()
    op.apply(u64, au)
    axpy(-1.0, au, res)
    return nrm2(res)


def solve(op, f: Field3D, u0: Optional[Field3D], cfg: SolverConfig) -> Tuple[Field3D, SolveResult]:
    """Run the configured variant and attach the recomputed residual."""
    runner = pcg_interleaved if cfg.variant is Variant.INTERLEAVED else pcg_standard
    u, result = runner(op, f, u0, cfg)
    result.true_residual = true_residual(op, u, f)
    result.metadata["layout"] = f.layout.value
    result.metadata["grid"] = f"{f.m}x{f.m}x{f.n_z}"
    if result.converged:
        log.info("converged in %d iterations, relative residual %.3e",
                 result.iterations, result.relative_residual)
    else:
        log.warning("not converged after %d iterations, relative residual %.3e",
                    result.iterations, result.relative_residual)
    return u, result
