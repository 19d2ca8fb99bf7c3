"""Tests for the PCG driver."""

import os

import numpy as np
import pytest

from src.csr import assemble_dense, assemble_preconditioner
from src.errors import BreakdownError
from src.fields import Field3D, relayout
from src.models import Backend, GeometryKind, Layout, Precision, SolverConfig, Variant
from src.solver import build_operator, pcg_interleaved, pcg_standard, solve, true_residual


OMEGA2 = 6.71e-4
LAMBDA2 = 3.32e-2

VARIANTS = [pcg_standard, pcg_interleaved]


def run(ctx, runner=pcg_interleaved, layout=Layout.VERTICAL_CONTIGUOUS, seed=20130101, **kwargs):
    cfg = SolverConfig(**kwargs)
    op, _ = build_operator(ctx, cfg, layout)
    f = relayout(Field3D.random(ctx.m, ctx.n_z, seed=seed), layout)
    u, result = runner(op, f, None, cfg)
    return op, f, u, result


def textbook_pcg(A, M, f, iterations):
    """Plain dense PCG with u0 = 0."""
    u = np.zeros_like(f)
    r = f.copy()
    z = np.linalg.solve(M, r)
    p = z.copy()
    kappa = r @ z
    alphas, betas, norms = [], [], [np.linalg.norm(r)]
    for _ in range(iterations):
        q = A @ p
        alpha = kappa / (p @ q)
        u += alpha * p
        r -= alpha * q
        norms.append(np.linalg.norm(r))
        z = np.linalg.solve(M, r)
        kappa_new = r @ z
        beta = kappa_new / kappa
        kappa = kappa_new
        p = z + beta * p
        alphas.append(alpha)
        betas.append(beta)
    return u, alphas, betas, norms


class TestTrivialCases:

    @pytest.mark.parametrize("runner", VARIANTS)
    def test_zero_right_hand_side(self, make_ctx, runner):
        ctx = make_ctx(3, 4)
        cfg = SolverConfig()
        op, _ = build_operator(ctx, cfg)
        f = Field3D.zeros(3, 4)
        u, result = runner(op, f, None, cfg)
        assert result.converged
        assert result.iterations == 0
        assert result.residual_history == [0.0]
        np.testing.assert_array_equal(u.data, 0.0)

    @pytest.mark.parametrize("runner", VARIANTS)
    @pytest.mark.parametrize("backend", list(Backend))
    def test_single_column_converges_in_one_iteration(self, make_ctx, runner, backend):
        """The preconditioner is exact without horizontal neighbours."""
        ctx = make_ctx(1, 16, GeometryKind.PLANAR)
        op, f, u, result = run(ctx, runner, backend=backend)
        assert result.converged
        assert result.iterations == 1
        assert true_residual(op, u, f) <= 1e-12 * np.linalg.norm(f.data)

    def test_true_residual_of_zero_guess(self, make_ctx):
        ctx = make_ctx(3, 4)
        op, _ = build_operator(ctx, SolverConfig())
        f = Field3D.random(3, 4, seed=1)
        np.testing.assert_allclose(true_residual(op, f.zeros_like(), f), np.linalg.norm(f.data), rtol=1e-15)


class TestRecurrences:

    def test_matches_textbook_pcg(self, make_ctx):
        ctx = make_ctx(4, 8, GeometryKind.PLANAR)
        A = assemble_dense(ctx)
        M = assemble_preconditioner(ctx).to_scipy().toarray()
        _, f, _, result = run(ctx, pcg_standard, epsilon=1e-14, maxiter=5)
        _, alphas, betas, norms = textbook_pcg(A, M, f.data, 5)

        assert result.iterations == 5
        r0 = norms[0]
        np.testing.assert_allclose(np.asarray(result.residual_history) / r0,
                                   np.asarray(norms) / r0, rtol=0, atol=1e-12)
        np.testing.assert_allclose(result.alphas[:3], alphas[:3], rtol=1e-10)
        np.testing.assert_allclose(result.betas[:3], betas[:3], rtol=1e-10)

    @pytest.mark.parametrize("runner", VARIANTS)
    def test_history_shapes(self, make_ctx, runner):
        _, _, _, result = run(make_ctx(4, 8), runner, epsilon=1e-12, maxiter=6)
        assert len(result.residual_history) == result.iterations + 1
        assert len(result.alphas) == result.iterations
        assert len(result.sigmas) == result.iterations
        assert len(result.kappas) == len(result.betas) + 1

    @pytest.mark.parametrize("runner", VARIANTS)
    def test_kappa_stays_positive(self, make_ctx, runner):
        _, _, _, result = run(make_ctx(8, 16), runner, epsilon=1e-10)
        assert all(k > 0 for k in result.kappas)
        assert all(s > 0 for s in result.sigmas)


class TestEquivalence:

    def test_variants_agree(self, make_ctx, geometry_kind):
        ctx = make_ctx(8, 16, geometry_kind)
        _, _, u_std, std = run(ctx, pcg_standard, epsilon=1e-10)
        _, _, u_itl, itl = run(ctx, pcg_interleaved, epsilon=1e-10)

        assert std.iterations == itl.iterations
        r0 = std.initial_residual
        np.testing.assert_allclose(np.asarray(itl.residual_history) / r0,
                                   np.asarray(std.residual_history) / r0, rtol=0, atol=1e-12)
        np.testing.assert_allclose(itl.alphas[:5], std.alphas[:5], rtol=1e-10)
        np.testing.assert_allclose(itl.betas[:5], std.betas[:5], rtol=1e-10)
        np.testing.assert_allclose(u_itl.data, u_std.data, rtol=0, atol=1e-9 * np.abs(u_std.data).max())

    @pytest.mark.parametrize("runner", VARIANTS)
    def test_backends_agree(self, make_ctx, runner):
        ctx = make_ctx(8, 16)
        _, _, _, mf = run(ctx, runner, backend=Backend.MATRIX_FREE, epsilon=1e-10)
        _, _, _, cs = run(ctx, runner, backend=Backend.CSR, epsilon=1e-10)
        assert mf.iterations == cs.iterations
        r0 = mf.initial_residual
        np.testing.assert_allclose(np.asarray(cs.residual_history) / r0,
                                   np.asarray(mf.residual_history) / r0, rtol=0, atol=1e-12)

    @pytest.mark.parametrize("runner", VARIANTS)
    def test_layouts_give_same_bits(self, make_ctx, runner):
        ctx = make_ctx(6, 8)
        _, _, u_v, vert = run(ctx, runner, Layout.VERTICAL_CONTIGUOUS, epsilon=1e-10)
        _, _, u_h, horiz = run(ctx, runner, Layout.HORIZONTAL_CONTIGUOUS, epsilon=1e-10)
        assert vert.residual_history == horiz.residual_history
        np.testing.assert_array_equal(u_v.to_array(), u_h.to_array())

    @pytest.mark.parametrize("backend", list(Backend))
    def test_workers_give_same_bits(self, make_ctx, backend):
        ctx = make_ctx(8, 8)
        _, _, u1, one = run(ctx, backend=backend, workers=1, epsilon=1e-10)
        _, _, u4, four = run(ctx, backend=backend, workers=4, epsilon=1e-10)
        assert one.residual_history == four.residual_history
        np.testing.assert_array_equal(u1.data, u4.data)


class TestStopping:

    @pytest.mark.parametrize("runner", VARIANTS)
    def test_true_residual_matches_recurrence(self, make_ctx, runner):
        ctx = make_ctx(8, 16)
        op, f, u, result = run(ctx, runner)
        assert result.converged
        assert result.relative_residual < 1e-5
        gap = abs(true_residual(op, u, f) - result.final_residual)
        assert gap / result.initial_residual <= 1e-9

    @pytest.mark.parametrize("runner", VARIANTS)
    def test_iteration_cap(self, make_ctx, runner):
        _, _, _, result = run(make_ctx(8, 16), runner, epsilon=1e-14, maxiter=2)
        assert not result.converged
        assert result.iterations == 2
        assert len(result.residual_history) == 3

    @pytest.mark.parametrize("runner", VARIANTS)
    def test_fixed_iterations(self, make_ctx, runner):
        _, _, _, result = run(make_ctx(8, 16), runner, epsilon=0.5, maxiter=10, fixed_iterations=True)
        assert result.iterations == 10
        assert result.converged

    def test_single_precision(self, make_ctx):
        ctx = make_ctx(8, 16)
        op, f, u, result = run(ctx, epsilon=1e-4, precision=Precision.SINGLE)
        assert u.dtype == np.float32
        assert result.converged
        assert result.relative_residual < 1e-4
        assert true_residual(op, u, f) > 0

    def test_solve_attaches_metadata(self, make_ctx):
        ctx = make_ctx(4, 8)
        cfg = SolverConfig(backend=Backend.CSR, variant=Variant.STANDARD)
        op, _ = build_operator(ctx, cfg)
        f = Field3D.random(4, 8, seed=3)
        _, result = solve(op, f, None, cfg)
        assert result.true_residual is not None
        assert result.metadata["backend"] == "csr"
        assert result.metadata["grid"] == "4x4x8"
        assert result.timings["total"] > 0

    def test_initial_guess_is_not_modified(self, make_ctx):
        ctx = make_ctx(4, 8)
        cfg = SolverConfig()
        op, _ = build_operator(ctx, cfg)
        f = Field3D.random(4, 8, seed=3)
        u0 = Field3D.random(4, 8, seed=4)
        before = u0.data.copy()
        u, result = pcg_interleaved(op, f, u0, cfg)
        np.testing.assert_array_equal(u0.data, before)
        assert result.converged


class _Negated:
    """Operator -I: every search direction has negative energy."""

    def apply(self, x, y):
        np.negative(x.data, out=y.data)

    def precondition(self, y, x):
        np.copyto(x.data, y.data)


class TestBreakdown:

    @pytest.mark.parametrize("runner", VARIANTS)
    def test_indefinite_operator(self, runner):
        f = Field3D.random(2, 2, seed=1)
        with pytest.raises(BreakdownError):
            runner(_Negated(), f, None, SolverConfig())


@pytest.mark.slow
class TestFullSize:

    def test_converges_on_large_panel(self, make_ctx):
        """8.4 million unknowns: five orders of magnitude within 100 iterations."""
        ctx = make_ctx(256, 128)
        _, _, _, result = run(ctx, pcg_interleaved, maxiter=100, workers=os.cpu_count() or 1)
        assert result.converged
        assert result.relative_residual <= 1e-5

    def test_iterations_do_not_grow_with_resolution(self, make_ctx):
        """With omega proportional to the grid spacing the iteration count stays flat."""
        counts = []
        for m in (32, 64, 128):
            ctx = make_ctx(m, 64, omega2=OMEGA2 * (256 / m) ** 2, lambda2=LAMBDA2)
            _, _, _, result = run(ctx, maxiter=500, workers=os.cpu_count() or 1)
            assert result.converged
            counts.append(result.iterations)
        assert max(counts) <= 1.25 * min(counts)
