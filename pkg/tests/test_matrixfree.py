"""Tests for the matrix-free operator and its fused kernels."""

import numpy as np
import pytest
import scipy.sparse.linalg

from src.csr import assemble_dense, assemble_preconditioner
from src.discretization import VerticalProfile
from src.errors import BreakdownError, InvalidArgumentError
from src.fields import Field3D, axpy, dot, nrm2, relayout, scal
from src.geometry import build_planar_panel
from src.matrixfree import (
    FusedState,
    MatrixFreeOperator,
    OperatorContext,
    apply,
    interleaved_prec_kernel,
    interleaved_spmv_kernel,
    precondition,
)
from src.models import GeometryKind, Layout


def rel(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


class TestApply:

    def test_single_cell(self, make_ctx):
        """One cell, no neighbours: y = a_0 |T| x."""
        ctx = make_ctx(1, 1, GeometryKind.PLANAR)
        x = Field3D.from_array(np.full((1, 1, 1), 2.0))
        y = x.zeros_like()
        apply(ctx, x, y)
        a = ctx.profile.unscaled()[0]
        np.testing.assert_allclose(y.data[0], a[0] * ctx.geometry.cell_area[0, 0] * 2.0, rtol=1e-14)

    @pytest.mark.parametrize("m,n_z", [(2, 2), (4, 8)])
    def test_matches_dense_matrix(self, make_ctx, geometry_kind, m, n_z):
        ctx = make_ctx(m, n_z, geometry_kind)
        dense = assemble_dense(ctx)
        for seed in range(5):
            x = Field3D.random(m, n_z, seed=seed)
            y = x.zeros_like()
            apply(ctx, x, y)
            assert rel(y.data, dense @ x.data) <= 1e-13

    def test_layout_gives_same_bits(self, make_ctx):
        ctx = make_ctx(5, 6)
        x = Field3D.random(5, 6, seed=4)
        xh = relayout(x, Layout.HORIZONTAL_CONTIGUOUS)
        y, yh = x.zeros_like(), xh.zeros_like()
        apply(ctx, x, y)
        apply(ctx, xh, yh)
        np.testing.assert_array_equal(y.to_array(), yh.to_array())

    @pytest.mark.parametrize("workers", [2, 5])
    def test_workers_give_same_bits(self, make_ctx, workers):
        ctx = make_ctx(6, 4)
        x = Field3D.random(6, 4, seed=4)
        y1, yn = x.zeros_like(), x.zeros_like()
        apply(ctx, x, y1, workers=1)
        apply(ctx, x, yn, workers=workers)
        np.testing.assert_array_equal(y1.data, yn.data)

    @pytest.mark.parametrize("layout", list(Layout))
    def test_planar_constant_field(self, make_ctx, layout):
        """Flat panel, x = 1: every flux cancels and y = h^2 a_k."""
        ctx = make_ctx(4, 5, GeometryKind.PLANAR, extent=2.0)
        x = Field3D.from_array(np.ones((4, 4, 5)), layout)
        y = x.zeros_like()
        apply(ctx, x, y)
        a = ctx.profile.unscaled()[0]
        expected = np.broadcast_to((2.0 / 4) ** 2 * a, (4, 4, 5))
        np.testing.assert_allclose(y.to_array(), expected, rtol=1e-11)

    @pytest.mark.parametrize("m,n_z", [(3, 4), (5, 7)])
    def test_symmetric_on_random_vectors(self, make_ctx, geometry_kind, m, n_z):
        """<Ax, y> = <x, Ay>."""
        ctx = make_ctx(m, n_z, geometry_kind)
        for seed in range(4):
            x = Field3D.random(m, n_z, seed=seed)
            y = Field3D.random(m, n_z, seed=seed + 100)
            ax, ay = x.zeros_like(), y.zeros_like()
            apply(ctx, x, ax)
            apply(ctx, y, ay)
            lhs, rhs = dot(ax, y), dot(x, ay)
            assert abs(lhs - rhs) <= 1e-12 * nrm2(ax) * nrm2(y)

    def test_positive_energy(self, make_ctx):
        ctx = make_ctx(4, 8)
        x = Field3D.random(4, 8, seed=9)
        y = x.zeros_like()
        apply(ctx, x, y)
        assert dot(x, y) > 0

    def test_single_precision(self, make_ctx):
        ctx = make_ctx(4, 8)
        x = Field3D.random(4, 8, seed=2)
        y = x.zeros_like()
        apply(ctx, x, y)
        x32 = x.astype(np.float32)
        y32 = x32.zeros_like()
        apply(ctx, x32, y32)
        assert y32.dtype == np.float32
        assert rel(y32.data.astype(np.float64), y.data) < 1e-4

    def test_rejects_aliasing_and_mismatch(self, make_ctx):
        ctx = make_ctx(2, 2)
        x = Field3D.random(2, 2)
        with pytest.raises(InvalidArgumentError):
            apply(ctx, x, x)
        with pytest.raises(InvalidArgumentError):
            apply(ctx, Field3D.zeros(3, 2), Field3D.zeros(3, 2))


class TestPrecondition:

    def test_exact_for_one_column(self, make_ctx):
        """Without horizontal neighbours M = A."""
        ctx = make_ctx(1, 16)
        y = Field3D.random(1, 16, seed=3)
        x, ax = y.zeros_like(), y.zeros_like()
        precondition(ctx, y, x)
        apply(ctx, x, ax)
        assert rel(ax.data, y.data) <= 1e-12

    @pytest.mark.parametrize("layout", list(Layout))
    def test_matches_sparse_solve(self, make_ctx, layout):
        ctx = make_ctx(8, 16)
        M = assemble_preconditioner(ctx, layout).to_scipy().tocsc()
        y = relayout(Field3D.random(8, 16, seed=6), layout)
        x = y.zeros_like()
        precondition(ctx, y, x)
        assert rel(x.data, scipy.sparse.linalg.spsolve(M, y.data)) <= 1e-12

    def test_zero_pivot(self):
        profile = VerticalProfile(
            n_z=1,
            a_prime=np.zeros(1),
            b_prime=np.zeros(1),
            c_prime=np.zeros(1),
            d=np.full(1, -1.0),
            omega2=1.0,
            lambda2=0.0,
        )
        ctx = OperatorContext(profile=profile, geometry=build_planar_panel(1, 1.0))
        y = Field3D.from_array(np.ones((1, 1, 1)))
        with pytest.raises(BreakdownError):
            precondition(ctx, y, y.zeros_like())


class TestFusedKernels:

    @pytest.fixture
    def state(self):
        fields = [Field3D.random(6, 10, seed=s) for s in range(5)]
        return FusedState(*fields, alpha=0.42, beta=0.73)

    def test_spmv_kernel_matches_unfused(self, make_ctx, state):
        ctx = make_ctx(6, 10)
        fused = state.copy()
        sigma = interleaved_spmv_kernel(ctx, fused)

        ref = state.copy()
        az = ref.z.zeros_like()
        axpy(ref.alpha, ref.p, ref.u)
        scal(ref.beta, ref.p)
        axpy(1.0, ref.z, ref.p)
        apply(ctx, ref.z, az)
        scal(ref.beta, ref.q)
        axpy(1.0, az, ref.q)

        assert rel(fused.u.data, ref.u.data) <= 1e-13
        assert rel(fused.p.data, ref.p.data) <= 1e-13
        assert rel(fused.q.data, ref.q.data) <= 1e-13
        np.testing.assert_allclose(sigma, dot(ref.p, ref.q), rtol=1e-13)
        assert fused.sigma == sigma

    def test_prec_kernel_matches_unfused(self, make_ctx, state):
        ctx = make_ctx(6, 10)
        fused = state.copy()
        r_norm, kappa = interleaved_prec_kernel(ctx, fused)

        ref = state.copy()
        axpy(-ref.alpha, ref.q, ref.r)
        precondition(ctx, ref.r, ref.z)

        assert rel(fused.r.data, ref.r.data) <= 1e-13
        assert rel(fused.z.data, ref.z.data) <= 1e-13
        np.testing.assert_allclose(r_norm, nrm2(ref.r), rtol=1e-13)
        np.testing.assert_allclose(kappa, dot(ref.r, ref.z), rtol=1e-12)

    def test_kernels_leave_z_alone_in_spmv(self, make_ctx, state):
        ctx = make_ctx(6, 10)
        fused = state.copy()
        interleaved_spmv_kernel(ctx, fused)
        np.testing.assert_array_equal(fused.z.data, state.z.data)
        np.testing.assert_array_equal(fused.r.data, state.r.data)

    def test_state_rejects_shared_vectors(self):
        x = Field3D.random(2, 2)
        with pytest.raises(InvalidArgumentError):
            FusedState(x, x, x.zeros_like(), x.zeros_like(), x.zeros_like())


class TestBackendObject:

    def test_delegates(self, make_ctx):
        ctx = make_ctx(3, 4)
        op = MatrixFreeOperator(ctx, workers=2)
        assert (op.m, op.n_z, op.name) == (3, 4, "matrix_free")
        x = Field3D.random(3, 4, seed=1)
        y1, y2 = x.zeros_like(), x.zeros_like()
        op.apply(x, y1)
        apply(ctx, x, y2)
        np.testing.assert_array_equal(y1.data, y2.data)
