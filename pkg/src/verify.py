"""
Verification suite run by ``main.py verify``.

Every check compares the solver against an independent oracle on small
grids: the dense assembled matrix, the unfused kernel sequences, the other
backend, the other layout or another worker count.
"""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table

from .csr import (
    assemble_csr,
    assemble_dense,
    assemble_preconditioner,
    solve_tridiag_set,
    spmv_csr,
)
from .errors import ColumnSolverError
from .fields import Field3D, axpy, dot, nrm2, relayout, scal
from .geometry import anisotropy, build_graded_vertical_grid
from .matrixfree import (
    FusedState,
    OperatorContext,
    apply,
    build_problem,
    interleaved_prec_kernel,
    interleaved_spmv_kernel,
    precondition,
)
from .models import Backend, GeometryKind, Layout, RunSpec, SolverConfig, Variant
from .solver import build_operator, solve


console = Console()
log = logging.getLogger(__name__)

FAULTS = ("symmetry",)


@dataclass
class CheckResult:
    """Outcome of one check on one grid."""

    name: str
    grid: str
    geometry: str
    passed: bool
    detail: str = ""


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    scale = np.linalg.norm(b)
    diff = np.linalg.norm(a - b)
    return float(diff / scale) if scale > 0 else float(diff)


def _history_gap(a: Sequence[float], b: Sequence[float]) -> float:
    """Largest per-iteration difference of two residual histories, relative to that iteration."""
    if len(a) != len(b):
        return float("inf")
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    scale = np.maximum(np.abs(a), np.abs(b))
    diff = np.abs(a - b)
    gaps = np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)
    return float(np.max(gaps)) if gaps.size else 0.0


class VerificationSuite:
    """Oracle checks on a list of small grids, for both panel geometries."""

    def __init__(self, spec: RunSpec, grids: List[Tuple[int, int]], vectors: int = 20,
                 preconditioner_vectors: int = 10, spectrum_max_n: int = 1024,
                 tolerance: float = 1e-13, history_tolerance: float = 1e-10, workers: int = 4,
                 inject_fault: Optional[str] = None):
        """
        Initialize the suite.

        Args:
            spec: Model parameters and seed (grid sizes are taken from ``grids``)
            grids: (m, n_z) pairs
            vectors: Random vectors per operator equivalence check
            preconditioner_vectors: Random vectors per preconditioner check
            spectrum_max_n: Largest n for the dense eigensolves
            tolerance: Relative tolerance of the operator and kernel equivalence checks
            history_tolerance: Per-iteration relative tolerance between two residual
                histories; round-off differences grow as the residual shrinks
            workers: Worker count compared with a single worker
            inject_fault: Name of a check to sabotage (negative control)
        """
        self.spec = spec
        self.grids = grids
        self.vectors = vectors
        self.preconditioner_vectors = preconditioner_vectors
        self.spectrum_max_n = spectrum_max_n
        self.tolerance = tolerance
        self.history_tolerance = history_tolerance
        self.workers = max(2, workers)
        self.inject_fault = inject_fault
        self.results: List[CheckResult] = []

    # ------------------------------------------------------------------

    def _problem(self, kind: GeometryKind, m: int, n_z: int) -> OperatorContext:
        s = self.spec
        return build_problem(kind, m, n_z, s.h_atmos, s.omega2, s.lambda2, s.planar_extent)

    def _vectors(self, m: int, n_z: int, count: int, offset: int = 0):
        for v in range(count):
            yield Field3D.random(m, n_z, seed=self.spec.seed + offset + v)

    def _record(self, name: str, grid: str, kind: GeometryKind, check: Callable[[], Tuple[bool, str]]):
        try:
            passed, detail = check()
        except (ColumnSolverError, ArithmeticError, ValueError, np.linalg.LinAlgError) as e:
            passed, detail = False, f"{type(e).__name__}: {e}"
        log.debug("%s on %s %s: %s (%s)", name, kind.value, grid, passed, detail)
        self.results.append(CheckResult(name, grid, kind.value, passed, detail))

    # ------------------------------------------------------------------
    # Checks

    def check_triple_equivalence(self, ctx: OperatorContext, dense: np.ndarray) -> Tuple[bool, str]:
        A = assemble_csr(ctx)
        worst = 0.0
        for x in self._vectors(ctx.m, ctx.n_z, self.vectors):
            y_mf = x.zeros_like()
            y_csr = x.zeros_like()
            apply(ctx, x, y_mf)
            spmv_csr(A, x, y_csr)
            y_dense = dense @ x.data
            worst = max(worst, _rel(y_mf.data, y_csr.data), _rel(y_mf.data, y_dense),
                        _rel(y_csr.data, y_dense))
        return worst <= self.tolerance, f"max rel err {worst:.2e}"

    def check_symmetry(self, dense: np.ndarray) -> Tuple[bool, str]:
        A = dense.copy()
        if self.inject_fault == "symmetry":
            off = np.flatnonzero(A[0, 1:])
            if off.size:
                A[0, off[0] + 1] = -A[0, off[0] + 1]
        gap = float(np.max(np.abs(A - A.T)))
        bound = 1e-15 * float(np.max(np.abs(A)))
        return gap <= bound, f"max|A-A^T| {gap:.2e} (bound {bound:.2e})"

    def check_positive_definite(self, dense: np.ndarray) -> Tuple[bool, str]:
        diag = np.diag(dense)
        off = np.sum(np.abs(dense), axis=1) - np.abs(diag)
        dominant = bool(np.all(diag > 0) and np.all(diag >= off))
        if dense.shape[0] > self.spectrum_max_n:
            return dominant, "diagonally dominant, eigensolve skipped" if dominant else "not diagonally dominant"
        lam_min = float(scipy.linalg.eigvalsh(dense, subset_by_index=[0, 0])[0])
        return dominant and lam_min > 0, f"lambda_min {lam_min:.3e}, dominant={dominant}"

    def check_preconditioner(self, ctx: OperatorContext, backend: Backend) -> Tuple[bool, str]:
        M = assemble_preconditioner(ctx)
        M_sparse = M.to_scipy()
        worst = 0.0
        for y in self._vectors(ctx.m, ctx.n_z, self.preconditioner_vectors, offset=1000):
            x = y.zeros_like()
            if backend is Backend.CSR:
                solve_tridiag_set(M, y, x)
            else:
                precondition(ctx, y, x)
            worst = max(worst, _rel(M_sparse @ x.data, y.data))
        return worst <= 1e-12, f"max |M M^-1 y - y|/|y| {worst:.2e}"

    def check_fused_kernels(self, ctx: OperatorContext) -> Tuple[bool, str]:
        m, n_z = ctx.m, ctx.n_z
        seed = self.spec.seed + 2000
        fields = [Field3D.random(m, n_z, seed=seed + v) for v in range(5)]
        state = FusedState(*fields, alpha=0.37, beta=0.81)

        fused = state.copy()
        sigma = interleaved_spmv_kernel(ctx, fused)
        ref = state.copy()
        tmp = ref.z.zeros_like()
        axpy(ref.alpha, ref.p, ref.u)
        scal(ref.beta, ref.p)
        axpy(1.0, ref.z, ref.p)
        apply(ctx, ref.z, tmp)
        scal(ref.beta, ref.q)
        axpy(1.0, tmp, ref.q)
        sigma_ref = dot(ref.p, ref.q)
        worst = max(_rel(fused.u.data, ref.u.data), _rel(fused.p.data, ref.p.data),
                    _rel(fused.q.data, ref.q.data), abs(sigma - sigma_ref) / abs(sigma_ref))

        fused = state.copy()
        r_norm, kappa = interleaved_prec_kernel(ctx, fused)
        ref = state.copy()
        axpy(-ref.alpha, ref.q, ref.r)
        precondition(ctx, ref.r, ref.z)
        r_ref = nrm2(ref.r)
        kappa_ref = dot(ref.r, ref.z)
        worst = max(worst, _rel(fused.r.data, ref.r.data), _rel(fused.z.data, ref.z.data),
                    abs(r_norm - r_ref) / r_ref, abs(kappa - kappa_ref) / abs(kappa_ref))
        return worst <= self.tolerance, f"max rel err {worst:.2e}"

    def _solve(self, ctx: OperatorContext, layout: Layout = Layout.VERTICAL_CONTIGUOUS, **overrides):
        cfg = SolverConfig(epsilon=1e-10, maxiter=200, **overrides)
        op, _ = build_operator(ctx, cfg, layout)
        f = relayout(Field3D.random(ctx.m, ctx.n_z, seed=self.spec.seed), layout)
        return solve(op, f, None, cfg)

    def check_variants(self, ctx: OperatorContext) -> Tuple[bool, str]:
        _, std = self._solve(ctx, variant=Variant.STANDARD)
        _, itl = self._solve(ctx, variant=Variant.INTERLEAVED)
        gap = _history_gap(std.residual_history, itl.residual_history)
        return gap <= self.history_tolerance, f"{std.iterations} iterations, max gap {gap:.2e}"

    def check_backends(self, ctx: OperatorContext) -> Tuple[bool, str]:
        _, mf = self._solve(ctx, backend=Backend.MATRIX_FREE)
        _, cs = self._solve(ctx, backend=Backend.CSR)
        gap = _history_gap(mf.residual_history, cs.residual_history)
        return gap <= self.history_tolerance, f"{mf.iterations} iterations, max gap {gap:.2e}"

    def check_layouts(self, ctx: OperatorContext) -> Tuple[bool, str]:
        u_v, vert = self._solve(ctx, Layout.VERTICAL_CONTIGUOUS)
        u_h, horiz = self._solve(ctx, Layout.HORIZONTAL_CONTIGUOUS)
        same = (vert.residual_history == horiz.residual_history
                and np.array_equal(u_v.to_array(), u_h.to_array()))
        return same, "bit-identical" if same else "histories differ"

    def check_workers(self, ctx: OperatorContext) -> Tuple[bool, str]:
        u_1, one = self._solve(ctx, workers=1)
        u_n, many = self._solve(ctx, workers=self.workers)
        same = one.residual_history == many.residual_history and np.array_equal(u_1.data, u_n.data)
        return same, f"1 vs {self.workers} workers " + ("bit-identical" if same else "differ")

    def check_conditioning(self, ctx: OperatorContext, dense: np.ndarray) -> Tuple[bool, str]:
        vgrid = build_graded_vertical_grid(ctx.n_z, self.spec.h_atmos)
        gamma2 = float(np.max(anisotropy(ctx.geometry, vgrid, self.spec.lambda2)))
        M = assemble_preconditioner(ctx).to_scipy().toarray()
        lam_m = scipy.linalg.eigh(dense, M, eigvals_only=True)
        lam_j = scipy.linalg.eigh(dense, np.diag(np.diag(dense)), eigvals_only=True)
        cond_m = lam_m[-1] / lam_m[0]
        cond_j = lam_j[-1] / lam_j[0]
        passed = lam_m[0] > 0 and (gamma2 < 100 or cond_m < cond_j)
        return passed, f"cond M^-1 A {cond_m:.3e}, Jacobi {cond_j:.3e}, max gamma^2 {gamma2:.1e}"

    # ------------------------------------------------------------------

    def _plan(self):
        for m, n_z in self.grids:
            for kind in GeometryKind:
                yield m, n_z, kind

    def run(self, show_progress: bool = True) -> List[CheckResult]:
        """Run every check and return the results."""
        self.results = []
        plan = list(self._plan())

        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TaskProgressColumn(),
            console=console,
            disable=not show_progress,
        ) as progress:
            task = progress.add_task("[cyan]Verifying...", total=len(plan))

            for m, n_z, kind in plan:
                grid = f"{m}x{m}x{n_z}"
                progress.update(task, description=f"[cyan]Verifying {kind.value} {grid}")
                ctx = self._problem(kind, m, n_z)
                dense = assemble_dense(ctx) if ctx.size <= self.spectrum_max_n else None

                if dense is not None:
                    self._record("triple_equivalence", grid, kind, lambda: self.check_triple_equivalence(ctx, dense))
                    self._record("symmetry", grid, kind, lambda: self.check_symmetry(dense))
                    self._record("positive_definite", grid, kind, lambda: self.check_positive_definite(dense))
                    self._record("conditioning", grid, kind, lambda: self.check_conditioning(ctx, dense))
                for backend in Backend:
                    self._record(f"preconditioner_{backend.value}", grid, kind,
                                 lambda: self.check_preconditioner(ctx, backend))
                self._record("fused_kernels", grid, kind, lambda: self.check_fused_kernels(ctx))
                self._record("variant_equivalence", grid, kind, lambda: self.check_variants(ctx))
                self._record("backend_equivalence", grid, kind, lambda: self.check_backends(ctx))
                self._record("layout_independence", grid, kind, lambda: self.check_layouts(ctx))
                self._record("worker_determinism", grid, kind, lambda: self.check_workers(ctx))

                progress.advance(task)

        return self.results

    @property
    def failures(self) -> List[CheckResult]:
        return [r for r in self.results if not r.passed]

    def display(self):
        """Print the check-by-check table and a verdict panel."""
        table = Table(title="Verification", show_header=True, header_style="bold magenta")
        table.add_column("Check", style="cyan")
        table.add_column("Geometry")
        table.add_column("Grid")
        table.add_column("Status")
        table.add_column("Detail", style="dim")

        for r in self.results:
            status = "[green]✓ pass[/green]" if r.passed else "[bold red]✗ FAIL[/bold red]"
            table.add_row(r.name, r.geometry, r.grid, status, r.detail)

        console.print()
        console.print(table)
        console.print()

        failed = self.failures
        if failed:
            names = sorted({r.name for r in failed})
            console.print(Panel.fit(
                f"[bold red]✗ {len(failed)} of {len(self.results)} checks failed: "
                f"{', '.join(names)}[/bold red]",
                title="Verification Failed"
            ))
        else:
            console.print(Panel.fit(
                f"[bold green]✓ All {len(self.results)} checks passed[/bold green]",
                title="✓ Verified"
            ))
