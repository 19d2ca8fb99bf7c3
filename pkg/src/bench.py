"""
Benchmark harness for ``main.py bench``.

Each configuration runs a fixed number of PCG iterations several times
after a warm-up solve (which also triggers kernel compilation) and reports
the median of every timer. Rates are estimates from the counted costs, not
hardware measurements.
"""

import itertools
import logging
import statistics
from dataclasses import replace
from typing import Dict, Iterable, List, Optional

from rich.console import Console
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table

from .discretization import cost_model, throughput_estimate
from .fields import Field3D
from .matrixfree import OperatorContext, build_problem
from .models import (
    Backend,
    BenchRow,
    CacheLevel,
    CostReport,
    Kernel,
    Layout,
    Precision,
    RunSpec,
    Variant,
)
from .solver import build_operator, pcg_interleaved, pcg_standard


console = Console(stderr=True)
log = logging.getLogger(__name__)


def iteration_cost(backend: Backend, variant: Variant) -> CostReport:
    """
    FLOPs and memory references of one iteration with nothing cached.

    The CSR backend replaces the stencil part of the SpMV with the stored
    matrix product.
    """
    total = Kernel.INTERLEAVED_TOTAL if variant is Variant.INTERLEAVED else Kernel.PCG_TOTAL
    report = cost_model(total, CacheLevel.NONE)
    if backend is Backend.CSR:
        stencil = cost_model(Kernel.SPMV, CacheLevel.NONE)
        stored = cost_model(Kernel.CSR_SPMV, CacheLevel.NONE)
        report = replace(report,
                         flops=report.flops - stencil.flops + stored.flops,
                         mem_refs=report.mem_refs - stencil.mem_refs + stored.mem_refs)
    return report


class BenchmarkRunner:
    """Times PCG iterations over a sweep of configurations."""

    def __init__(self, spec: RunSpec, iterations: int = 100, repetitions: int = 3, warmup: int = 1):
        self.spec = spec
        self.iterations = iterations
        self.repetitions = repetitions
        self.warmup = warmup
        self._contexts: Dict[tuple, OperatorContext] = {}

    def _context(self, m: int) -> OperatorContext:
        s = self.spec
        key = (s.geometry, m, s.n_z, s.h_atmos, s.omega2, s.lambda2, s.planar_extent)
        if key not in self._contexts:
            self._contexts[key] = build_problem(s.geometry, m, s.n_z, s.h_atmos,
                                                s.omega2, s.lambda2, s.planar_extent)
        return self._contexts[key]

    def run_one(self, backend: Backend, variant: Variant, layout: Layout,
                precision: Precision, workers: int, m: Optional[int] = None) -> BenchRow:
        """Median timings of one configuration; ``m`` defaults to the run's panel size."""
        spec = self.spec
        m = m or spec.m
        cfg = spec.solver_config(backend=backend, variant=variant, precision=precision,
                                 workers=workers, maxiter=self.iterations, fixed_iterations=True)
        runner = pcg_interleaved if variant is Variant.INTERLEAVED else pcg_standard
        ctx = self._context(m)

        setups = []
        op = None
        for _ in range(self.repetitions):
            op, setup = build_operator(ctx, cfg, layout)
            setups.append(setup)

        f = Field3D.random(m, spec.n_z, layout, precision.dtype, seed=spec.seed)
        if self.warmup:
            # two iterations reach every kernel of both variants
            runner(op, f, None, replace(cfg, maxiter=max(2, self.warmup)))

        per_key: Dict[str, List[float]] = {}
        iterations = self.iterations
        for _ in range(self.repetitions):
            _, result = runner(op, f, None, cfg)
            iterations = result.iterations or 1
            for key, seconds in result.timings.items():
                per_key.setdefault(key, []).append(seconds / iterations)

        def ms(key: str) -> float:
            return statistics.median(per_key.get(key, [0.0])) * 1e3

        row = BenchRow(
            backend=backend, variant=variant, layout=layout, precision=precision,
            workers=workers, m=m, n_z=spec.n_z, iterations=iterations,
            repetitions=self.repetitions,
            setup_ms=statistics.median(setups) * 1e3,
            time_per_iteration_ms=ms("total"),
            spmv_ms=ms("spmv"),
            prec_ms=ms("prec"),
            blas_ms=ms("blas"),
            interleaved_spmv_ms=ms("interleaved_spmv"),
            interleaved_prec_ms=ms("interleaved_prec"),
        )
        if row.time_per_iteration_ms > 0:
            rates = throughput_estimate(iteration_cost(backend, variant), m * m * spec.n_z,
                                        row.time_per_iteration_ms / 1e3, precision.nbytes)
            row.gflops_est = rates.gflops
            row.gbytes_est = rates.gbytes
        log.debug("m=%d %s/%s/%s/%s/%d: %.3f ms per iteration", m, backend.value, variant.value,
                  layout.value, precision.value, workers, row.time_per_iteration_ms)
        return row

    def sweep(self, backends: Iterable[Backend], variants: Iterable[Variant],
              layouts: Iterable[Layout], precisions: Iterable[Precision],
              workers: Iterable[int], sizes: Optional[Iterable[int]] = None,
              show_progress: bool = True) -> List[BenchRow]:
        """Every combination of the given options, in nested order, sizes outermost."""
        sizes = list(sizes) if sizes else [self.spec.m]
        plan = list(itertools.product(sizes, backends, variants, layouts, precisions, workers))
        rows = []
        with Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            TaskProgressColumn(),
            console=console,
            disable=not show_progress,
        ) as progress:
            task = progress.add_task("[cyan]Benchmarking...", total=len(plan))
            for m, backend, variant, layout, precision, w in plan:
                progress.update(task, description=f"[cyan]m={m} {backend.value} {variant.value} "
                                                  f"{layout.value} {precision.value} x{w}")
                rows.append(self.run_one(backend, variant, layout, precision, w, m))
                progress.advance(task)
        return compare(rows)


def _counterpart(rows: List[BenchRow], row: BenchRow, **change) -> Optional[BenchRow]:
    key = replace(row, **change)
    for other in rows:
        if (other.backend, other.variant, other.layout, other.precision, other.workers,
                other.m, other.n_z) == (key.backend, key.variant, key.layout, key.precision,
                                        key.workers, key.m, key.n_z):
            return other
    return None


def compare(rows: List[BenchRow]) -> List[BenchRow]:
    """
    Fill the speedup columns from the median times.

    ``speedup_vs_csr`` is set on matrix-free rows whose CSR counterpart was
    timed, ``speedup_vs_standard`` on interleaved rows whose standard
    counterpart was timed. Values above 1 mean this row is faster.
    """
    for row in rows:
        if row.time_per_iteration_ms <= 0:
            continue
        if row.backend is Backend.MATRIX_FREE:
            other = _counterpart(rows, row, backend=Backend.CSR)
            if other:
                row.speedup_vs_csr = other.time_per_iteration_ms / row.time_per_iteration_ms
                if row.speedup_vs_csr < 1:
                    log.warning("m=%d %s: matrix-free is slower than CSR (%.2fx)", row.m,
                                row.variant.value, row.speedup_vs_csr)
        if row.variant is Variant.INTERLEAVED:
            other = _counterpart(rows, row, variant=Variant.STANDARD)
            if other:
                row.speedup_vs_standard = other.time_per_iteration_ms / row.time_per_iteration_ms
                if row.speedup_vs_standard < 1:
                    log.warning("m=%d %s: interleaved is slower than standard (%.2fx)", row.m,
                                row.backend.value, row.speedup_vs_standard)
    return rows


def fastest(rows: List[BenchRow], **match) -> Optional[BenchRow]:
    """Fastest row whose attributes equal ``match``."""
    picked = [r for r in rows if all(getattr(r, k) == v for k, v in match.items())]
    return min(picked, key=lambda r: r.time_per_iteration_ms) if picked else None


def _ratio(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.2f}x"


def display(rows: List[BenchRow]):
    """Print the sweep as a table on the console."""
    table = Table(title="Time per Iteration", show_header=True, header_style="bold magenta")
    for column in ("m", "Backend", "Variant", "Layout", "Precision", "Workers",
                   "Total ms", "Setup ms", "GFLOP/s est", "GB/s est", "vs CSR", "vs standard"):
        table.add_column(column)
    for r in rows:
        table.add_row(str(r.m), r.backend.value, r.variant.value, r.layout.value, r.precision.value,
                      str(r.workers), f"{r.time_per_iteration_ms:.3f}", f"{r.setup_ms:.1f}",
                      f"{r.gflops_est:.2f}", f"{r.gbytes_est:.2f}",
                      _ratio(r.speedup_vs_csr), _ratio(r.speedup_vs_standard))
    console.print()
    console.print(table)
