"""Tests for the benchmark harness."""

import logging

import pytest

from src.bench import BenchmarkRunner, compare, fastest, iteration_cost
from src.models import BENCH_FIELDS, Backend, BenchRow, Layout, Precision, RunSpec, Variant


def make_row(backend, variant, ms, m=4):
    return BenchRow(backend=backend, variant=variant, layout=Layout.VERTICAL_CONTIGUOUS,
                    precision=Precision.DOUBLE, workers=1, m=m, n_z=4, iterations=10,
                    repetitions=1, time_per_iteration_ms=ms)


class TestIterationCost:

    def test_matrix_free(self):
        report = iteration_cost(Backend.MATRIX_FREE, Variant.STANDARD)
        assert (report.flops, report.mem_refs) == (46, 40)
        report = iteration_cost(Backend.MATRIX_FREE, Variant.INTERLEAVED)
        assert (report.flops, report.mem_refs) == (47, 33)

    def test_csr_swaps_the_stencil(self):
        report = iteration_cost(Backend.CSR, Variant.STANDARD)
        assert (report.flops, report.mem_refs) == (46 - 20 + 14, 40 - 12 + 22)


class TestBenchmarkRunner:

    def test_run_one(self):
        runner = BenchmarkRunner(RunSpec(m=4, n_z=4), iterations=3, repetitions=2)
        row = runner.run_one(Backend.CSR, Variant.INTERLEAVED, Layout.HORIZONTAL_CONTIGUOUS,
                             Precision.SINGLE, 1)
        assert row.iterations == 3
        assert row.repetitions == 2
        assert row.time_per_iteration_ms > 0
        assert row.interleaved_spmv_ms > 0 and row.interleaved_prec_ms > 0
        assert row.gflops_est > 0 and row.gbytes_est > 0

    def test_sweep_order(self):
        runner = BenchmarkRunner(RunSpec(m=2, n_z=2), iterations=2, repetitions=1)
        rows = runner.sweep(list(Backend), [Variant.STANDARD], [Layout.VERTICAL_CONTIGUOUS],
                            [Precision.DOUBLE], [1, 2], show_progress=False)
        assert [(r.backend, r.workers) for r in rows] == [
            (Backend.MATRIX_FREE, 1), (Backend.MATRIX_FREE, 2), (Backend.CSR, 1), (Backend.CSR, 2),
        ]
        best = fastest(rows, backend=Backend.CSR)
        assert best.backend is Backend.CSR
        assert fastest(rows, workers=8) is None

    def test_sweep_sizes(self):
        """Panel sizes are the outermost loop at a fixed n_z."""
        runner = BenchmarkRunner(RunSpec(m=8, n_z=3), iterations=2, repetitions=1)
        rows = runner.sweep(list(Backend), [Variant.STANDARD], [Layout.VERTICAL_CONTIGUOUS],
                            [Precision.DOUBLE], [1], sizes=[2, 3], show_progress=False)
        assert [(r.m, r.backend) for r in rows] == [
            (2, Backend.MATRIX_FREE), (2, Backend.CSR), (3, Backend.MATRIX_FREE), (3, Backend.CSR),
        ]
        assert all(r.n_z == 3 for r in rows)

    def test_sweep_fills_speedups(self):
        runner = BenchmarkRunner(RunSpec(m=3, n_z=3), iterations=2, repetitions=1)
        rows = runner.sweep(list(Backend), list(Variant), [Layout.VERTICAL_CONTIGUOUS],
                            [Precision.DOUBLE], [1], show_progress=False)
        by_key = {(r.backend, r.variant): r for r in rows}
        for variant in Variant:
            row = by_key[Backend.MATRIX_FREE, variant]
            csr = by_key[Backend.CSR, variant]
            assert row.speedup_vs_csr == pytest.approx(
                csr.time_per_iteration_ms / row.time_per_iteration_ms)
        for backend in Backend:
            row = by_key[backend, Variant.INTERLEAVED]
            std = by_key[backend, Variant.STANDARD]
            assert row.speedup_vs_standard == pytest.approx(
                std.time_per_iteration_ms / row.time_per_iteration_ms)


class TestCompare:

    def test_speedups(self):
        rows = compare([
            make_row(Backend.MATRIX_FREE, Variant.STANDARD, 2.0),
            make_row(Backend.MATRIX_FREE, Variant.INTERLEAVED, 1.0),
            make_row(Backend.CSR, Variant.STANDARD, 6.0),
            make_row(Backend.CSR, Variant.INTERLEAVED, 4.0),
        ])
        mf_std, mf_itl, csr_std, csr_itl = rows
        assert mf_std.speedup_vs_csr == pytest.approx(3.0)
        assert mf_itl.speedup_vs_csr == pytest.approx(4.0)
        assert mf_itl.speedup_vs_standard == pytest.approx(2.0)
        assert csr_itl.speedup_vs_standard == pytest.approx(1.5)
        assert mf_std.speedup_vs_standard is None
        assert csr_std.speedup_vs_csr is None and csr_std.speedup_vs_standard is None

    def test_missing_counterpart(self):
        """Rows of different panel sizes are never compared."""
        rows = compare([
            make_row(Backend.MATRIX_FREE, Variant.INTERLEAVED, 1.0, m=4),
            make_row(Backend.CSR, Variant.INTERLEAVED, 3.0, m=8),
        ])
        assert all(r.speedup_vs_csr is None and r.speedup_vs_standard is None for r in rows)

    def test_slower_row_is_reported(self, caplog):
        with caplog.at_level(logging.WARNING, logger="src.bench"):
            rows = compare([
                make_row(Backend.MATRIX_FREE, Variant.STANDARD, 4.0),
                make_row(Backend.CSR, Variant.STANDARD, 2.0),
            ])
        assert rows[0].speedup_vs_csr == pytest.approx(0.5)
        assert "slower than CSR" in caplog.text

    def test_columns_in_csv(self):
        assert BENCH_FIELDS[-2:] == ("speedup_vs_csr", "speedup_vs_standard")
        row = compare([make_row(Backend.MATRIX_FREE, Variant.STANDARD, 1.0),
                       make_row(Backend.CSR, Variant.STANDARD, 2.0)])[0]
        data = dict(zip(BENCH_FIELDS, row.to_row()))
        assert data["speedup_vs_csr"] == pytest.approx(2.0)
        assert data["speedup_vs_standard"] is None
