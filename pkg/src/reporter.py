"""
Report generation for COLUMN PCG runs.
Supports JSON (solve results), CSV (residual histories, benchmark rows,
cost tables) and terminal summaries.
"""

import csv
import json
import sys
from pathlib import Path
from typing import IO, Iterable, List, Optional, Union

from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from .models import BENCH_FIELDS, BenchRow, CostReport, SolveResult


Target = Union[str, Path, IO[str], None]


class Reporter:
    """Generate reports in various formats."""

    @staticmethod
    def _write_csv(header: Iterable[str], rows: Iterable[Iterable], target: Target) -> Optional[str]:
        """Comma separated, '.' decimal, LF line endings; None target means stdout."""
        if target is None or hasattr(target, "write"):
            stream = target or sys.stdout
            writer = csv.writer(stream, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
            return None

        with open(target, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
        return str(target)

    @staticmethod
    def generate_json(result: SolveResult, output_path: str = "result.json", run: Optional[dict] = None):
        """
        Write a solve result as one flat JSON object.

        Args:
            result: Solve result
            output_path: Path to save the JSON file
            run: Run description merged in (grid, model parameters, seed)
        """
        data = dict(run or {})
        data.update(result.to_dict())
        Path(output_path).write_text(json.dumps(data, indent=2), encoding='utf-8')
        return output_path

    @staticmethod
    def generate_residual_csv(result: SolveResult, output_path: Target = "residuals.csv"):
        """Residual history as (iteration, abs_residual, rel_residual)."""
        rows = ((j, repr(res), repr(rel)) for j, res, rel in result.residual_rows())
        return Reporter._write_csv(("iteration", "abs_residual", "rel_residual"), rows, output_path)

    @staticmethod
    def generate_bench_csv(rows: List[BenchRow], output_path: Target = None):
        """Benchmark rows under a fixed header."""
        return Reporter._write_csv(BENCH_FIELDS, (row.to_row() for row in rows), output_path)

    @staticmethod
    def generate_cost_csv(reports: List[CostReport], output_path: Target = None):
        """Cost table rows (kernel, cache, flops, mem_refs)."""
        rows = ((r.kernel.value, r.cache.value, r.flops, r.mem_refs) for r in reports)
        return Reporter._write_csv(("kernel", "cache", "flops", "mem_refs"), rows, output_path)

    @staticmethod
    def print_summary(result: SolveResult, console: Console):
        """Display a summary of one solve."""
        table = Table(title="Solve Summary", show_header=True, header_style="bold magenta")
        table.add_column("Metric", style="cyan")
        table.add_column("Value", style="green")

        meta = result.metadata
        if "grid" in meta:
            table.add_row("Grid", str(meta["grid"]))
        for key in ("backend", "variant", "layout", "precision", "workers"):
            if key in meta:
                table.add_row(key.title(), str(meta[key]))
        table.add_row("", "")
        table.add_row("Iterations", str(result.iterations))
        table.add_row("Initial Residual", f"{result.initial_residual:.6e}")
        table.add_row("Final Residual", f"{result.final_residual:.6e}")
        table.add_row("Relative Residual", f"{result.relative_residual:.3e}")
        if result.true_residual is not None:
            table.add_row("True Residual", f"{result.true_residual:.6e}")

        table.add_row("", "")
        table.add_row("Setup", f"{result.timings['setup'] * 1e3:.2f} ms")
        table.add_row("Total", f"{result.timings['total'] * 1e3:.2f} ms")
        if result.iterations:
            table.add_row("Per Iteration", f"{result.time_per_iteration() * 1e3:.3f} ms")

        console.print()
        console.print(table)
        console.print()

        if result.converged:
            console.print(Panel.fit(
                f"[bold green]✓ Converged in {result.iterations} iterations[/bold green]",
                title="✓ Converged"
            ))
        else:
            console.print(Panel.fit(
                f"[bold yellow]⚠ Stopped after {result.iterations} iterations "
                f"at relative residual {result.relative_residual:.3e}[/bold yellow]",
                title="Not Converged"
            ))
