#!/usr/bin/env python3
"""
COLUMN PCG - CLI Entry Point
Solve, verify, benchmark and print the cost model of the column PCG solver.

Exit codes: 0 success, 1 error, 2 solve not converged, 3 verification
failed, 64 usage error.
"""

import sys
import logging
import argparse
from typing import List, Optional

from rich.console import Console
from rich.logging import RichHandler

from src.config import defaults, parse_grid
from src.errors import ColumnSolverError, InvalidArgumentError
from src.models import (
    Backend,
    GeometryKind,
    Layout,
    Precision,
    RunSpec,
    Variant,
)

console = Console()
log = logging.getLogger("column_pcg")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NOT_CONVERGED = 2
EXIT_VERIFY_FAILED = 3
EXIT_USAGE = 64


class UsageParser(argparse.ArgumentParser):
    """ArgumentParser that exits with the usage code on bad flags."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def setup_logging(verbose: bool):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.WARNING,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _values(enum) -> List[str]:
    return [e.value for e in enum]


def add_model_args(parser: argparse.ArgumentParser, cfg: dict, grid: Optional[dict] = None):
    """Flags shared by every command that builds a problem."""
    grid = grid or cfg["grid"]
    model, solver = cfg["model"], cfg["solver"]

    parser.add_argument("--geometry", choices=_values(GeometryKind), default=cfg["grid"]["geometry"],
                        help="Horizontal panel (default: %(default)s)")
    parser.add_argument("--m", type=int, default=grid["m"], help="Cells per panel side (default: %(default)s)")
    parser.add_argument("--nz", type=int, default=grid["n_z"], help="Vertical levels (default: %(default)s)")
    parser.add_argument("--h-atmos", type=float, default=model["h_atmos"],
                        help="Atmosphere depth over earth radius (default: %(default)s)")
    parser.add_argument("--planar-extent", type=float, default=cfg["grid"]["planar_extent"],
                        help="Side length of the planar panel (default: %(default)s)")
    parser.add_argument("--omega2", type=float, default=model["omega2"], help="omega^2 (default: %(default)s)")
    parser.add_argument("--lambda2", type=float, default=model["lambda2"], help="lambda^2 (default: %(default)s)")
    parser.add_argument("--backend", choices=_values(Backend), default=solver["backend"],
                        help="Operator representation (default: %(default)s)")
    parser.add_argument("--variant", choices=_values(Variant), default=solver["variant"],
                        help="PCG loop organisation (default: %(default)s)")
    parser.add_argument("--layout", choices=_values(Layout), default=solver["layout"],
                        help="Field storage order (default: %(default)s)")
    parser.add_argument("--precision", choices=_values(Precision), default=solver["precision"],
                        help="Scalar type (default: %(default)s)")
    parser.add_argument("--epsilon", type=float, default=solver["epsilon"],
                        help="Relative residual tolerance (default: %(default)s)")
    parser.add_argument("--tau", type=float, default=solver["tau"],
                        help="Absolute residual tolerance (default: %(default)s)")
    parser.add_argument("--maxiter", type=int, default=solver["maxiter"],
                        help="Iteration cap (default: %(default)s)")
    parser.add_argument("--workers", type=int, default=solver["workers"],
                        help="Parallel workers (default: %(default)s)")
    parser.add_argument("--seed", type=int, default=solver["seed"],
                        help="Seed of the random right hand side (default: %(default)s)")
    parser.add_argument("--verbose", "-v", action="store_true", default=cfg["output"]["verbose"],
                        help="Debug logging (default from output.verbose: %(default)s)")


def build_parser() -> UsageParser:
    cfg = defaults()
    parser = UsageParser(
        prog="main.py",
        description="COLUMN PCG - matrix-free PCG for strongly anisotropic elliptic problems",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  python main.py solve --geometry planar --m 1 --nz 16 --out-json result.json
  python main.py solve --m 256 --nz 128 --maxiter 100
  python main.py verify --grid 4x4x8
  python main.py bench --sweep-backends --sweep-variants
  python main.py cost-model
        """
    )

    subparsers = parser.add_subparsers(dest="command", help="Commands")

    # Solve command
    solve_parser = subparsers.add_parser("solve", help="Run one PCG solve")
    add_model_args(solve_parser, cfg)
    solve_parser.add_argument("--out-json", type=str, help="Write the solve result as JSON")
    solve_parser.add_argument("--out-csv", type=str, help="Write the residual history as CSV")
    solve_parser.add_argument("--dump-matrix", type=str, help="Write the assembled matrix (Matrix Market)")
    solve_parser.add_argument("--dump-solution", type=str, help="Write the solution field")
    solve_parser.add_argument("--dump-geometry", type=str, help="Write cell areas and edge coefficients as CSV")
    solve_parser.add_argument("--initial-guess", type=str, help="Start from a field written by --dump-solution")
    solve_parser.add_argument("--quiet", action="store_true", help="Minimal output")

    # Verify command
    vcfg = cfg["verify"]
    verify_parser = subparsers.add_parser("verify", help="Run the oracle checks on small grids")
    add_model_args(verify_parser, cfg)
    verify_parser.add_argument("--grid", action="append", type=str,
                               help=f"Grid as MxMxNZ, repeatable (default: {', '.join(vcfg['grids'])})")
    verify_parser.add_argument("--vectors", type=int, default=vcfg["vectors"],
                               help="Random vectors per equivalence check (default: %(default)s)")
    verify_parser.add_argument("--inject-fault", choices=["symmetry"], help=argparse.SUPPRESS)

    # Bench command
    bcfg = cfg["benchmark"]
    bench_parser = subparsers.add_parser("bench", help="Time fixed-iteration PCG runs")
    add_model_args(bench_parser, cfg, grid=bcfg)
    bench_parser.add_argument("--iterations", type=int, default=bcfg["iterations"],
                              help="Iterations per run (default: %(default)s)")
    bench_parser.add_argument("--repetitions", type=int, default=bcfg["repetitions"],
                              help="Runs per configuration, median reported (default: %(default)s)")
    bench_parser.add_argument("--warmup", type=int, default=bcfg["warmup"],
                              help="Warm-up iterations, not timed (default: %(default)s)")
    bench_parser.add_argument("--sweep-backends", action="store_true", help="Run every backend")
    bench_parser.add_argument("--sweep-variants", action="store_true", help="Run every variant")
    bench_parser.add_argument("--sweep-layouts", action="store_true", help="Run every layout")
    bench_parser.add_argument("--sweep-precisions", action="store_true", help="Run every precision")
    bench_parser.add_argument("--sweep-workers", type=str, help="Comma separated worker counts, e.g. 1,2,4")
    bench_parser.add_argument("--sweep-sizes", type=str,
                              help="Comma separated panel sizes m at the fixed --nz, e.g. 32,64,128")
    bench_parser.add_argument("--out-csv", type=str, help="Write rows here instead of stdout")

    # Cost model command
    cost_parser = subparsers.add_parser("cost-model", help="Print FLOP and memory reference counts")
    cost_parser.add_argument("--out-csv", type=str, help="Write rows here instead of stdout")

    return parser


def spec_from_args(args: argparse.Namespace) -> RunSpec:
    """RunSpec from parsed flags (not yet validated)."""
    return RunSpec(
        geometry=GeometryKind(args.geometry),
        m=args.m,
        n_z=args.nz,
        h_atmos=args.h_atmos,
        planar_extent=args.planar_extent,
        omega2=args.omega2,
        lambda2=args.lambda2,
        backend=Backend(args.backend),
        variant=Variant(args.variant),
        layout=Layout(args.layout),
        precision=Precision(args.precision),
        epsilon=args.epsilon,
        tau=args.tau,
        maxiter=args.maxiter,
        workers=args.workers,
        seed=args.seed,
        out_json=getattr(args, "out_json", None),
        out_csv=getattr(args, "out_csv", None),
        dump_matrix=getattr(args, "dump_matrix", None),
        dump_solution=getattr(args, "dump_solution", None),
        dump_geometry=getattr(args, "dump_geometry", None),
    )


def cmd_solve(spec: RunSpec, initial_guess: Optional[str] = None, quiet: bool = False) -> int:
    """Run one solve and write the requested outputs."""
    from src.csr import assemble_csr, export_matrix_market
    from src.fields import Field3D, dump_field, load_field, relayout
    from src.geometry import dump_geometry_csv
    from src.matrixfree import build_problem
    from src.reporter import Reporter
    from src.solver import build_operator, solve

    ctx = build_problem(spec.geometry, spec.m, spec.n_z, spec.h_atmos,
                        spec.omega2, spec.lambda2, spec.planar_extent)
    if spec.dump_geometry:
        dump_geometry_csv(ctx.geometry, spec.dump_geometry)
        console.print(f"[green]✓ Geometry saved to: {spec.dump_geometry}[/green]")

    cfg = spec.solver_config()
    op, setup = build_operator(ctx, cfg, spec.layout)
    f = Field3D.random(spec.m, spec.n_z, spec.layout, spec.precision.dtype, seed=spec.seed)

    u0 = None
    if initial_guess:
        u0 = load_field(initial_guess, expected_size=spec.grid_points)
        if u0.m != spec.m or u0.n_z != spec.n_z:
            raise InvalidArgumentError(
                f"{initial_guess}: field is {u0.m}x{u0.m}x{u0.n_z}, grid is {spec.m}x{spec.m}x{spec.n_z}"
            )
        if u0.layout is not spec.layout:
            u0 = relayout(u0, spec.layout)

    u, result = solve(op, f, u0, cfg)
    result.timings["setup"] = setup
    result.metadata.update(rhs="uniform(-1,1)", seed=spec.seed)

    if not quiet:
        Reporter.print_summary(result, console)

    if spec.out_json:
        run = {k: v for k, v in spec.describe().items()
               if not k.startswith(("out_", "dump_"))}
        Reporter.generate_json(result, spec.out_json, run=run)
        console.print(f"[green]✓ JSON result saved to: {spec.out_json}[/green]")
    if spec.out_csv:
        Reporter.generate_residual_csv(result, spec.out_csv)
        console.print(f"[green]✓ Residual history saved to: {spec.out_csv}[/green]")
    if spec.dump_matrix:
        export_matrix_market(assemble_csr(ctx, spec.layout), spec.dump_matrix)
        console.print(f"[green]✓ Matrix saved to: {spec.dump_matrix}[/green]")
    if spec.dump_solution:
        dump_field(u, spec.dump_solution)
        console.print(f"[green]✓ Solution saved to: {spec.dump_solution}[/green]")

    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def cmd_verify(spec: RunSpec, grids: Optional[List[str]] = None, vectors: int = 20,
               inject_fault: Optional[str] = None) -> int:
    """Run the verification suite; 3 if any check fails."""
    from src.verify import VerificationSuite

    vcfg = defaults()["verify"]
    pairs = [parse_grid(g) for g in (grids or vcfg["grids"])]
    suite = VerificationSuite(
        spec,
        pairs,
        vectors=vectors,
        preconditioner_vectors=vcfg["preconditioner_vectors"],
        spectrum_max_n=vcfg["spectrum_max_n"],
        workers=spec.workers,
        inject_fault=inject_fault,
    )
    suite.run()
    suite.display()

    for failure in suite.failures:
        console.print(f"[red]✗ {failure.name} failed on {failure.geometry} {failure.grid}: "
                      f"{failure.detail}[/red]")
    return EXIT_VERIFY_FAILED if suite.failures else EXIT_OK


def _parse_counts(text: Optional[str], default: int, what: str) -> List[int]:
    """Comma separated positive integers, e.g. ``1,2,4``."""
    if not text:
        return [default]
    try:
        counts = [int(w) for w in text.split(",") if w.strip()]
    except ValueError:
        raise InvalidArgumentError(f"{what} must be integers (got {text!r})") from None
    if not counts or any(w < 1 for w in counts):
        raise InvalidArgumentError(f"{what} must be positive (got {text!r})")
    return counts


def cmd_bench(spec: RunSpec, args: argparse.Namespace) -> int:
    """Run the benchmark sweep and emit CSV rows."""
    from src import bench
    from src.reporter import Reporter

    backends = list(Backend) if args.sweep_backends else [spec.backend]
    variants = list(Variant) if args.sweep_variants else [spec.variant]
    layouts = list(Layout) if args.sweep_layouts else [spec.layout]
    precisions = list(Precision) if args.sweep_precisions else [spec.precision]
    workers = _parse_counts(args.sweep_workers, spec.workers, "worker counts")
    sizes = _parse_counts(args.sweep_sizes, spec.m, "panel sizes")

    runner = bench.BenchmarkRunner(spec, iterations=args.iterations,
                                   repetitions=args.repetitions, warmup=args.warmup)
    rows = runner.sweep(backends, variants, layouts, precisions, workers, sizes)

    Reporter.generate_bench_csv(rows, args.out_csv)
    if args.out_csv:
        console.print(f"[green]✓ Benchmark rows saved to: {args.out_csv}[/green]")
    bench.display(rows)
    return EXIT_OK


def cmd_cost_model(out_csv: Optional[str] = None) -> int:
    """Print every kernel x cache cost row."""
    from src.discretization import cost_table
    from src.reporter import Reporter

    Reporter.generate_cost_csv(cost_table(), out_csv)
    if out_csv:
        console.print(f"[green]✓ Cost table saved to: {out_csv}[/green]")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI entry point."""
    parser = build_parser()
    args = parser.parse_args(argv)

    # Show help if no command
    if not args.command:
        parser.print_help()
        return EXIT_USAGE

    setup_logging(getattr(args, "verbose", defaults()["output"]["verbose"]))

    if args.command == "cost-model":
        return cmd_cost_model(args.out_csv)

    spec = spec_from_args(args)
    try:
        spec.validate()
        if args.command == "verify" and args.grid:
            for grid in args.grid:
                parse_grid(grid)
        if args.command == "bench":
            _parse_counts(args.sweep_workers, spec.workers, "worker counts")
            _parse_counts(args.sweep_sizes, spec.m, "panel sizes")
    except InvalidArgumentError as e:
        parser.error(str(e))

    try:
        if args.command == "solve":
            return cmd_solve(spec, args.initial_guess, args.quiet)
        if args.command == "verify":
            return cmd_verify(spec, args.grid, args.vectors, args.inject_fault)
        if args.command == "bench":
            return cmd_bench(spec, args)
    except (ColumnSolverError, OSError) as e:
        console.print(f"[red]✗ {e}[/red]")
        log.debug("command failed", exc_info=True)
        return EXIT_ERROR

    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
