"""Tests for the command line entry point."""

import json

import numpy as np
import pytest

import main
from src.config import defaults
from src.fields import load_field


def run_cli(*argv):
    return main.main([str(a) for a in argv])


class TestCostModel:

    def test_rows(self, capsys):
        assert run_cli("cost-model") == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert lines[0] == "kernel,cache,flops,mem_refs"
        assert "pcg_total,none,46,40" in lines
        assert "interleaved_prec,columns_cached,19,9" in lines
        assert "csr_spmv,none,14,22" in lines
        assert len(lines) == 1 + 7 * 3 + 4 + 3

    def test_to_file(self, tmp_path):
        path = tmp_path / "cost.csv"
        assert run_cli("cost-model", "--out-csv", path) == 0
        raw = path.read_bytes()
        assert b"\r\n" not in raw
        assert b"axpy,none,2,3" in raw


class TestSolve:

    def test_single_column(self, tmp_path):
        out = tmp_path / "result.json"
        code = run_cli("solve", "--geometry", "planar", "--m", 1, "--nz", 16,
                       "--out-json", out, "--quiet")
        assert code == 0
        data = json.loads(out.read_text())
        assert data["iterations"] == 1
        assert data["converged"] is True
        assert data["geometry"] == "planar"
        assert data["seed"] == 20130101
        for key in ("initial_residual", "final_residual", "relative_residual",
                    "true_residual", "time_total", "time_setup", "backend", "variant"):
            assert key in data
        assert not any(isinstance(v, (dict, list)) for v in data.values())

    def test_residual_csv(self, tmp_path):
        out = tmp_path / "res.csv"
        assert run_cli("solve", "--m", 4, "--nz", 8, "--out-csv", out, "--quiet") == 0
        raw = out.read_bytes()
        assert b"\r\n" not in raw
        lines = raw.decode().strip().split("\n")
        assert lines[0] == "iteration,abs_residual,rel_residual"
        first = lines[1].split(",")
        assert first[0] == "0" and float(first[2]) == 1.0

    def test_not_converged(self):
        assert run_cli("solve", "--m", 4, "--nz", 8, "--maxiter", 1, "--quiet") == 2

    @pytest.mark.parametrize("backend", ["matrix_free", "csr"])
    @pytest.mark.parametrize("variant", ["standard", "interleaved"])
    def test_options(self, backend, variant):
        assert run_cli("solve", "--m", 3, "--nz", 4, "--backend", backend,
                       "--variant", variant, "--layout", "horizontal_contiguous",
                       "--precision", "single", "--epsilon", "1e-4", "--quiet") == 0

    def test_dumps(self, tmp_path):
        code = run_cli("solve", "--m", 2, "--nz", 3, "--quiet",
                       "--dump-matrix", tmp_path / "A.mtx",
                       "--dump-solution", tmp_path / "u.bin",
                       "--dump-geometry", tmp_path / "geo.csv")
        assert code == 0
        assert (tmp_path / "A.mtx").read_text().startswith("%%MatrixMarket")
        u = load_field(str(tmp_path / "u.bin"))
        assert (u.m, u.n_z) == (2, 3)
        assert np.all(np.isfinite(u.data))
        assert (tmp_path / "geo.csv").read_text().count("\n") == 1 + 4

    def test_initial_guess(self, tmp_path):
        path = tmp_path / "u.bin"
        assert run_cli("solve", "--m", 3, "--nz", 4, "--quiet", "--dump-solution", path) == 0
        assert run_cli("solve", "--m", 3, "--nz", 4, "--quiet", "--initial-guess", path,
                       "--layout", "horizontal_contiguous") == 0

    def test_initial_guess_of_wrong_size(self, tmp_path, capsys):
        path = tmp_path / "u.bin"
        assert run_cli("solve", "--m", 2, "--nz", 4, "--quiet", "--dump-solution", path) == 0
        code = run_cli("solve", "--m", 3, "--nz", 4, "--backend", "csr", "--quiet",
                       "--initial-guess", path)
        assert code == 1
        assert "✗" in capsys.readouterr().out

    def test_missing_initial_guess(self, tmp_path):
        assert run_cli("solve", "--m", 2, "--nz", 2, "--quiet",
                       "--initial-guess", tmp_path / "missing.bin") == 1


class TestUsage:

    @pytest.mark.parametrize("argv", [
        ["solve", "--m", "0"],
        ["solve", "--omega2", "-1"],
        ["solve", "--epsilon", "0"],
        ["solve", "--bogus"],
        ["solve", "--backend", "ellpack"],
        ["verify", "--grid", "4x5x8"],
        ["bench", "--workers", "0"],
    ])
    def test_exit_code(self, argv):
        with pytest.raises(SystemExit) as info:
            main.main(argv)
        assert info.value.code == 64

    def test_no_command(self):
        assert main.main([]) == 64


class TestVerify:

    def test_small_grid_passes(self, capsys):
        assert run_cli("verify", "--grid", "2x2x2", "--vectors", 3) == 0
        assert "All" in capsys.readouterr().out

    def test_injected_fault_is_reported(self, capsys):
        code = run_cli("verify", "--grid", "2x2x2", "--vectors", 2, "--inject-fault", "symmetry")
        assert code == 3
        assert "symmetry" in capsys.readouterr().out


class TestBench:

    def test_single_configuration(self, capsys):
        code = run_cli("bench", "--m", 4, "--nz", 4, "--iterations", 3, "--repetitions", 1)
        assert code == 0
        lines = capsys.readouterr().out.strip().split("\n")
        assert len(lines) == 2
        header = lines[0].split(",")
        row = dict(zip(header, lines[1].split(",")))
        assert row["backend"] == "matrix_free"
        assert row["iterations"] == "3"
        assert float(row["time_per_iteration_ms"]) > 0

    def test_sweep(self, tmp_path):
        out = tmp_path / "bench.csv"
        code = run_cli("bench", "--m", 4, "--nz", 4, "--iterations", 2, "--repetitions", 1,
                       "--sweep-backends", "--sweep-variants", "--sweep-workers", "1,2",
                       "--out-csv", out)
        assert code == 0
        assert out.read_text().count("\n") == 1 + 2 * 2 * 2

    def test_speedup_columns(self, capsys):
        code = run_cli("bench", "--m", 3, "--nz", 3, "--iterations", 2, "--repetitions", 1,
                       "--sweep-backends")
        assert code == 0
        lines = capsys.readouterr().out.strip().split("\n")
        header = lines[0].split(",")
        assert header[-2:] == ["speedup_vs_csr", "speedup_vs_standard"]
        mf, csr = (dict(zip(header, line.split(","))) for line in lines[1:])
        assert float(mf["speedup_vs_csr"]) > 0
        assert csr["speedup_vs_csr"] == "" and mf["speedup_vs_standard"] == ""

    def test_sweep_sizes(self, capsys):
        code = run_cli("bench", "--m", 4, "--nz", 4, "--iterations", 2, "--repetitions", 1,
                       "--sweep-sizes", "2,3")
        assert code == 0
        lines = capsys.readouterr().out.strip().split("\n")
        header = lines[0].split(",")
        assert [dict(zip(header, line.split(",")))["m"] for line in lines[1:]] == ["2", "3"]

    @pytest.mark.parametrize("sizes", ["0", "2,x", "-4"])
    def test_bad_sweep_sizes(self, sizes):
        with pytest.raises(SystemExit) as info:
            main.main(["bench", "--sweep-sizes", sizes])
        assert info.value.code == 64


class TestOutputConfig:

    def test_verbose_defaults_off(self):
        assert main.build_parser().parse_args(["solve"]).verbose is False

    def test_verbose_from_config(self, monkeypatch):
        cfg = defaults()
        cfg["output"]["verbose"] = True
        monkeypatch.setattr(main, "defaults", lambda: cfg)
        assert main.build_parser().parse_args(["solve"]).verbose is True
