import os
import subprocess
import sys

import numpy as np
import pytest

from memkernel.cli import RunConfig, main, parse_config, preset_names
from memkernel.errors import ConfigurationError
from memkernel.io import load_config, read_field, read_key_values

SMALL = """
[grids]
n_r = 16
n_t = 16
[verify]
sweep = 8,16
error_tol = 0.05
random_cases = 3
"""


def run(argv):
    return main([str(a) for a in argv])


def write_config(tmp_path, text, name="run.ini"):
    path = tmp_path / name
    path.write_text(text)
    return path


def manufacture_then_identify(tmp_path, preset):
    out = tmp_path / preset
    assert run(["manufacture", "--preset", preset, "--out", out]) == 0
    return run(["identify", "--preset", preset, "--out", out]), out


class TestConfig:
    def test_defaults(self):
        cfg = parse_config(load_config(text=""))
        assert cfg == RunConfig()

    def test_sections(self):
        cfg = parse_config(load_config(text="[problem]\nbc = n, d\n[grids]\nn_r = 8\n[verify]\nsweep = 8,16\n"))
        assert cfg.bc == ("N", "D") and cfg.n_r == 8 and cfg.sweep == (8, 16)

    @pytest.mark.parametrize(
        "text",
        [
            "[grids]\nn_x = 3\n",
            "[mystery]\na = 1\n",
            "[grids]\nn_r = many\n",
            "[grids]\nn_r = 2\n",
            "[problem]\nr1 = 3\n",
            "[solver]\nmethod = newton\n",
            "[problem]\nbc = D\n",
        ],
    )
    def test_rejects(self, text):
        with pytest.raises(ConfigurationError):
            parse_config(load_config(text=text))

    def test_bad_expression(self):
        with pytest.raises(ConfigurationError):
            RunConfig(kernel="exp(-t) * (1 + z)").kernel_fn()

    def test_presets_parse(self):
        names = preset_names()
        assert {"roundtrip", "degenerate", "zero_lambda", "zero_kernel", "asymmetric"} <= set(names)


class TestExitCodes:
    def test_argparse_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["identify", "--method", "newton"])
        assert info.value.code == 2

    def test_invalid_config(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "[grids]\nn_r = zero\n")
        assert run(["manufacture", "--config", cfg, "--out", tmp_path / "o"]) == 2
        assert "n_r" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert run(["manufacture", "--config", tmp_path / "absent.ini", "--out", tmp_path]) == 2

    def test_unknown_preset(self, tmp_path, capsys):
        assert run(["manufacture", "--preset", "nope", "--out", tmp_path]) == 2
        assert "roundtrip" in capsys.readouterr().err

    def test_missing_inputs_is_io_error(self, tmp_path):
        assert run(["identify", "--input", tmp_path / "nothing", "--out", tmp_path / "o"]) == 3

    def test_degenerate_state(self, tmp_path, capsys):
        code, _ = manufacture_then_identify(tmp_path, "degenerate")
        assert code == 4
        assert "r = 1.5" in capsys.readouterr().err

    def test_zero_mean_weight(self, tmp_path):
        assert manufacture_then_identify(tmp_path, "zero_lambda")[0] == 5

    def test_non_convergence(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SMALL + "[solver]\nmethod = picard\nmax_iter = 1\n")
        out = tmp_path / "o"
        assert run(["manufacture", "--config", cfg, "--out", out]) == 0
        assert run(["identify", "--config", cfg, "--out", out]) == 6
        assert "contraction" in capsys.readouterr().err

    def test_asymmetric_coefficients_fail_checks(self, tmp_path, capsys):
        assert run(["coeff-report", "--preset", "asymmetric", "--out", tmp_path / "c"]) == 1
        assert read_key_values(tmp_path / "c" / "coeff_report.csv")["radial_trace_ok"] == "false"
        assert run(["verify", "--preset", "asymmetric", "--out", tmp_path / "v"]) == 1
        assert "FAIL radial_trace" in capsys.readouterr().out


class TestPipeline:
    def test_creates_output_directory(self, tmp_path):
        out = tmp_path / "a" / "b"
        cfg = write_config(tmp_path, SMALL)
        assert run(["manufacture", "--config", cfg, "--out", out]) == 0
        assert sorted(p.name for p in out.iterdir()) == ["f_tilde.csv", "g.csv", "k_true.csv", "u.csv"]

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path, SMALL)
        for name in ("x", "y"):
            assert run(["manufacture", "--config", cfg, "--out", tmp_path / name]) == 0
            assert run(["identify", "--config", cfg, "--out", tmp_path / name]) == 0
        for f in ("u.csv", "f_tilde.csv", "g.csv", "k_est.csv", "q.csv", "h.csv", "diagnostics.csv"):
            assert (tmp_path / "x" / f).read_bytes() == (tmp_path / "y" / f).read_bytes(), f

    def test_zero_kernel(self, tmp_path):
        code, out = manufacture_then_identify(tmp_path, "zero_kernel")
        assert np.all(read_field(out / "f_tilde.csv").values == 0.0)
        assert code == 0
        assert np.max(np.abs(read_field(out / "k_est.csv").values)) <= 1e-12

    def test_round_trip_diagnostics(self, tmp_path):
        code, out = manufacture_then_identify(tmp_path, "roundtrip")
        assert code == 0
        diag = read_key_values(out / "diagnostics.csv")
        assert float(diag["relative_error"]) <= 0.02 and diag["error_ok"] == "true"
        for key in ("kappa", "kappa1", "identity_residual", "contraction_bound", "constraint_residual", "first_kind_residual"):
            assert key in diag

    def test_method_flag(self, tmp_path):
        cfg = write_config(tmp_path, SMALL)
        out = tmp_path / "o"
        run(["manufacture", "--config", cfg, "--out", out])
        assert run(["identify", "--config", cfg, "--out", out, "--method", "picard"]) == 0
        assert read_key_values(out / "diagnostics.csv")["method"] == "picard"

    def test_separate_input_directory(self, tmp_path):
        cfg = write_config(tmp_path, SMALL)
        run(["manufacture", "--config", cfg, "--out", tmp_path / "data"])
        assert run(["identify", "--config", cfg, "--input", tmp_path / "data", "--out", tmp_path / "res"]) == 0
        assert (tmp_path / "res" / "k_est.csv").is_file()

    def test_sweep_uses_subdirectories(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MEMKERNEL_WORKERS", "2")
        cfg = write_config(tmp_path, SMALL)
        out = tmp_path / "s"
        assert run(["manufacture", "--config", cfg, "--out", out, "--sweep", "n_r=8,16"]) == 0
        assert run(["identify", "--config", cfg, "--out", out, "--sweep", "n_r=8,16"]) == 0
        assert read_field(out / "n_r=8" / "k_est.csv").values.shape == (9, 9)
        assert (out / "report.txt").read_text().count("[n_r=") == 2

    def test_bad_sweep(self, tmp_path):
        assert run(["manufacture", "--out", tmp_path, "--sweep", "n_t=8"]) == 2

    def test_bad_worker_count(self, tmp_path, monkeypatch):
        monkeypatch.setenv("MEMKERNEL_WORKERS", "lots")
        assert run(["manufacture", "--out", tmp_path, "--sweep", "n_r=8,16"]) == 2

    def test_verify_passes_and_reports_orders(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SMALL.replace("sweep = 8,16", "sweep = 16,32,64"))
        assert run(["verify", "--config", cfg, "--out", tmp_path / "v"]) == 0
        text = capsys.readouterr().out
        assert "all checks passed" in text and "order_n64" in text
        rows = (tmp_path / "v" / "sweep.csv").read_text().splitlines()
        orders = [float(line.split(",")[2]) for line in rows[2:]]
        assert all(1.5 <= o <= 2.5 for o in orders)

    def test_coefficient_report(self, tmp_path):
        assert run(["coeff-report", "--preset", "coefficients_abcd", "--out", tmp_path]) == 0
        report = read_key_values(tmp_path / "coeff_report.csv")
        assert report["ellipticity_ok"] == "true"

    def test_presets_command(self, capsys):
        assert run(["presets"]) == 0
        assert "roundtrip" in capsys.readouterr().out

    def test_console_module(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "memkernel.cli", "presets"], capture_output=True, text=True, env=dict(os.environ)
        )
        assert proc.returncode == 0 and "picard" in proc.stdout
