"""Command-line interface: tables, manifests, determinism, exit codes."""

import json
import math

import numpy as np
import pytest

from oscnodal import cli, level_new, pi_exact
from oscnodal.cli import main, read_table


def run(tmp_path, *argv):
    out = tmp_path / "out.csv"
    status = main(list(argv) + ["-o", str(out)])
    return status, out


class TestAiryCommand:
    def test_table_and_round_trip(self, tmp_path):
        status, out = run(tmp_path, "airy", "--k", "-1", "--s", "-10:10:0.05")
        assert status == 0
        header, rows = read_table(out)
        assert header == ["k", "s", "value", "method"]
        assert len(rows) == 401
        from oscnodal import ai_k
        mid = rows[200]
        assert mid[1] == pytest.approx(0.0, abs=1e-12)
        assert mid[2] == pytest.approx(ai_k(-1.0, 0.0), rel=1e-12)
        # full round-trip precision: re-parsed values match exactly
        assert mid[2] == float(repr(mid[2]))

    def test_header_and_comment_block(self, tmp_path):
        _, out = run(tmp_path, "airy", "--k", "0", "--s", "0:1:0.5")
        lines = out.read_text().splitlines()
        assert lines[0].startswith("#")
        assert any(not line.startswith("#") and line.startswith("k,")
                   for line in lines)

    def test_determinism(self, tmp_path):
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        main(["airy", "--k", "-0.5", "--s", "-3:3:0.1", "-o", str(a)])
        main(["airy", "--k", "-0.5", "--s", "-3:3:0.1", "-o", str(b)])
        assert a.read_bytes() == b.read_bytes()

    def test_manifest_written(self, tmp_path):
        _, out = run(tmp_path, "airy", "--k", "0", "--s", "0,1")
        manifest = json.loads((tmp_path / "out_manifest.json").read_text())
        assert manifest["command"] == "airy"
        assert manifest["parameters"]["k"] == 0.0
        assert "library_version" in manifest
        assert manifest["wall_clock_seconds"] >= 0.0


class TestProjectorCommand:
    def test_single_pair(self, tmp_path):
        status, out = run(tmp_path, "projector", "--d", "2", "--N", "12",
                          "--x", "0.5,0.1", "--y", "0.2,-0.3")
        assert status == 0
        header, rows = read_table(out)
        assert header == ["x1", "x2", "y1", "y2", "pi_mantissa", "pi_exponent"]
        value = rows[0][4] * math.exp(rows[0][5])
        expect = pi_exact(level_new(2, 12), [0.5, 0.1], [0.2, -0.3]).to_float()
        assert value == pytest.approx(expect, rel=1e-12)

    def test_mehler_method(self, tmp_path):
        status, out = run(tmp_path, "projector", "--d", "2", "--N", "12",
                          "--x", "0.5,0.1", "--method", "mehler")
        assert status == 0
        _, rows = read_table(out)
        value = rows[0][4] * math.exp(rows[0][5])
        expect = pi_exact(level_new(2, 12), [0.5, 0.1]).to_float()
        assert value == pytest.approx(expect, rel=1e-9)


class TestDensityCommand:
    def test_caustic_tube_curve(self, tmp_path):
        status, out = run(tmp_path, "density", "--regime", "caustic-tube",
                          "--d", "2", "--N", "100", "--u1-range", "-3:3:0.1")
        assert status == 0
        header, rows = read_table(out)
        assert len(rows) == 61
        assert "predicted_density_log" in header
        logs = [r[header.index("predicted_density_log")] for r in rows]
        assert all(np.isfinite(logs))

    def test_validation_exit_code(self, tmp_path):
        # an absurdly tight tolerance forces the validation failure path
        status, _ = run(tmp_path, "density", "--regime", "allowed-bulk",
                        "--d", "2", "--N", "100", "--u1-range", "-0.3:-0.3:1",
                        "--with-exact", "--tolerance", "1e-12")
        assert status == 2


class TestScalingSweepCommand:
    def test_slope_report(self, tmp_path, capsys):
        status, out = run(tmp_path, "scaling-sweep", "--d", "2",
                          "--N", "100,200,400", "--point", "allowed")
        assert status == 0
        printed = capsys.readouterr().out
        assert "fitted slope" in printed
        header, rows = read_table(out)
        assert len(rows) == 3

    def test_tolerance_failure_exit(self, tmp_path):
        status, _ = run(tmp_path, "scaling-sweep", "--d", "2",
                        "--N", "100,200", "--point", "allowed",
                        "--tolerance", "1e-6")
        assert status == 2


class TestMonteCarloCommand:
    def test_crossings_table(self, tmp_path):
        status, out = run(tmp_path, "montecarlo", "--statistic",
                          "caustic-crossings", "--d", "2", "--N", "40",
                          "--seeds", "4", "--seed", "7")
        assert status == 0
        header, rows = read_table(out)
        assert header == ["seed", "N", "statistic", "value", "std_error",
                          "resolution"]
        assert rows[-1][0] == "mean"
        assert all(r[3] % 2 == 0 for r in rows[:-1])

    def test_radial_profile_table(self, tmp_path):
        status, out = run(tmp_path, "montecarlo", "--statistic",
                          "radial-profile", "--d", "2", "--N", "40",
                          "--seeds", "4", "--radii", "0.6:1.2:0.2")
        assert status == 0
        _, rows = read_table(out)
        assert len(rows) == 4

    def test_nodal_length_table(self, tmp_path):
        status, out = run(tmp_path, "montecarlo", "--statistic",
                          "nodal-length", "--d", "2", "--N", "40",
                          "--seeds", "3", "--box-size", "0.2")
        assert status == 0
        _, rows = read_table(out)
        assert rows[-1][0] == "mean"
        assert all(r[3] >= 0 for r in rows)


class TestPi0Command:
    def test_grid_table(self, tmp_path):
        status, out = run(tmp_path, "pi0", "--d", "2", "--u1-range", "-1:1:1",
                          "--v1-range", "-1:1:1", "--tangential-sep", "0.5")
        assert status == 0
        _, rows = read_table(out)
        assert len(rows) == 9


class TestTubeMassCommand:
    def test_ratio_reported(self, tmp_path, capsys):
        status, out = run(tmp_path, "tube-mass", "--d", "2", "--N", "100",
                          "--kappa", "1.0")
        assert status == 0
        _, rows = read_table(out)
        assert rows[0][5] == pytest.approx(1.0, abs=0.1)


class TestConfigAndErrors:
    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as err:
            main(["airy", "--bogus-flag", "1"])
        assert err.value.code == 1

    def test_unknown_command_exit_code(self):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 1

    def test_missing_required_flag(self, tmp_path):
        assert main(["airy", "-o", str(tmp_path / "x.csv")]) == 1

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("# airy run\nk = -1\ns = 0:1:0.5\n")
        out = tmp_path / "cfg.csv"
        status = main(["airy", "--config", str(cfg), "-o", str(out)])
        assert status == 0
        _, rows = read_table(out)
        assert len(rows) == 3
        assert rows[0][0] == -1.0

    def test_flags_override_config(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("k=-1\ns=0:1:0.5\n")
        out = tmp_path / "cfg.csv"
        status = main(["airy", "--config", str(cfg), "--k", "0", "-o", str(out)])
        assert status == 0
        _, rows = read_table(out)
        assert rows[0][0] == 0.0

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("bogus=1\n")
        assert main(["airy", "--config", str(cfg)]) == 1

    def test_thread_env_variable(self, tmp_path, monkeypatch):
        monkeypatch.setenv("OSCNODAL_THREADS", "2")
        assert cli._threads() == 2
        status, _ = run(tmp_path, "projector", "--d", "2", "--N", "8",
                        "--x", "0.1,0.2")
        assert status == 0
