# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

from pathlib import Path
from tempfile import TemporaryDirectory

import pytest
from click.testing import CliRunner

from sivsim.artifacts import DATA_FILE, MANIFEST_FILE, PLOT_FILE
from sivsim.cli import EXIT_CONFIG_ERROR, EXIT_NUMERICAL_ERROR, main
from sivsim.run_config import list_presets


class TestCli:
    @pytest.fixture
    def runner(self) -> CliRunner:
        return CliRunner()

    @pytest.fixture
    def tmpdir(self):
        with TemporaryDirectory() as tmpdir:
            yield Path(tmpdir)

    def test_presets(self, runner: CliRunner):
        result = runner.invoke(main, ["presets"])
        assert result.exit_code == 0
        assert result.output.split() == list_presets()

    def test_show_preset(self, runner: CliRunner):
        result = runner.invoke(main, ["presets", "--show", "fig3a-cpt"])
        assert result.exit_code == 0
        assert "scenario = cpt" in result.output.splitlines()
        assert "cpt.leg1 = D3" in result.output.splitlines()

    def test_unknown_preset(self, runner: CliRunner):
        result = runner.invoke(main, ["presets", "--show", "fig0"])
        assert result.exit_code == EXIT_CONFIG_ERROR
        assert "Unknown preset" in result.output

    def test_malformed_config(self, runner: CliRunner, tmpdir: Path):
        path = tmpdir / "run.cfg"
        path.write_text("scheme.excited_orbital_splitting = 259 GHz\nfield.magnitude = strong\n")
        result = runner.invoke(main, ["run", "--config", str(path), "--out", str(tmpdir / "out")])
        assert result.exit_code == EXIT_CONFIG_ERROR
        assert "line 2" in result.output
        assert "field.magnitude" in result.output
        assert not (tmpdir / "out").exists()

    def test_config_and_preset(self, runner: CliRunner, tmpdir: Path):
        path = tmpdir / "run.cfg"
        path.write_text("scheme.excited_orbital_splitting = 259 GHz\n")
        result = runner.invoke(main, ["run", "--config", str(path), "--preset", "fig1d"])
        assert result.exit_code == EXIT_CONFIG_ERROR
        result = runner.invoke(main, ["run"])
        assert result.exit_code == EXIT_CONFIG_ERROR

    def test_bad_override(self, runner: CliRunner):
        result = runner.invoke(main, ["run", "--preset", "fig1d", "--set", "spectrum.nope=1"])
        assert result.exit_code == EXIT_CONFIG_ERROR
        assert "spectrum.nope" in result.output

    def test_bad_jobs(self, runner: CliRunner, tmpdir: Path):
        result = runner.invoke(
            main, ["run", "--preset", "fig1d", "--jobs", "0", "--out", str(tmpdir)]
        )
        assert result.exit_code == EXIT_CONFIG_ERROR

    def test_numerical_failure(self, runner: CliRunner, tmpdir: Path):
        # without lasers the ground states never exchange population
        result = runner.invoke(
            main,
            [
                "run",
                "--preset",
                "fig3a-cpt",
                "--set",
                "cpt.pump_rabi=0",
                "--set",
                "cpt.probe_rabis=0",
                "--set",
                "cpt.points=11",
                "--set",
                "cpt.normalize_background=false",
                "--out",
                str(tmpdir),
            ],
        )
        assert result.exit_code == EXIT_NUMERICAL_ERROR
        assert "Numerical failure" in result.output

    def test_run_and_rerun(self, runner: CliRunner, tmpdir: Path):
        first, second = tmpdir / "first", tmpdir / "second"
        result = runner.invoke(
            main,
            [
                "run",
                "-p",
                "fig3d-hyperfine",
                "--set",
                "cpt.points=101",
                "--out",
                str(first),
                "-j",
                "2",
            ],
        )
        assert result.exit_code == 0, result.output
        assert (first / PLOT_FILE).is_file()

        result = runner.invoke(
            main, ["run", "-c", str(first / MANIFEST_FILE), "--out", str(second), "--no-plot"]
        )
        assert result.exit_code == 0, result.output
        assert not (second / PLOT_FILE).exists()
        assert (second / DATA_FILE).read_bytes() == (first / DATA_FILE).read_bytes()

    def test_seed(self, runner: CliRunner, tmpdir: Path):
        result = runner.invoke(
            main, ["run", "-p", "fig2c-orbitalT1", "--seed", "5", "--out", str(tmpdir), "--no-plot"]
        )
        assert result.exit_code == 0, result.output
        manifest = (tmpdir / MANIFEST_FILE).read_text().splitlines()
        assert "seed = 5" in manifest
        assert "detector.rng_seed = 5" in manifest

    def test_empty_sweep(self, runner: CliRunner, tmpdir: Path):
        result = runner.invoke(
            main,
            [
                "sweep",
                "-p",
                "fig2c-orbitalT1",
                "--axis",
                "environment.temperature",
                "--values",
                "",
                "--out",
                str(tmpdir),
            ],
        )
        assert result.exit_code == 0, result.output
        assert (tmpdir / DATA_FILE).read_text() == "value,errors\n"
        assert "scenario = sweep" in (tmpdir / MANIFEST_FILE).read_text().splitlines()

    def test_sweep_unknown_axis(self, runner: CliRunner, tmpdir: Path):
        result = runner.invoke(
            main,
            [
                "sweep",
                "-p",
                "fig2c-orbitalT1",
                "--axis",
                "environment.pressure",
                "--out",
                str(tmpdir),
            ],
        )
        assert result.exit_code == EXIT_CONFIG_ERROR

    def test_sweep_error_row(self, runner: CliRunner, tmpdir: Path):
        result = runner.invoke(
            main,
            [
                "sweep",
                "-p",
                "fig2c-orbitalT1",
                "--scenario",
                "orbital-t1",
                "--axis",
                "field.magnitude",
                "--values",
                "1 kG",
                "--out",
                str(tmpdir),
            ],
        )
        assert result.exit_code == 0, result.output
        header, row = (tmpdir / DATA_FILE).read_text().splitlines()
        assert header == "value,errors"
        assert row.startswith("1 kG,")
        assert "zero field" in row
