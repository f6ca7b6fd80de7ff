# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

from pathlib import Path
from tempfile import TemporaryDirectory

import numpy as np
import pytest

from sivsim.analysis import FitResult, find_features
from sivsim.artifacts import DATA_FILE, FIT_FILE, MANIFEST_FILE, PLOT_FILE, write_result
from sivsim.run_config import RunConfigError, Scenario, load_preset, load_run_config
from sivsim.scenarios import ScenarioResult, level_scheme, run_scenario
from sivsim.spectrum import Spectrum
from sivsim.util import sha256_text


class TestSpectrumScenario:
    @pytest.fixture(scope="class")
    def fig1d(self) -> ScenarioResult:
        return run_scenario(load_preset("fig1d"), jobs=2)

    def test_fig1d(self, fig1d: ScenarioResult):
        assert fig1d.summary["no_pump_features"] == 2
        assert fig1d.data.header == ["detuning_hz", "counts_hz"]
        assert len(fig1d.data.rows) == 400
        assert "spectrum_pump_D2.csv" in fig1d.sidecars

    @pytest.mark.parametrize("pump", ["D2", "D3"])
    def test_fig1d_pumped(self, fig1d: ScenarioResult, pump: str):
        cfg = load_preset("fig1d")
        assert fig1d.summary[f"pump_{pump}_features"] == 4

        table = fig1d.sidecars[f"spectrum_pump_{pump}.csv"]
        spectrum = Spectrum.from_points(table.column("detuning_hz"), table.column("counts_hz"))
        positions = [f.position for f in find_features(spectrum, cfg.spectrum.feature_threshold)]

        scheme = level_scheme(cfg)
        d2 = scheme.line_frequency("D2")
        expected = [scheme.line_frequency(label) - d2 for label in ("D1", "D2", "D3", "D4")]
        assert expected == sorted(expected, reverse=True)
        assert sorted(positions, reverse=True) == pytest.approx(expected, abs=0.2e9)

    def test_bad_scan(self):
        with pytest.raises(RunConfigError):
            run_scenario(load_preset("fig1d", ["spectrum.scan_stop=-20 GHz"]))


class TestRelaxationScenarios:
    def test_misaligned_spin_t1(self):
        result = run_scenario(load_preset("figS4-misaligned"), jobs=2)
        assert result.summary["t1_s"] == pytest.approx(3.4e-6, rel=0.05)
        assert 0.8 < result.summary["fidelity"] <= 1.0
        assert "trace.csv" in result.sidecars
        assert result.data.header == ["tau_s", "h", "a", "edge", "edge_reference"]

    def test_aligned_spin_t1(self):
        result = run_scenario(load_preset("fig2b-spinT1"), jobs=2)
        assert result.summary["t1_s"] == pytest.approx(2.4e-3, rel=0.05)

    def test_orbital_t1(self):
        result = run_scenario(load_preset("fig2c-orbitalT1"), jobs=2)
        assert result.summary["t1_s"] == pytest.approx(38e-9, rel=0.05)
        assert result.summary["rate_hz"] == pytest.approx(1 / result.summary["t1_s"])

    def test_missing_sequence(self):
        cfg = load_preset("figS4-misaligned", ["spin_t1.sequence=missing.seq"])
        with pytest.raises(RunConfigError):
            run_scenario(cfg)


class TestDarkResonanceScenarios:
    def test_zero_power_linewidth(self):
        result = run_scenario(load_preset("fig3c-narrow"), jobs=2)
        assert result.summary["fwhm0_hz"] == pytest.approx(4.496e6, rel=0.05)
        assert result.summary["t2_star_s"] == pytest.approx(35.4e-9, rel=0.05)
        assert len(result.sidecars["dip_fit.csv"].rows) == 4
        assert "zero_power.t2_star" in result.fit_text

    def test_hyperfine_splitting(self):
        result = run_scenario(load_preset("fig3d-hyperfine", ["cpt.points=401"]), jobs=2)
        assert result.summary["dips"] == 2
        assert result.summary["separation_hz"] == pytest.approx(69e6, abs=1e6)

    def test_orbital_lambda(self):
        result = run_scenario(load_preset("figS5-orbital-cpt", ["orbital_cpt.points=81"]), jobs=2)
        assert 0 < result.summary["contrast"] < 1
        assert "reference.csv" in result.sidecars


class TestSweep:
    def test_temperature(self):
        temperatures = ["4.5 K", "8 K", "12 K", "16 K", "20 K", "22 K"]
        cfg = load_preset(
            "fig2c-orbitalT1",
            ["scenario=sweep", f"sweep.values={', '.join(temperatures)}", "sweep.fit_key=rate_hz"],
        )
        result = run_scenario(cfg, jobs=3)
        assert result.data.column("value") == temperatures
        assert result.data.column("errors") == [""] * len(temperatures)
        rates = result.data.column("rate_hz")
        assert rates == sorted(rates)

        assert result.summary["slope"] > 0
        assert result.summary["r_squared"] >= 0.99
        fit = FitResult.from_text(result.fit_text)
        assert fit.model == "linear"
        assert fit["r_squared"] == pytest.approx(result.summary["r_squared"])
        assert [s.label for s in result.plot.series] == ["rate_hz", "linear fit"]

    def test_unknown_fit_key(self):
        cfg = load_preset(
            "fig2c-orbitalT1",
            ["scenario=sweep", "sweep.values=4.5 K, 12 K", "sweep.fit_key=fwhm_hz"],
        )
        with pytest.raises(RunConfigError):
            run_scenario(cfg)

    def test_error_row(self):
        cfg = load_preset(
            "fig2c-orbitalT1",
            ["scenario=sweep", "sweep.axis=field.magnitude", "sweep.values=0, 4.5 kG"],
        )
        result = run_scenario(cfg)
        assert result.data.header[0] == "value"
        assert result.data.header[-1] == "errors"
        ok, failed = result.data.rows
        assert ok[-1] == ""
        assert "zero field" in failed[-1]
        assert all(cell == "" for cell in failed[1:-1])

    def test_empty(self):
        cfg = load_preset("fig2c-orbitalT1", ["scenario=sweep", "sweep.values="])
        result = run_scenario(cfg)
        assert result.data.header == ["value", "errors"]
        assert result.data.rows == []
        assert result.plot is None

    def test_nested(self):
        cfg = load_preset("fig2c-orbitalT1", ["scenario=sweep", "sweep.scenario=sweep"])
        with pytest.raises(RunConfigError):
            run_scenario(cfg)


class TestArtifacts:
    def test_manifest_reproduces_data(self):
        cfg = load_preset("fig3d-hyperfine", ["cpt.points=101"])
        with TemporaryDirectory() as tmpdir:
            first, second = Path(tmpdir) / "first", Path(tmpdir) / "second"
            written = write_result(run_scenario(cfg), cfg, first)
            assert {p.name for p in written} >= {DATA_FILE, FIT_FILE, PLOT_FILE, MANIFEST_FILE}

            manifest = (first / MANIFEST_FILE).read_text()
            digest = sha256_text((first / DATA_FILE).read_bytes())
            assert f"# sha256 {DATA_FILE} {digest}" in manifest.splitlines()

            again = load_run_config(first / MANIFEST_FILE)
            assert again == cfg
            write_result(run_scenario(again), again, second)
            assert (second / DATA_FILE).read_bytes() == (first / DATA_FILE).read_bytes()
            assert (second / PLOT_FILE).read_bytes() == (first / PLOT_FILE).read_bytes()

    def test_no_plot(self):
        cfg = load_preset("fig2c-orbitalT1", ["scenario=sweep", "sweep.values="])
        with TemporaryDirectory() as tmpdir:
            written = write_result(run_scenario(cfg), cfg, tmpdir, plot=False)
            assert [p.name for p in written] == [DATA_FILE, MANIFEST_FILE]
            assert (Path(tmpdir) / DATA_FILE).read_text() == "value,errors\n"

    def test_float_cells_round_trip(self):
        cfg = load_preset("figS5-orbital-cpt", ["orbital_cpt.points=21"])
        result = run_scenario(cfg)
        with TemporaryDirectory() as tmpdir:
            write_result(result, cfg, tmpdir, plot=False)
            data = np.loadtxt(Path(tmpdir) / DATA_FILE, delimiter=",", skiprows=1)
        assert np.array_equal(data[:, 1], result.data.column("counts_hz"))
        assert result.scenario is Scenario.ORBITAL_CPT
