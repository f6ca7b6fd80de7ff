# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

import math

import numpy as np
import pytest
from scipy import constants

from sivsim.analysis import FeatureKind, find_features
from sivsim.detector import Collection, DetectorModel
from sivsim.level_model import LevelScheme, Manifold
from sivsim.rate_engine import (
    DEFAULT_ORBITAL_T1,
    GENERATOR_TOLERANCE,
    Environment,
    Laser,
    NegativePopulationError,
    PopulationVector,
    RateConfigurationError,
    RateMatrix,
    base_generator,
    bose_occupation,
    build_rate_matrix,
    clamp_populations,
    evolve_populations,
    excitation_spectrum,
    fluorescence_rate,
    orbital_coupling_for_t1,
    parallel_map,
    phonon_rates,
    pump_probe_spectrum,
    steady_state_populations,
)


class TestPhonons:
    def test_detailed_balance(self):
        env = Environment(temperature=4.5)
        down, up = phonon_rates(47e9, env)
        ratio = math.exp(constants.h * 47e9 / (constants.k * 4.5))
        assert down / up == pytest.approx(ratio)
        assert up / down == pytest.approx(0.606, abs=1e-3)

    def test_default_orbital_t1(self):
        down, up = phonon_rates(47e9, Environment())
        assert 1 / (down + up) == pytest.approx(DEFAULT_ORBITAL_T1)

    def test_cold_limit(self):
        assert bose_occupation(47e9, 1e-3) == 0.0
        down, up = phonon_rates(47e9, Environment(temperature=1e-3))
        assert up == 0.0
        assert down == pytest.approx(Environment().orbital_coupling)

    def test_rates_grow_with_temperature(self):
        temperatures = (4.5, 8, 12, 16, 20, 22)
        rates = [sum(phonon_rates(47e9, Environment(temperature=t))) for t in temperatures]
        assert rates == sorted(rates)

    def test_coupling_for_t1(self):
        coupling = orbital_coupling_for_t1(20e-9, 12.0, 47e9)
        down, up = phonon_rates(47e9, Environment(temperature=12.0, orbital_coupling=coupling))
        assert 1 / (down + up) == pytest.approx(20e-9)


class TestEnvironment:
    @pytest.mark.parametrize(
        "kwargs, key",
        [
            ({"temperature": 0.0}, "temperature"),
            ({"temperature": math.inf}, "temperature"),
            ({"orbital_coupling": -1.0}, "orbital_coupling"),
            ({"excited_orbital_coupling": math.nan}, "excited_orbital_coupling"),
            ({"spin_t1": 0.0}, "spin_t1"),
        ],
    )
    def test_invalid(self, kwargs, key):
        with pytest.raises(RateConfigurationError) as e:
            Environment(**kwargs)
        assert e.value.key == key

    @pytest.mark.parametrize(
        "kwargs, key",
        [
            ({"saturation": -1.0}, "saturation"),
            ({"linewidth": 0.0}, "linewidth"),
            ({"detuning": math.inf}, "detuning"),
        ],
    )
    def test_invalid_laser(self, kwargs, key):
        with pytest.raises(RateConfigurationError) as e:
            Laser("D2", **kwargs)
        assert e.value.key == key

    def test_unknown_laser_target(self, aligned_scheme: LevelScheme, environment: Environment):
        with pytest.raises(RateConfigurationError) as e:
            build_rate_matrix(aligned_scheme, [Laser("E1")], environment)
        assert e.value.key == "target"


class TestRateMatrix:
    def test_generator_properties(self, misaligned_scheme: LevelScheme, environment: Environment):
        rates = build_rate_matrix(
            misaligned_scheme, [Laser("D2"), Laser("C3", saturation=3.0)], environment
        )
        g = rates.generator
        assert g.shape == (8, 8)
        assert np.allclose(g.sum(axis=0), 0.0, atol=GENERATOR_TOLERANCE * np.abs(g).max())
        off = g - np.diag(np.diag(g))
        assert np.all(off >= 0)

    def test_rates(self, aligned_scheme: LevelScheme, environment: Environment):
        rates = base_generator(aligned_scheme, environment)
        d2 = aligned_scheme.transition("D2")
        assert rates.rate(d2.upper, d2.lower) == pytest.approx(d2.spontaneous_rate)
        assert rates.rate(d2.lower, d2.upper) == 0.0

        flip = 1 / (2 * environment.spin_t1)
        down, up = (lvl.index for lvl in aligned_scheme.levels_in(Manifold.GROUND_LOWER))
        assert rates.rate(down, up) == pytest.approx(flip)
        assert rates.rate(up, down) == pytest.approx(flip)

    def test_spin_t1_from_angle(self, misaligned_scheme: LevelScheme):
        plain = base_generator(misaligned_scheme, Environment())
        angled = base_generator(misaligned_scheme, Environment(spin_t1_from_angle=True))
        down, up = (lvl.index for lvl in misaligned_scheme.levels_in(Manifold.GROUND_LOWER))
        assert angled.rate(down, up) > plain.rate(down, up)

    def test_invalid_generators(self):
        with pytest.raises(RateConfigurationError):
            RateMatrix(np.array([[-1.0, -1.0], [1.0, 1.0]]))
        with pytest.raises(RateConfigurationError):
            RateMatrix(np.array([[-1.0, 0.0], [0.5, 0.0]]))
        with pytest.raises(ValueError):
            RateMatrix(np.zeros((2, 3)))

    def test_from_rates(self):
        rates = RateMatrix.from_rates(np.array([[5.0, 2.0], [3.0, 7.0]]))
        assert rates.generator.tolist() == [[-3.0, 2.0], [3.0, -2.0]]

    @pytest.mark.parametrize("seed", range(5))
    def test_column_sum_tolerance(self, seed: int):
        rng = np.random.default_rng(seed)
        g = RateMatrix.from_rates(10 ** rng.uniform(0, 9, (8, 8))).generator
        scale = np.abs(g).max()
        assert np.abs(g.sum(axis=0)).max() <= GENERATOR_TOLERANCE * scale

        skewed = g.copy()
        skewed[0, 0] -= 1e-10 * scale
        with pytest.raises(RateConfigurationError) as e:
            RateMatrix(skewed)
        assert e.value.key == "generator"


class TestPopulations:
    def test_clamp(self):
        clamped = clamp_populations(np.array([0.5, 0.5 + 1e-10, -1e-10]))
        assert clamped == pytest.approx([0.5, 0.5, 0.0])
        with pytest.raises(NegativePopulationError):
            clamp_populations(np.array([0.5, 0.5 + 1e-3, -1e-3]))

    def test_vector_checks(self):
        with pytest.raises(NegativePopulationError):
            PopulationVector(np.array([0.7, 0.7]))
        with pytest.raises(NegativePopulationError):
            PopulationVector(np.array([1.1, -0.1]))
        assert PopulationVector.uniform(4)[2] == 0.25

    def test_thermal_state(self, aligned_scheme: LevelScheme, environment: Environment):
        p = steady_state_populations(base_generator(aligned_scheme, environment))
        upper = p.manifold(aligned_scheme, Manifold.GROUND_UPPER)
        lower = p.manifold(aligned_scheme, Manifold.GROUND_LOWER)
        assert upper / lower == pytest.approx(0.606, abs=1e-3)
        assert p.spin(aligned_scheme, -1) == pytest.approx(0.5)
        assert p.spin(aligned_scheme, +1) == pytest.approx(0.5)
        assert p.spin(aligned_scheme, +1, excited=True) == pytest.approx(0.0, abs=1e-12)

    def test_optical_pumping(self, misaligned_scheme: LevelScheme, environment: Environment):
        rates = build_rate_matrix(misaligned_scheme, [Laser("D1")], environment)
        p = steady_state_populations(rates)
        assert p.spin(misaligned_scheme, -1) < 0.05
        assert sum(p.values) == pytest.approx(1.0)

    def test_stationary(self, misaligned_scheme: LevelScheme, environment: Environment):
        rates = build_rate_matrix(misaligned_scheme, [Laser("D2")], environment)
        p = steady_state_populations(rates)
        assert np.abs(rates.generator @ p.values).max() < 1e-3

    def test_integrators_agree(self, misaligned_scheme: LevelScheme, environment: Environment):
        rates = build_rate_matrix(misaligned_scheme, [Laser("D2", saturation=2.0)], environment)
        initial = PopulationVector.uniform(misaligned_scheme.size)
        times = [0.0, 1e-9, 1e-8, 1e-7, 1e-6]
        radau = evolve_populations(rates, initial, times, method="radau")
        expm = evolve_populations(rates, initial, times, method="expm")
        for a, b in zip(radau, expm):
            assert np.allclose(a.values, b.values, atol=1e-6)
        assert radau[0].values == pytest.approx(initial.values)

    def test_long_time_limit(self, misaligned_scheme: LevelScheme):
        env = Environment(spin_t1=1e-6)
        rates = build_rate_matrix(misaligned_scheme, [Laser("D2")], env)
        initial = PopulationVector.uniform(misaligned_scheme.size)
        (late,) = evolve_populations(rates, initial, [1e-4])
        assert np.allclose(late.values, steady_state_populations(rates).values, atol=1e-6)

    def test_evolve_rejects(self, aligned_scheme: LevelScheme, environment: Environment):
        rates = base_generator(aligned_scheme, environment)
        initial = PopulationVector.uniform(aligned_scheme.size)
        with pytest.raises(ValueError):
            evolve_populations(rates, initial, [])
        with pytest.raises(ValueError):
            evolve_populations(rates, initial, [1e-9, 0.0])
        with pytest.raises(ValueError):
            evolve_populations(rates, initial, [1e-9], method="euler")
        with pytest.raises(ValueError):
            evolve_populations(rates, PopulationVector.uniform(3), [1e-9])


class TestFluorescence:
    def test_collection(self, aligned_scheme: LevelScheme, environment: Environment):
        rates = build_rate_matrix(aligned_scheme, [Laser("D3")], environment)
        p = steady_state_populations(rates)
        total = fluorescence_rate(p, aligned_scheme, DetectorModel())
        sideband = fluorescence_rate(
            p, aligned_scheme, DetectorModel(collection=Collection.SIDEBAND)
        )
        half = fluorescence_rate(p, aligned_scheme, DetectorModel(efficiency=0.5))
        assert total > 0
        assert sideband == pytest.approx(0.3 * total)
        assert half == pytest.approx(0.5 * total)

    def test_parallel_map_keeps_order(self):
        items = list(range(20))
        assert parallel_map(lambda x: x * x, items, jobs=4) == [x * x for x in items]


class TestSpectra:
    @pytest.fixture
    def grid(self) -> np.ndarray:
        return np.linspace(-15e9, 15e9, 400)

    def test_bad_grid(self, aligned_scheme: LevelScheme, environment: Environment, detector):
        with pytest.raises(ValueError):
            excitation_spectrum(
                aligned_scheme, Laser("D2"), [1.0, 0.0], None, environment, detector
            )

    def test_dark_scan_laser(
        self, aligned_scheme: LevelScheme, environment: Environment, detector, grid
    ):
        with pytest.raises(RateConfigurationError) as e:
            excitation_spectrum(
                aligned_scheme, Laser("D2", saturation=0.0), grid, None, environment, detector
            )
        assert e.value.key == "saturation"

    def test_spectrum_without_pump(
        self, aligned_scheme: LevelScheme, environment: Environment, detector, grid
    ):
        spectrum = excitation_spectrum(
            aligned_scheme, Laser("D2"), grid, None, environment, detector, jobs=2
        )
        features = find_features(spectrum)
        assert len(features) == 2
        assert all(f.kind is FeatureKind.PEAK for f in features)

        d2 = aligned_scheme.line_frequency("D2")
        d3 = aligned_scheme.line_frequency("D3") - d2
        low, high = features
        assert low.position == pytest.approx(d3, abs=0.2e9)
        assert high.position == pytest.approx(0.0, abs=0.2e9)

    def test_fluorescence_bounded_in_saturation(
        self, aligned_scheme: LevelScheme, environment: Environment, detector
    ):
        grid = [-1e6, 0.0, 1e6]
        peaks = [
            excitation_spectrum(
                aligned_scheme, Laser("D2", saturation=s), grid, None, environment, detector
            ).counts[1]
            for s in (0.1, 1.0, 10.0, 100.0)
        ]
        assert peaks == sorted(peaks)
        assert peaks[-1] < 1 / 1.72e-9

    def test_spectrum_with_pump(
        self, aligned_scheme: LevelScheme, environment: Environment, detector, grid
    ):
        spectrum = pump_probe_spectrum(
            aligned_scheme, Laser("D2"), grid, "D2", environment, detector, pump_saturation=0.1
        )
        features = find_features(spectrum)
        d2 = aligned_scheme.line_frequency("D2")

        def near(label: str) -> FeatureKind:
            position = aligned_scheme.line_frequency(label) - d2
            (match,) = [f for f in features if abs(f.position - position) < 0.2e9]
            return match.kind

        # the spin-flipping lines show up once the pump polarizes the spin
        assert near("D1") is FeatureKind.PEAK
        assert near("D2") is FeatureKind.PEAK
        assert near("D3") is FeatureKind.PEAK
        assert near("D4") is FeatureKind.DIP
