# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

import math
from typing import List, Tuple

import numpy as np
import pytest

from sivsim.level_model import LevelScheme, MagneticConfig, SivParameters, build_level_scheme
from sivsim.lindblad_engine import (
    TWO_PI,
    DensityMatrix,
    LambdaConfig,
    build_lambda_liouvillian,
    build_liouvillian,
    equivalent_rate_matrix,
    evolve_dm,
    steady_state_dm,
)
from sivsim.rate_engine import (
    GENERATOR_TOLERANCE,
    Environment,
    Laser,
    PopulationVector,
    build_rate_matrix,
    evolve_populations,
    steady_state_populations,
)

CONFIGURATIONS = 100


def random_scheme(
    rng: np.random.Generator, angle: Tuple[float, float] = (0, math.pi / 2)
) -> LevelScheme:
    params = SivParameters(
        excited_orbital_splitting=rng.uniform(200e9, 300e9),
        g_ground_lower=rng.uniform(1, 3),
        g_ground_upper=rng.uniform(1, 3),
        g_excited_lower=rng.uniform(1, 3),
        g_excited_upper=rng.uniform(1, 3),
    )
    return build_level_scheme(params, MagneticConfig(rng.uniform(100, 10000), rng.uniform(*angle)))


def random_environment(rng: np.random.Generator) -> Environment:
    return Environment(
        temperature=rng.uniform(2, 25),
        spin_t1=10 ** rng.uniform(-6, -2),
        spin_t1_from_angle=bool(rng.random() < 0.5),
    )


def random_lasers(rng: np.random.Generator, scheme: LevelScheme) -> List[Laser]:
    labels = scheme.labels
    return [
        Laser(
            labels[rng.integers(len(labels))],
            detuning=rng.uniform(-2e9, 2e9),
            saturation=rng.uniform(0, 20),
            linewidth=rng.uniform(50e6, 500e6),
        )
        for _ in range(rng.integers(0, 4))
    ]


def lambda_pairs(scheme: LevelScheme) -> List[Tuple[str, str]]:
    return [
        (a.label, b.label)
        for a in scheme.transitions
        for b in scheme.transitions
        if a.upper == b.upper
        and a.lower != b.lower
        and a.spontaneous_rate > 0
        and b.spontaneous_rate > 0
    ]


def random_lambda(
    rng: np.random.Generator, coherence: Tuple[float, float], full_scheme: bool = False
) -> LambdaConfig:
    scheme = random_scheme(rng, (math.radians(40), math.radians(80)))
    pairs = lambda_pairs(scheme)
    leg1, leg2 = pairs[rng.integers(len(pairs))]
    return LambdaConfig(
        scheme=scheme,
        leg1=leg1,
        leg2=leg2,
        rabi1=TWO_PI * rng.uniform(0.5e6, 5e6),
        rabi2=TWO_PI * rng.uniform(0.5e6, 5e6),
        two_photon_detuning=rng.uniform(-20e6, 20e6),
        one_photon_detuning=rng.uniform(-20e6, 20e6),
        ground_coherence_rate=rng.uniform(*coherence),
        full_scheme=full_scheme,
    )


def assert_physical(rho: DensityMatrix):
    values = rho.values
    assert np.max(np.abs(values - values.conj().T)) <= 1e-9
    assert np.trace(values).real == pytest.approx(1.0, abs=1e-9)
    assert np.linalg.eigvalsh(values).min() > -1e-8


class TestRatePhysicality:
    @pytest.mark.parametrize("seed", range(CONFIGURATIONS))
    def test_random_configuration(self, seed: int):
        rng = np.random.default_rng(seed)
        scheme = random_scheme(rng)
        rates = build_rate_matrix(scheme, random_lasers(rng, scheme), random_environment(rng))

        g = rates.generator
        assert np.abs(g.sum(axis=0)).max() <= GENERATOR_TOLERANCE * max(np.abs(g).max(), 1.0)
        assert np.all(g - np.diag(np.diag(g)) >= 0)

        p = steady_state_populations(rates).values
        assert p.sum() == pytest.approx(1.0, abs=1e-9)
        assert np.all(p >= 0)

    @pytest.mark.parametrize("seed", range(10))
    def test_random_trajectory(self, seed: int):
        rng = np.random.default_rng(1000 + seed)
        scheme = random_scheme(rng)
        rates = build_rate_matrix(scheme, random_lasers(rng, scheme), random_environment(rng))
        times = [0.0, 1e-9, 1e-7, 1e-5, 1e-3]
        for p in evolve_populations(rates, PopulationVector.uniform(scheme.size), times):
            assert p.values.sum() == pytest.approx(1.0, abs=1e-9)
            assert np.all(p.values >= 0)


class TestLindbladPhysicality:
    @pytest.mark.parametrize("seed", range(CONFIGURATIONS))
    def test_trace_preserved(self, seed: int):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 6))
        h = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        channels = [
            rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
            for _ in range(rng.integers(0, 4))
        ]
        liouvillian = build_liouvillian((h + h.conj().T) * 1e8, [c * 1e4 for c in channels])

        a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
        rho = (a + a.conj().T) / 2
        derivative = (liouvillian.matrix @ rho.reshape(-1)).reshape(n, n)
        assert abs(np.trace(derivative)) <= 1e-10 * np.abs(liouvillian.matrix).max()
        assert np.allclose(
            derivative, derivative.conj().T, atol=1e-10 * np.abs(liouvillian.matrix).max()
        )

    @pytest.mark.parametrize("full_scheme", [False, True])
    @pytest.mark.parametrize("seed", range(10))
    def test_random_trajectory(self, seed: int, full_scheme: bool):
        rng = np.random.default_rng(2000 + seed)
        cfg = random_lambda(rng, (0.0, 1e8), full_scheme)
        liouvillian = build_lambda_liouvillian(cfg)
        state = np.zeros(liouvillian.dim)
        state[cfg.transitions[0].lower if full_scheme else 0] = 1.0
        for rho in evolve_dm(liouvillian, DensityMatrix.pure(state), [0.0, 1e-9, 1e-7, 1e-6]):
            assert_physical(rho)


class TestEnginesAgree:
    @pytest.mark.parametrize("seed", range(20))
    def test_dephased_lambda(self, seed: int):
        rng = np.random.default_rng(3000 + seed)
        cfg = random_lambda(rng, (1e9, 1e10))

        coherent = steady_state_dm(build_lambda_liouvillian(cfg))
        assert_physical(coherent)
        rates = steady_state_populations(equivalent_rate_matrix(cfg)).values

        assert coherent.populations[:2] == pytest.approx(rates[:2], abs=1e-3)
        assert coherent.population(2) == pytest.approx(rates[2], rel=0.03)
