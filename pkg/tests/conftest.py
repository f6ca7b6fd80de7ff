# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

import math

import pytest

from sivsim.detector import DetectorModel
from sivsim.level_model import (
    LevelScheme,
    MagneticConfig,
    SivParameters,
    build_level_scheme,
)
from sivsim.rate_engine import Environment


@pytest.fixture
def siv_params() -> SivParameters:
    return SivParameters(excited_orbital_splitting=259e9)


@pytest.fixture
def aligned_scheme(siv_params: SivParameters) -> LevelScheme:
    return build_level_scheme(siv_params, MagneticConfig(4500.0, math.radians(1)))


@pytest.fixture
def misaligned_scheme(siv_params: SivParameters) -> LevelScheme:
    return build_level_scheme(siv_params, MagneticConfig(4500.0, math.radians(70)))


@pytest.fixture
def zero_field_scheme(siv_params: SivParameters) -> LevelScheme:
    return build_level_scheme(siv_params, MagneticConfig())


@pytest.fixture
def environment() -> Environment:
    return Environment()


@pytest.fixture
def detector() -> DetectorModel:
    return DetectorModel()
