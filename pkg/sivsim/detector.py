# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

from enum import Enum

import marshmallow_dataclass
import numpy as np

from sivsim.common_serdes import (
    Frequency,
    MarshmallowDataclassExtensions,
    Ratio,
    Time,
    ext_field,
)
from sivsim.level_model import LevelScheme
from sivsim.util import InvariantViolation


class DetectorConfigurationError(InvariantViolation):
    """Raised when the detector parameters are invalid"""


class Collection(Enum):
    #: every emitted photon reaches the detector
    TOTAL = "total"
    #: only the zero-phonon line is collected
    ZPL = "zpl"
    #: only the phonon sideband is collected
    SIDEBAND = "sideband"


@marshmallow_dataclass.dataclass(frozen=True)
class DetectorModel(MarshmallowDataclassExtensions):
    """
    Photon detection: overall efficiency, time-bin width, dark count rate
    and optional Poisson shot noise with a fixed seed.
    """

    efficiency: Ratio = ext_field(1.0)
    bin_width: Time = ext_field(1e-9)
    background: Frequency = ext_field(0.0)
    shot_noise: bool = ext_field(False)
    rng_seed: int = ext_field(0)
    collection: Collection = ext_field(Collection.TOTAL, by_value=True)

    def __post_init__(self):
        if not 0 < self.efficiency <= 1:
            raise DetectorConfigurationError(
                "efficiency", f"must lie in (0, 1], got {self.efficiency}"
            )
        if not self.bin_width > 0 or not np.isfinite(self.bin_width):
            raise DetectorConfigurationError(
                "bin_width", f"must be positive and finite, got {self.bin_width}"
            )
        if not self.background >= 0 or not np.isfinite(self.background):
            raise DetectorConfigurationError(
                "background", f"must be nonnegative and finite, got {self.background}"
            )

    def collection_factor(self, scheme: LevelScheme) -> float:
        if self.collection is Collection.ZPL:
            return scheme.params.zpl_branching
        if self.collection is Collection.SIDEBAND:
            return 1 - scheme.params.zpl_branching
        return 1.0

    def emission_weights(self, scheme: LevelScheme) -> np.ndarray:
        """
        Detected photons per second per unit population of each level.

        :param scheme: level scheme
        :return: vector with one entry per level, zero for ground levels
        """

        weights = np.zeros(scheme.size)
        for t in scheme.transitions:
            weights[t.upper] += t.spontaneous_rate
        return weights * self.efficiency * self.collection_factor(scheme)
