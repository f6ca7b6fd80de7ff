# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

"""Electronic (and optionally nuclear) level structure of the negatively charged
silicon-vacancy center and the optical transitions between its manifolds."""

import logging
import math
from dataclasses import dataclass, fields, replace
from enum import Enum
from functools import cached_property
from typing import Dict, List, Optional, Tuple

import marshmallow_dataclass
from scipy import constants

from sivsim.common_serdes import (
    Angle,
    FieldStrength,
    Frequency,
    MarshmallowDataclassExtensions,
    Ratio,
    Time,
    ext_field,
)
from sivsim.util import InvariantViolation, sha256_text

logger = logging.getLogger(__name__)

BOHR_MAGNETON_HZ_PER_GAUSS = constants.physical_constants["Bohr magneton in Hz/T"][0] * 1e-4
ZPL_FREQUENCY = constants.c / 737e-9

_WEIGHT_TOLERANCE = 1e-12


class LevelSchemeError(InvariantViolation):
    """Raised when the level scheme parameters are invalid"""


class TransitionNotFoundError(KeyError):
    """Raised when a transition label does not exist in the level scheme"""


class Manifold(Enum):
    GROUND_LOWER = "g1"
    GROUND_UPPER = "g2"
    EXCITED_LOWER = "e1"
    EXCITED_UPPER = "e2"

    @property
    def is_excited(self) -> bool:
        return self in (Manifold.EXCITED_LOWER, Manifold.EXCITED_UPPER)

    @property
    def is_upper_branch(self) -> bool:
        return self in (Manifold.GROUND_UPPER, Manifold.EXCITED_UPPER)


# line letter of every (excited, ground) manifold pair
LINES: Dict[Tuple[Manifold, Manifold], str] = {
    (Manifold.EXCITED_UPPER, Manifold.GROUND_LOWER): "A",
    (Manifold.EXCITED_UPPER, Manifold.GROUND_UPPER): "B",
    (Manifold.EXCITED_LOWER, Manifold.GROUND_LOWER): "C",
    (Manifold.EXCITED_LOWER, Manifold.GROUND_UPPER): "D",
}

# tie order of sublines with equal frequency: (excited spin, ground spin)
_SUBLINE_ORDER = [(+1, -1), (+1, +1), (-1, -1), (-1, +1)]


def _check_finite(obj: object, error: type):
    for f in fields(obj):
        value = getattr(obj, f.name)
        if isinstance(value, float) and not math.isfinite(value):
            raise error(f.name, f"must be finite, got {value}")


@marshmallow_dataclass.dataclass(frozen=True)
class SivParameters(MarshmallowDataclassExtensions):
    """
    Material parameters of the center. All frequencies in Hz, times in seconds.

    `excited_orbital_splitting` has no default on purpose: it differs between
    sources and must be supplied explicitly (the bundled presets use 259 GHz).
    """

    excited_orbital_splitting: Frequency
    ground_orbital_splitting: Frequency = ext_field(47e9)
    radiative_lifetime: Time = ext_field(1.72e-9)
    zpl_branching: Ratio = ext_field(0.7)
    lower_branch_fraction: Ratio = ext_field(0.5)
    g_ground_lower: float = ext_field(2.0)
    g_ground_upper: float = ext_field(1.6)
    g_excited_lower: float = ext_field(2.0)
    g_excited_upper: float = ext_field(1.6)
    mixing_scale: FieldStrength = ext_field(4120.0)
    zpl_frequency: Frequency = ext_field(ZPL_FREQUENCY)

    def __post_init__(self):
        _check_finite(self, LevelSchemeError)
        for name in (
            "excited_orbital_splitting",
            "ground_orbital_splitting",
            "radiative_lifetime",
            "mixing_scale",
            "zpl_frequency",
        ):
            if getattr(self, name) <= 0:
                raise LevelSchemeError(name, f"must be positive, got {getattr(self, name)}")
        for name in ("g_ground_lower", "g_ground_upper", "g_excited_lower", "g_excited_upper"):
            if getattr(self, name) <= 0:
                raise LevelSchemeError(name, f"must be positive, got {getattr(self, name)}")
        for name in ("zpl_branching", "lower_branch_fraction"):
            if not 0 <= getattr(self, name) <= 1:
                raise LevelSchemeError(name, f"must lie in [0, 1], got {getattr(self, name)}")
        if self.zpl_branching == 0:
            raise LevelSchemeError("zpl_branching", "must be nonzero")

    @property
    def total_decay_rate(self) -> float:
        return 1 / self.radiative_lifetime

    def branch_share(self, ground: Manifold) -> float:
        """Share of spontaneous emission of an excited level that ends in the given ground branch"""
        if ground is Manifold.GROUND_LOWER:
            return self.lower_branch_fraction
        return 1 - self.lower_branch_fraction

    def g_factor(self, manifold: Manifold) -> float:
        return {
            Manifold.GROUND_LOWER: self.g_ground_lower,
            Manifold.GROUND_UPPER: self.g_ground_upper,
            Manifold.EXCITED_LOWER: self.g_excited_lower,
            Manifold.EXCITED_UPPER: self.g_excited_upper,
        }[manifold]

    def orbital_offset(self, manifold: Manifold) -> float:
        """Energy of the manifold relative to the bottom of its ground or excited pair"""
        if manifold is Manifold.GROUND_UPPER:
            return self.ground_orbital_splitting
        if manifold is Manifold.EXCITED_UPPER:
            return self.excited_orbital_splitting
        return 0.0


@marshmallow_dataclass.dataclass(frozen=True)
class MagneticConfig(MarshmallowDataclassExtensions):
    """Static magnetic field: magnitude in gauss, polar angle to the symmetry axis in radians"""

    magnitude: FieldStrength = ext_field(0.0)
    polar_angle: Angle = ext_field(0.0)

    def __post_init__(self):
        _check_finite(self, LevelSchemeError)
        if self.magnitude < 0:
            raise LevelSchemeError("magnitude", f"must be nonnegative, got {self.magnitude}")
        if not -1e-12 <= self.polar_angle <= math.pi / 2 + 1e-12:
            raise LevelSchemeError("polar_angle", f"must lie in [0, pi/2], got {self.polar_angle}")

    @property
    def transverse(self) -> float:
        return self.magnitude * math.sin(self.polar_angle)


@marshmallow_dataclass.dataclass(frozen=True)
class HyperfineConfig(MarshmallowDataclassExtensions):
    """Hyperfine coupling to a spin-1/2 nucleus, acting on the ground manifolds only"""

    enabled: bool = ext_field(False)
    coupling_A: Frequency = ext_field(0.0)

    def __post_init__(self):
        _check_finite(self, LevelSchemeError)
        if self.coupling_A < 0:
            raise LevelSchemeError("coupling_A", f"must be nonnegative, got {self.coupling_A}")
        if self.enabled and self.coupling_A == 0:
            logger.warning(
                "Hyperfine levels enabled with zero coupling, nuclear states stay degenerate"
            )


@dataclass(frozen=True)
class Level:
    index: int
    label: str
    manifold: Manifold
    spin: int
    energy: float
    nuclear: Optional[int] = None

    @property
    def is_excited(self) -> bool:
        return self.manifold.is_excited


@dataclass(frozen=True)
class Transition:
    """
    Optical transition between an excited and a ground level.

    `frequency` is the offset from the zero-phonon line in Hz and may be negative,
    `optical_frequency` is the absolute transition frequency.
    """

    label: str
    upper: int
    lower: int
    frequency: float
    optical_frequency: float
    dipole_weight: float
    spontaneous_rate: float

    @property
    def line(self) -> str:
        return self.label[0]

    @property
    def electronic_label(self) -> str:
        return self.label.split(":")[0]


@dataclass(frozen=True, eq=False)
class LevelScheme:
    params: SivParameters
    field: MagneticConfig
    hyperfine: HyperfineConfig
    levels: Tuple[Level, ...]
    transitions: Tuple[Transition, ...]
    mixing_fraction: float

    @property
    def size(self) -> int:
        return len(self.levels)

    @cached_property
    def _by_label(self) -> Dict[str, Transition]:
        return {t.label: t for t in self.transitions}

    @property
    def labels(self) -> List[str]:
        return [t.label for t in self.transitions]

    def transition(self, label: str) -> Transition:
        """Looks up a transition by its full label, e.g. "D2" or "D2:+" with hyperfine levels"""
        try:
            return self._by_label[label]
        except KeyError:
            raise TransitionNotFoundError(
                f"Transition '{label}' does not exist, available: {', '.join(self.labels)}"
            ) from None

    def components(self, label: str) -> List[Transition]:
        """All transitions whose full or electronic label matches `label`"""
        found = [t for t in self.transitions if label in (t.label, t.electronic_label)]
        if not found:
            raise TransitionNotFoundError(
                f"Transition '{label}' does not exist, available: {', '.join(self.labels)}"
            )
        return found

    def line_frequency(self, label: str) -> float:
        """ZPL offset of a transition, averaged over its nuclear components when hyperfine is on"""
        components = self.components(label)
        return sum(t.frequency for t in components) / len(components)

    def levels_in(self, manifold: Manifold) -> List[Level]:
        return [lvl for lvl in self.levels if lvl.manifold is manifold]

    @property
    def excited_indices(self) -> List[int]:
        return [lvl.index for lvl in self.levels if lvl.is_excited]

    @property
    def ground_indices(self) -> List[int]:
        return [lvl.index for lvl in self.levels if not lvl.is_excited]

    def decay_rate(self, level: int) -> float:
        """Total spontaneous emission rate out of a level"""
        return sum(t.spontaneous_rate for t in self.transitions if t.upper == level)

    def partner(self, level: Level) -> Level:
        """The level of the other orbital branch with the same spin and nuclear state"""
        other = {
            Manifold.GROUND_LOWER: Manifold.GROUND_UPPER,
            Manifold.GROUND_UPPER: Manifold.GROUND_LOWER,
            Manifold.EXCITED_LOWER: Manifold.EXCITED_UPPER,
            Manifold.EXCITED_UPPER: Manifold.EXCITED_LOWER,
        }[level.manifold]
        return next(
            lvl
            for lvl in self.levels_in(other)
            if lvl.spin == level.spin and lvl.nuclear == level.nuclear
        )

    def with_hyperfine(self, coupling_A: float) -> "LevelScheme":
        """Rebuilds this scheme with hyperfine levels enabled and the given coupling"""
        return build_level_scheme(
            self.params, self.field, HyperfineConfig(enabled=True, coupling_A=coupling_A)
        )

    def fingerprint(self) -> str:
        """Stable hash of everything the scheme was built from"""
        text = repr(
            (
                sorted(self.params.to_dict().items()),
                sorted(self.field.to_dict().items()),
                sorted(self.hyperfine.to_dict().items()),
            )
        )
        return sha256_text(text)


def spin_mixing_fraction(field: MagneticConfig, mixing_scale: float) -> float:
    """
    Spin-flip dipole weight caused by a field component transverse to the symmetry axis.

    The transverse field tilts the spin quantization axes of the ground and excited
    manifolds by different amounts, the squared overlap of the rotated states gives::

        eps = sin(atan2(B * sin(theta), mixing_scale) / 2) ** 2

    so eps is 0 for an aligned field and grows monotonically with the transverse component,
    saturating at 1/2.
    """

    if mixing_scale <= 0:
        raise LevelSchemeError("mixing_scale", f"must be positive, got {mixing_scale}")
    tilt = math.atan2(field.transverse, mixing_scale)
    return math.sin(tilt / 2) ** 2


def _level_label(manifold: Manifold, spin: int, nuclear: Optional[int]) -> str:
    label = f"{manifold.value}{'u' if spin > 0 else 'd'}"
    if nuclear is not None:
        label += "+" if nuclear > 0 else "-"
    return label


def _build_levels(
    params: SivParameters, field: MagneticConfig, hyperfine: HyperfineConfig
) -> List[Level]:
    zeeman = BOHR_MAGNETON_HZ_PER_GAUSS * field.magnitude / 2
    nuclear_states: List[Optional[int]] = [-1, +1] if hyperfine.enabled else [None]
    levels = []
    for manifold in Manifold:
        for spin in (-1, +1):
            for nuclear in nuclear_states:
                energy = params.orbital_offset(manifold) + spin * params.g_factor(manifold) * zeeman
                if nuclear is not None and not manifold.is_excited:
                    energy += hyperfine.coupling_A / 2 * spin * nuclear
                levels.append(
                    Level(
                        index=len(levels),
                        label=_level_label(manifold, spin, nuclear),
                        manifold=manifold,
                        spin=spin,
                        energy=energy,
                        nuclear=nuclear,
                    )
                )
    return levels


def _electronic_frequency(
    params: SivParameters, field: MagneticConfig, excited: Manifold, ground: Manifold, spins
) -> float:
    zeeman = BOHR_MAGNETON_HZ_PER_GAUSS * field.magnitude / 2
    s_e, s_g = spins
    return (
        params.orbital_offset(excited)
        - params.orbital_offset(ground)
        + (s_e * params.g_factor(excited) - s_g * params.g_factor(ground)) * zeeman
    )


def _subline_numbers(
    params: SivParameters, field: MagneticConfig, excited: Manifold, ground: Manifold
) -> Dict[Tuple[int, int], int]:
    """Numbers sublines 1..4 by decreasing frequency, ties broken by `_SUBLINE_ORDER`"""
    ranked = sorted(
        _SUBLINE_ORDER,
        key=lambda spins: (
            -round(_electronic_frequency(params, field, excited, ground, spins), 3),
            _SUBLINE_ORDER.index(spins),
        ),
    )
    return {spins: number for number, spins in enumerate(ranked, start=1)}


def build_level_scheme(
    params: SivParameters,
    field: MagneticConfig,
    hyperfine: Optional[HyperfineConfig] = None,
) -> LevelScheme:
    """
    Builds the 8-level (16 with hyperfine levels) scheme together with its 16 (32) optical
    transitions for the given field.

    :param params: material parameters
    :param field: static magnetic field
    :param hyperfine: hyperfine coupling, disabled when not given
    :raises LevelSchemeError: on invalid inputs
    :return: the level scheme
    """

    hyperfine = hyperfine or HyperfineConfig()

    mixing = spin_mixing_fraction(field, params.mixing_scale)
    levels = _build_levels(params, field, hyperfine)

    transitions = []
    for (excited, ground), line in LINES.items():
        numbers = _subline_numbers(params, field, excited, ground)
        for e in [lvl for lvl in levels if lvl.manifold is excited]:
            for g in [lvl for lvl in levels if lvl.manifold is ground]:
                if e.nuclear != g.nuclear:
                    continue
                label = f"{line}{numbers[(e.spin, g.spin)]}"
                if e.nuclear is not None:
                    label += ":+" if e.nuclear > 0 else ":-"
                weight = 1 - mixing if e.spin == g.spin else mixing
                offset = e.energy - g.energy
                transitions.append(
                    Transition(
                        label=label,
                        upper=e.index,
                        lower=g.index,
                        frequency=offset,
                        optical_frequency=params.zpl_frequency + offset,
                        dipole_weight=weight,
                        spontaneous_rate=weight
                        * params.branch_share(ground)
                        * params.total_decay_rate,
                    )
                )

    transitions.sort(key=lambda t: t.label)
    scheme = LevelScheme(
        params=params,
        field=field,
        hyperfine=hyperfine,
        levels=tuple(levels),
        transitions=tuple(transitions),
        mixing_fraction=mixing,
    )
    _check_weights(scheme)
    logger.debug(
        f"Built {scheme.size}-level scheme with {len(transitions)} transitions, mixing {mixing:.3e}"
    )
    return scheme


def _check_weights(scheme: LevelScheme):
    totals: Dict[Tuple[int, Manifold], float] = {}
    for t in scheme.transitions:
        key = (t.upper, scheme.levels[t.lower].manifold)
        totals[key] = totals.get(key, 0.0) + t.dipole_weight
    for (upper, _), total in totals.items():
        if abs(total - 1) > _WEIGHT_TOLERANCE:
            raise LevelSchemeError(
                "dipole_weight",
                f"weights out of {scheme.levels[upper].label} sum to {total}, expected 1",
            )
    for t in scheme.transitions:
        if t.optical_frequency <= 0:
            raise LevelSchemeError("frequency", f"{t.label} has nonpositive optical frequency")


def transition_lookup(scheme: LevelScheme, label: str) -> Transition:
    """Returns the transition with the given label, raising TransitionNotFoundError if absent"""
    return scheme.transition(label)


def with_field(scheme: LevelScheme, field: MagneticConfig) -> LevelScheme:
    """Rebuilds the scheme for another magnetic field"""
    return build_level_scheme(scheme.params, field, scheme.hyperfine)


def with_params(scheme: LevelScheme, **changes) -> LevelScheme:
    """Rebuilds the scheme with some material parameters changed"""
    return build_level_scheme(replace(scheme.params, **changes), scheme.field, scheme.hyperfine)
