# Copyright (c) 2021-2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

import hashlib
import math
import re
from collections import defaultdict
from enum import Enum
from typing import Any, DefaultDict, Dict, Tuple, TypeVar, Union


class InvariantViolation(ValueError):
    """Raised when a value object is constructed with values that break its invariants"""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class NumericalError(Exception):
    """Base class for failures of the numerical engines"""


class Dimension(Enum):
    FREQUENCY = "frequency"
    TIME = "time"
    TEMPERATURE = "temperature"
    FIELD = "field"
    ANGLE = "angle"
    DECIBEL = "decibel"
    DIMENSIONLESS = "dimensionless"


SI_PREFIXES = {
    "p": 1e-12,
    "n": 1e-9,
    "u": 1e-6,
    "µ": 1e-6,
    "m": 1e-3,
    "": 1.0,
    "k": 1e3,
    "M": 1e6,
    "G": 1e9,
    "T": 1e12,
}

# (symbol, factor to the base unit, accepts SI prefixes)
_UNITS: Dict[Dimension, Tuple[Tuple[str, float, bool], ...]] = {
    Dimension.FREQUENCY: (("Hz", 1.0, True),),
    Dimension.TIME: (("s", 1.0, True),),
    Dimension.TEMPERATURE: (("K", 1.0, True),),
    # magnetic fields are kept in gauss
    Dimension.FIELD: (("G", 1.0, True), ("T", 1e4, True)),
    Dimension.ANGLE: (
        ("rad", 1.0, True),
        ("deg", math.pi / 180, False),
        ("°", math.pi / 180, False),
    ),
    Dimension.DECIBEL: (("dB", 1.0, False),),
    Dimension.DIMENSIONLESS: (("%", 0.01, False),),
}

_QUANTITY_RE = re.compile(
    r"^\s*(?P<number>[-+]?(?:inf|(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?))\s*(?P<unit>[^\s\d.+-]*)\s*$"
)


def parse_quantity(text: Union[str, float, int], dimension: Dimension) -> float:
    """Converts a number with an optional SI-suffixed unit into the base unit of `dimension`

    Example::

        parse_quantity("47 GHz", Dimension.FREQUENCY) == 47e9
        parse_quantity("4.5 kG", Dimension.FIELD) == 4500.0
        parse_quantity("20 deg", Dimension.ANGLE) == 0.3490658503988659

    :param text: plain number (already in base units) or a string like "2.4 ms"
    :param dimension: physical dimension the value must have
    :raises ValueError: when the text is malformed or carries a unit of another dimension
    :return: the value in base units
    """

    if isinstance(text, (int, float)) and not isinstance(text, bool):
        return float(text)

    match = _QUANTITY_RE.match(str(text))
    if match is None:
        raise ValueError(f"'{text}' is not a number with an optional unit")

    value = float(match["number"])
    unit = match["unit"]
    if not unit:
        return value

    for symbol, factor, prefixed in _UNITS[dimension]:
        if not unit.endswith(symbol):
            continue
        prefix = unit[: len(unit) - len(symbol)]
        if prefix == "":
            return value * factor
        if prefixed and prefix in SI_PREFIXES:
            return value * factor * SI_PREFIXES[prefix]

    raise ValueError(f"'{unit}' is not a unit of {dimension.value}")


def sha256_text(text: Union[str, bytes]) -> str:
    """Returns the hex SHA-256 digest of the given text"""
    data = text.encode() if isinstance(text, str) else text
    return hashlib.sha256(data).hexdigest()


_R = DefaultDict[Any, Union["_R", Any]]


def recursive_defaultdict() -> _R:
    """Return defaultdict that can have many nested dicts inside without having to declare them"""
    return defaultdict(recursive_defaultdict)


def recursive_defaultdict_to_dict(recursive_defaultdict: _R) -> Dict[Any, Any]:
    """Convert recursive defaultdict to a dict"""
    for key, value in recursive_defaultdict.items():
        if isinstance(value, dict):
            recursive_defaultdict[key] = recursive_defaultdict_to_dict(value)
    return dict(recursive_defaultdict)


class MissingType:
    """
    Marker type to be used when it's necessary to mark a field or a parameter as
    optional but when `None` should be treated as a supplied value, not a missing one.
    """


_T = TypeVar("_T")
MaybeMissing = Union[_T, MissingType]
MISSING = MissingType()
