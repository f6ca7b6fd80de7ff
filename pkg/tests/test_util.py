# Copyright (c) 2023-2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

import math

import pytest

from sivsim.util import (
    Dimension,
    parse_quantity,
    recursive_defaultdict,
    recursive_defaultdict_to_dict,
    sha256_text,
)


def test_parse_quantity():
    assert parse_quantity("47 GHz", Dimension.FREQUENCY) == pytest.approx(47e9)
    assert parse_quantity("2.4 ms", Dimension.TIME) == pytest.approx(2.4e-3)
    assert parse_quantity("6.4us", Dimension.TIME) == pytest.approx(6.4e-6)
    assert parse_quantity("4.5 kG", Dimension.FIELD) == pytest.approx(4500.0)
    assert parse_quantity("0.45 T", Dimension.FIELD) == pytest.approx(4500.0)
    assert parse_quantity("90 deg", Dimension.ANGLE) == pytest.approx(math.pi / 2)
    assert parse_quantity("60 dB", Dimension.DECIBEL) == 60.0
    assert parse_quantity("5 %", Dimension.DIMENSIONLESS) == pytest.approx(0.05)
    assert parse_quantity("-1.5e3", Dimension.FREQUENCY) == -1500.0
    assert parse_quantity(3, Dimension.TEMPERATURE) == 3.0


@pytest.mark.parametrize(
    "text, dimension",
    [
        ("47 GHz", Dimension.TIME),
        ("fast", Dimension.TIME),
        ("", Dimension.FREQUENCY),
        ("3 kdeg", Dimension.ANGLE),
        ("1 2 Hz", Dimension.FREQUENCY),
    ],
)
def test_parse_quantity_rejects(text, dimension):
    with pytest.raises(ValueError):
        parse_quantity(text, dimension)


def test_sha256_text():
    assert sha256_text("abc") == sha256_text(b"abc")
    assert sha256_text("abc") == (
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
    )


def test_recursive_defaultdict():
    tree = recursive_defaultdict()
    tree["a"]["b"]["c"] = 1
    tree["a"]["d"] = 2
    assert recursive_defaultdict_to_dict(tree) == {"a": {"b": {"c": 1}, "d": 2}}
