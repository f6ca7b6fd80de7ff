# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

import csv
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TextIO, Union

import numpy as np


class SpectrumFormatError(ValueError):
    """Raised when a spectrum CSV cannot be read"""


def format_float(value: float) -> str:
    """Scientific notation with enough digits to round-trip a double"""
    return f"{value:.16e}"


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Detected count rate (Hz) sampled on a detuning grid (Hz)"""

    grid: np.ndarray
    counts: np.ndarray

    HEADER = ("detuning_hz", "counts_hz")

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        counts = np.asarray(self.counts, dtype=float)
        if grid.ndim != 1 or grid.shape != counts.shape:
            raise ValueError(f"grid and counts shapes differ: {grid.shape} != {counts.shape}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_points(cls, grid: Sequence[float], counts: Sequence[float]) -> "Spectrum":
        return cls(np.asarray(grid, dtype=float), np.asarray(counts, dtype=float))

    def __len__(self) -> int:
        return len(self.grid)

    def scaled(self, factor: float) -> "Spectrum":
        return Spectrum(self.grid, self.counts * factor)

    def __add__(self, other: "Spectrum") -> "Spectrum":
        if not np.array_equal(self.grid, other.grid):
            raise ValueError("Cannot add spectra sampled on different grids")
        return Spectrum(self.grid, self.counts + other.counts)

    def write_csv(self, stream: TextIO):
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(self.HEADER)
        for x, y in zip(self.grid, self.counts):
            writer.writerow((format_float(x), format_float(y)))

    def to_csv(self, path: Union[str, Path]):
        with open(path, "w", newline="") as f:
            self.write_csv(f)

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        self.write_csv(buffer)
        return buffer.getvalue()

    @classmethod
    def read_csv(cls, stream: TextIO) -> "Spectrum":
        rows = list(csv.reader(stream))
        if not rows or tuple(rows[0]) != cls.HEADER:
            raise SpectrumFormatError(f"Expected header {','.join(cls.HEADER)}")
        try:
            values = np.array([[float(v) for v in row] for row in rows[1:]], dtype=float)
        except ValueError as e:
            raise SpectrumFormatError(f"Malformed spectrum row: {e}")
        if values.size == 0:
            return cls(np.zeros(0), np.zeros(0))
        return cls(values[:, 0], values[:, 1])

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "Spectrum":
        with open(path, newline="") as f:
            return cls.read_csv(f)
