# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

"""
Run configuration: the `key = value` file format, presets and command-line overrides.

Example::

    scenario = spectrum
    scheme.excited_orbital_splitting = 259 GHz
    field.magnitude = 4.5 kG
    field.polar_angle = 1 deg
    environment.temperature = 4.5 K
    spectrum.pumps = none, D2
"""

import logging
import re
from dataclasses import replace
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple, Union

import marshmallow
import marshmallow_dataclass
import yaml
from importlib_resources import as_file, files

from sivsim.analysis import ExponentialForm
from sivsim.common_serdes import (
    Frequency,
    FrequencyList,
    MarshmallowDataclassExtensions,
    Ratio,
    StringList,
    Time,
    TimeList,
    ext_field,
    flatten_dotted,
    schema_keys,
    unflatten_dotted,
)
from sivsim.detector import DetectorModel
from sivsim.level_model import HyperfineConfig, MagneticConfig, SivParameters
from sivsim.rate_engine import Environment
from sivsim.util import InvariantViolation

logger = logging.getLogger(__name__)

PRESET_SUFFIX = ".cfg"
_KEY_RE = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*(\.[A-Za-z_][A-Za-z0-9_]*)*$")


class RunConfigError(ValueError):
    """Raised when a run configuration is malformed or invalid"""


class Scenario(Enum):
    SPECTRUM = "spectrum"
    CPT = "cpt"
    HYPERFINE = "hyperfine"
    ORBITAL_CPT = "orbital-cpt"
    SPIN_T1 = "spin-t1"
    ORBITAL_T1 = "orbital-t1"
    SWEEP = "sweep"


@marshmallow_dataclass.dataclass(frozen=True)
class SpectrumBlock(MarshmallowDataclassExtensions):
    """Probe scan relative to the `probe` line, once per entry of `pumps` ("none" for no pump)"""

    probe: str = ext_field("D2")
    probe_saturation: Ratio = ext_field(1.0)
    linewidth: Frequency = ext_field(94e6)
    scan_start: Frequency = ext_field(-12e9)
    scan_stop: Frequency = ext_field(12e9)
    points: int = ext_field(400)
    pumps: StringList = ext_field(lambda: ["none"])
    pump_saturation: Ratio = ext_field(0.1)
    pump_detuning: Frequency = ext_field(0.0)
    feature_threshold: Ratio = ext_field(0.01)


@marshmallow_dataclass.dataclass(frozen=True)
class CptBlock(MarshmallowDataclassExtensions):
    """
    Two-laser scan of a Lambda system. Rabi frequencies are given as cyclic
    frequencies (Rabi / 2 pi), one spectrum is computed per probe Rabi frequency.
    With `normalize_background` the dips are fitted relative to the incoherent
    spectrum of the same lasers.
    """

    leg1: str = ext_field("D3")
    leg2: str = ext_field("D4")
    pump_rabi: Frequency = ext_field(2e6)
    probe_rabis: FrequencyList = ext_field(lambda: [2e6])
    one_photon_detuning: Frequency = ext_field(0.0)
    t2_star: Time = ext_field(35.4e-9)
    scan_span: Frequency = ext_field(30e6)
    points: int = ext_field(301)
    quadratic_baseline: bool = ext_field(True)
    normalize_background: bool = ext_field(True)
    compose_orbital_dephasing: bool = ext_field(False)
    full_scheme: bool = ext_field(False)


@marshmallow_dataclass.dataclass(frozen=True)
class OrbitalCptBlock(MarshmallowDataclassExtensions):
    pump: str = ext_field("C2")
    probe: str = ext_field("D2")
    pump_rabi: Frequency = ext_field(20e6)
    probe_rabi: Frequency = ext_field(20e6)
    pump_detuning: Frequency = ext_field(0.0)
    t2_star: Optional[Time] = ext_field(None)
    scan_span: Frequency = ext_field(400e6)
    points: int = ext_field(401)


@marshmallow_dataclass.dataclass(frozen=True)
class SpinT1Block(MarshmallowDataclassExtensions):
    """Sequence file (relative to the config file) with a `tau` template variable"""

    sequence: str = ext_field("")
    taus: TimeList = ext_field(list)
    form: ExponentialForm = ext_field(ExponentialForm.DECAY, by_value=True)
    dark_read: bool = ext_field(False)
    variable: str = ext_field("tau")


@marshmallow_dataclass.dataclass(frozen=True)
class OrbitalT1Block(MarshmallowDataclassExtensions):
    """Empty `gaps` selects a grid spanning the expected relaxation time"""

    gaps: TimeList = ext_field(list)
    pulse_width: Time = ext_field(80e-9)
    saturation: Ratio = ext_field(10.0)
    label: str = ext_field("D2")
    rise: Time = ext_field(1e-9)


@marshmallow_dataclass.dataclass(frozen=True)
class SweepBlock(MarshmallowDataclassExtensions):
    scenario: Scenario = ext_field(Scenario.ORBITAL_T1, by_value=True)
    axis: str = ext_field("environment.temperature")
    values: StringList = ext_field(list)
    #: summary column fitted linearly against the axis, the first column when empty
    fit_key: str = ext_field("")


@marshmallow_dataclass.dataclass(frozen=True)
class RunConfig(MarshmallowDataclassExtensions):
    scheme: SivParameters
    scenario: Scenario = ext_field(Scenario.SPECTRUM, by_value=True)
    seed: int = ext_field(0)
    output_dir: str = ext_field("out")
    field: MagneticConfig = ext_field(MagneticConfig)
    hyperfine: HyperfineConfig = ext_field(HyperfineConfig)
    environment: Environment = ext_field(Environment)
    detector: DetectorModel = ext_field(DetectorModel)
    spectrum: SpectrumBlock = ext_field(SpectrumBlock)
    cpt: CptBlock = ext_field(CptBlock)
    orbital_cpt: OrbitalCptBlock = ext_field(OrbitalCptBlock)
    spin_t1: SpinT1Block = ext_field(SpinT1Block)
    orbital_t1: OrbitalT1Block = ext_field(OrbitalT1Block)
    sweep: SweepBlock = ext_field(SweepBlock)

    def to_flat(self) -> Dict[str, Any]:
        return flatten_dotted(self.to_dict())

    def to_text(self) -> str:
        """Serializes the resolved configuration in the `key = value` format"""
        return "".join(f"{key} = {_format_value(value)}\n" for key, value in self.to_flat().items())

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, seed=seed, detector=replace(self.detector, rng_seed=seed))


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ", ".join(_format_value(v) for v in value)
    return str(value)


@lru_cache(maxsize=None)
def known_keys() -> Tuple[str, ...]:
    return tuple(schema_keys(RunConfig.Schema()))


def parse_config_text(text: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """
    Parses `key = value` lines, `#` starts a comment.

    :return: (values by dotted key, line number of every key)
    """

    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0].strip()
        if not content:
            continue
        key, sep, value = content.partition("=")
        key = key.strip()
        if not sep:
            raise RunConfigError(f"line {lineno}: expected 'key = value', got '{content}'")
        if not _KEY_RE.match(key):
            raise RunConfigError(f"line {lineno}: '{key}' is not a valid key")
        if key in values:
            raise RunConfigError(f"line {lineno}: '{key}' already set on line {lines[key]}")
        values[key] = value.strip()
        lines[key] = lineno
    return values, lines


def _apply_overrides(
    values: Dict[str, Any], lines: Dict[str, int], overrides: Iterable[str]
) -> None:
    for override in overrides:
        key, sep, value = override.partition("=")
        key = key.strip()
        if not sep or not key:
            raise RunConfigError(f"--set {override}: expected 'key=value'")
        if key not in known_keys():
            raise RunConfigError(f"--set {override}: unknown key '{key}'")
        values[key] = value.strip()
        lines[key] = 0


def _locate(key: str, lines: Dict[str, int]) -> str:
    if key in lines:
        return "--set" if lines[key] == 0 else f"line {lines[key]}"
    for candidate, lineno in lines.items():
        if candidate.endswith("." + key):
            return "--set" if lineno == 0 else f"line {lineno}"
    return "configuration"


def _flatten_messages(messages: Any, prefix: str = "") -> List[Tuple[str, str]]:
    if isinstance(messages, dict):
        out = []
        for k, v in messages.items():
            out.extend(_flatten_messages(v, f"{prefix}{k}."))
        return out
    if isinstance(messages, list):
        return [(prefix.rstrip("."), "; ".join(str(m) for m in messages))]
    return [(prefix.rstrip("."), str(messages))]


def build_run_config(
    values: Dict[str, Any],
    lines: Optional[Dict[str, int]] = None,
    base_dir: Optional[Path] = None,
) -> RunConfig:
    """
    Validates flat dotted values into a RunConfig.

    :param base_dir: directory relative sequence paths are resolved against
    :raises RunConfigError: naming the offending key and its line
    """

    lines = lines or {}
    try:
        tree = unflatten_dotted(values)
    except ValueError as e:
        raise RunConfigError(str(e)) from None

    try:
        cfg = RunConfig.from_dict(tree)
    except marshmallow.ValidationError as e:
        key, message = _flatten_messages(e.messages)[0]
        raise RunConfigError(f"{_locate(key, lines)}: {key}: {message}") from None
    except InvariantViolation as e:
        raise RunConfigError(f"{_locate(e.key, lines)}: {e}") from None

    if cfg.spin_t1.sequence and base_dir is not None:
        path = Path(cfg.spin_t1.sequence)
        if not path.is_absolute():
            cfg = replace(cfg, spin_t1=replace(cfg.spin_t1, sequence=str(base_dir / path)))
    return cfg


def load_run_config(
    path: Union[str, Path],
    overrides: Iterable[str] = (),
    base_dir: Optional[Path] = None,
) -> RunConfig:
    """
    Loads a run configuration in the `key = value` format, or YAML for `.yaml`/`.yml` files.

    :param overrides: `key=value` strings applied on top of the file
    :raises RunConfigError: on unreadable, malformed or invalid configurations
    """

    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise RunConfigError(f"Cannot read {path}: {e.strerror}") from None

    if path.suffix.lower() in (".yaml", ".yml"):
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise RunConfigError(f"{path}: invalid YAML: {e}") from None
        if not isinstance(data, dict):
            raise RunConfigError(f"{path}: expected a mapping at the top level")
        values, lines = flatten_dotted(data), {}
    else:
        values, lines = parse_config_text(text)

    _apply_overrides(values, lines, overrides)
    logger.info(f"Loaded run configuration from {path}")
    return build_run_config(values, lines, base_dir or path.parent)


def parse_run_config(
    text: str, overrides: Iterable[str] = (), base_dir: Optional[Path] = None
) -> RunConfig:
    values, lines = parse_config_text(text)
    _apply_overrides(values, lines, overrides)
    return build_run_config(values, lines, base_dir)


def list_presets() -> List[str]:
    with as_file(files("sivsim.presets")) as presets:
        return sorted(p.stem for p in Path(presets).glob(f"*{PRESET_SUFFIX}"))


def load_preset(name: str, overrides: Iterable[str] = ()) -> RunConfig:
    """
    :raises RunConfigError: when no preset of that name exists
    """

    if name not in list_presets():
        raise RunConfigError(f"Unknown preset '{name}', available: {', '.join(list_presets())}")
    with as_file(files("sivsim.presets")) as presets:
        return load_run_config(Path(presets) / f"{name}{PRESET_SUFFIX}", overrides)


def apply_override(cfg: RunConfig, key: str, value: Any) -> RunConfig:
    """Returns a copy of `cfg` with one dotted key replaced"""
    if key not in known_keys():
        raise RunConfigError(f"Unknown key '{key}'")
    values = cfg.to_flat()
    values[key] = value
    return build_run_config(values, {key: 0})
