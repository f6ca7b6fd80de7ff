# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

"""
Text format describing laser pulse sequences.

Example::

    # spin T1: initialize on D1, wait, read out on D2
    duration {12ms + tau}
    rise 60ns
    extinction 60dB
    channel init laser D1 sat 0.053 linewidth 94MHz
    channel read laser D2 sat 10 linewidth 94MHz
    pulse init 0 6ms
    pulse read {6ms + tau} {9ms + tau}
    readout read

Values are numbers in base units (seconds, hertz, decibels), numbers with a unit
suffix written without a space (`6ms`), or expressions in braces that may use units
and template variables (`{6ms + tau}`).
"""

import logging
import re
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Tuple

from simpleeval import InvalidExpression, simple_eval

from sivsim.level_model import LevelScheme, TransitionNotFoundError
from sivsim.rate_engine import Laser, RateConfigurationError
from sivsim.util import Dimension, parse_quantity, sha256_text

logger = logging.getLogger(__name__)

LABEL_RE = re.compile(r"^[A-D][1-4](:[+-])?$")
_TOKEN_RE = re.compile(r"\{[^}]*\}|\{[^}]*$|\S+")
_UNIT_SUFFIX_RE = re.compile(
    r"(?<![\w.])((?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(ps|ns|us|µs|ms|s|Hz|kHz|MHz|GHz|dB)\b"
)

_UNIT_NAMES = {
    Dimension.TIME: {"ps": 1e-12, "ns": 1e-9, "us": 1e-6, "µs": 1e-6, "ms": 1e-3, "s": 1.0},
    Dimension.FREQUENCY: {"Hz": 1.0, "kHz": 1e3, "MHz": 1e6, "GHz": 1e9},
    Dimension.DECIBEL: {"dB": 1.0},
    Dimension.DIMENSIONLESS: {},
}


class SequenceError(ValueError):
    """Raised when a pulse sequence is invalid"""


class SequenceSyntaxError(SequenceError):
    """Raised when sequence text cannot be parsed"""

    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SequenceOverlapError(SequenceError):
    """Raised when two pulses of one channel overlap"""


class UnknownLaserError(SequenceError):
    """Raised when a channel targets a transition label that does not exist"""


@dataclass(frozen=True)
class Channel:
    name: str
    laser: Laser
    #: sorted, non-overlapping (t_on, t_off) pairs in seconds
    events: Tuple[Tuple[float, float], ...] = ()


@dataclass(frozen=True)
class PulseSequence:
    channels: Tuple[Channel, ...]
    total_duration: float
    rise_fall_time: float = 60e-9
    extinction: float = 60.0
    repetitions: int = 1
    readout: Optional[str] = None

    def __post_init__(self):
        if not self.total_duration > 0:
            raise SequenceError(f"Sequence duration must be positive, got {self.total_duration}")
        if self.rise_fall_time < 0:
            raise SequenceError(f"Rise time must be nonnegative, got {self.rise_fall_time}")
        if not self.extinction > 0:
            raise SequenceError(f"Extinction must be positive, got {self.extinction} dB")
        if self.repetitions < 1:
            raise SequenceError(f"Repetitions must be at least 1, got {self.repetitions}")
        names = [ch.name for ch in self.channels]
        if len(set(names)) != len(names):
            raise SequenceError(f"Duplicate channel names in {names}")
        if self.readout is not None and self.readout not in names:
            raise SequenceError(f"Readout channel '{self.readout}' is not defined")
        for ch in self.channels:
            if not LABEL_RE.match(ch.laser.target):
                raise UnknownLaserError(f"'{ch.laser.target}' is not a transition label")
            last_off = 0.0
            for t_on, t_off in ch.events:
                if not 0 <= t_on < t_off:
                    raise SequenceError(
                        f"Pulse {t_on}..{t_off} of '{ch.name}' has t_off before t_on"
                    )
                if t_on < last_off:
                    raise SequenceOverlapError(
                        f"Pulses of '{ch.name}' overlap at {t_on:.6e} s "
                        f"(previous ends {last_off:.6e} s)"
                    )
                if t_off > self.total_duration * (1 + 1e-12):
                    raise SequenceError(
                        f"Pulse of '{ch.name}' ends at {t_off:.6e} s, after the sequence end"
                    )
                last_off = t_off

    def channel(self, name: str) -> Channel:
        for ch in self.channels:
            if ch.name == name:
                return ch
        raise KeyError(f"Channel '{name}' is not defined")

    @property
    def leakage(self) -> float:
        """Residual relative intensity of a switched-off laser"""
        return 10 ** (-self.extinction / 10)

    def readout_window(self) -> Tuple[float, float]:
        """The last pulse of the readout channel"""
        if self.readout is None:
            raise SequenceError("Sequence has no readout channel")
        events = self.channel(self.readout).events
        if not events:
            raise SequenceError(f"Readout channel '{self.readout}' has no pulses")
        return events[-1]

    def validate_labels(self, scheme: LevelScheme):
        for ch in self.channels:
            try:
                scheme.components(ch.laser.target)
            except TransitionNotFoundError as e:
                raise UnknownLaserError(str(e.args[0])) from None

    def fingerprint(self) -> str:
        return sha256_text(serialize_sequence(self))


def _evaluate(
    token: str,
    dimension: Dimension,
    variables: Mapping[str, float],
    line: int,
    column: int,
) -> float:
    if token.startswith("{") and not token.endswith("}"):
        raise SequenceSyntaxError("Unclosed '{'", line, column)
    expr = token[1:-1] if token.startswith("{") else token
    if not expr.strip():
        raise SequenceSyntaxError("Empty value", line, column)
    if not token.startswith("{"):
        try:
            return parse_quantity(expr, dimension)
        except ValueError:
            pass

    names: Dict[str, float] = dict(_UNIT_NAMES.get(dimension, {}))
    names.update(variables)
    try:
        value = simple_eval(_UNIT_SUFFIX_RE.sub(r"\1*\2", expr), names=names)
    except (InvalidExpression, SyntaxError, TypeError, ZeroDivisionError) as e:
        raise SequenceSyntaxError(f"Cannot evaluate '{expr}': {e}", line, column) from None
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SequenceSyntaxError(f"'{expr}' is not a number", line, column)
    return float(value)


@dataclass
class _Draft:
    duration: Optional[float] = None
    rise: float = 60e-9
    extinction: float = 60.0
    repetitions: int = 1
    readout: Optional[str] = None
    lasers: Dict[str, Laser] = field(default_factory=dict)
    pulses: Dict[str, List[Tuple[float, float, int]]] = field(default_factory=dict)


_CHANNEL_KEYS = {
    "sat": ("saturation", Dimension.DIMENSIONLESS),
    "linewidth": ("linewidth", Dimension.FREQUENCY),
    "detuning": ("detuning", Dimension.FREQUENCY),
}


def parse_sequence(
    text: str,
    variables: Optional[Mapping[str, float]] = None,
    scheme: Optional[LevelScheme] = None,
) -> PulseSequence:
    """
    Parses the sequence text format.

    :param text: sequence description
    :param variables: values of template variables used in expressions
    :param scheme: when given, every laser label is checked against it
    :raises SequenceSyntaxError: on malformed lines, with line and column
    :raises SequenceOverlapError: when pulses of one channel overlap
    :raises UnknownLaserError: when a laser targets a transition that does not exist
    :return: the parsed sequence
    """

    variables = dict(variables or {})
    draft = _Draft()

    for lineno, raw in enumerate(text.splitlines(), start=1):
        content = raw.split("#", 1)[0]
        tokens = [(m.group(), m.start() + 1) for m in _TOKEN_RE.finditer(content)]
        if not tokens:
            continue
        (keyword, _), args = tokens[0], tokens[1:]

        def value(i: int, dim: Dimension) -> float:
            if i >= len(args):
                raise SequenceSyntaxError(f"'{keyword}' expects more values", lineno, len(raw) + 1)
            return _evaluate(args[i][0], dim, variables, lineno, args[i][1])

        def expect(count: int):
            if len(args) != count:
                column = args[count][1] if len(args) > count else len(raw) + 1
                raise SequenceSyntaxError(
                    f"'{keyword}' expects {count} argument(s), got {len(args)}", lineno, column
                )

        if keyword == "duration":
            expect(1)
            draft.duration = value(0, Dimension.TIME)
        elif keyword == "rise":
            expect(1)
            draft.rise = value(0, Dimension.TIME)
        elif keyword == "extinction":
            expect(1)
            draft.extinction = value(0, Dimension.DECIBEL)
        elif keyword == "repeat":
            expect(1)
            count = value(0, Dimension.DIMENSIONLESS)
            if count != int(count) or count < 1:
                raise SequenceSyntaxError(
                    "Repetition count must be a positive integer", lineno, args[0][1]
                )
            draft.repetitions = int(count)
        elif keyword == "readout":
            expect(1)
            draft.readout = args[0][0]
        elif keyword == "channel":
            _parse_channel(draft, args, lineno, raw, variables)
        elif keyword == "pulse":
            expect(3)
            name = args[0][0]
            if name not in draft.lasers:
                raise SequenceSyntaxError(f"Unknown channel '{name}'", lineno, args[0][1])
            t_on, t_off = value(1, Dimension.TIME), value(2, Dimension.TIME)
            if t_off <= t_on:
                raise SequenceSyntaxError(f"t_off before t_on, line {lineno}", lineno, args[2][1])
            if t_on < 0:
                raise SequenceSyntaxError("Pulse starts before 0", lineno, args[1][1])
            draft.pulses[name].append((t_on, t_off, lineno))
        else:
            raise SequenceSyntaxError(f"Unknown keyword '{keyword}'", lineno, tokens[0][1])

    return _finish(draft, scheme)


def _parse_channel(
    draft: _Draft,
    args: List[Tuple[str, int]],
    lineno: int,
    raw: str,
    variables: Mapping[str, float],
):
    if len(args) < 3 or args[1][0] != "laser":
        column = args[1][1] if len(args) > 1 else len(raw) + 1
        raise SequenceSyntaxError("Expected 'channel <name> laser <label> ...'", lineno, column)
    name, label = args[0][0], args[2][0]
    if name in draft.lasers:
        raise SequenceSyntaxError(f"Channel '{name}' defined twice", lineno, args[0][1])
    if not LABEL_RE.match(label):
        raise UnknownLaserError(f"line {lineno}: '{label}' is not a transition label")

    options: Dict[str, float] = {}
    rest = args[3:]
    if len(rest) % 2:
        raise SequenceSyntaxError("Channel options come in key/value pairs", lineno, rest[-1][1])
    for (key, column), (text, value_column) in zip(rest[::2], rest[1::2]):
        if key not in _CHANNEL_KEYS:
            raise SequenceSyntaxError(f"Unknown channel option '{key}'", lineno, column)
        attr, dim = _CHANNEL_KEYS[key]
        options[attr] = _evaluate(text, dim, variables, lineno, value_column)
    try:
        draft.lasers[name] = Laser(target=label, **options)
    except RateConfigurationError as e:
        raise SequenceSyntaxError(str(e), lineno, args[0][1]) from None
    draft.pulses[name] = []


def _finish(draft: _Draft, scheme: Optional[LevelScheme]) -> PulseSequence:
    channels = []
    latest = 0.0
    for name, laser in draft.lasers.items():
        pulses = sorted(draft.pulses[name])
        for (on_a, off_a, line_a), (on_b, _, line_b) in zip(pulses, pulses[1:]):
            if on_b < off_a:
                raise SequenceOverlapError(
                    f"Pulses of channel '{name}' overlap: "
                    f"{on_a:.6e}..{off_a:.6e} s (line {line_a}) "
                    f"and one starting at {on_b:.6e} s (line {line_b})"
                )
        channels.append(Channel(name, laser, tuple((on, off) for on, off, _ in pulses)))
        if pulses:
            latest = max(latest, pulses[-1][1])

    duration = draft.duration if draft.duration is not None else latest
    sequence = PulseSequence(
        channels=tuple(channels),
        total_duration=duration,
        rise_fall_time=draft.rise,
        extinction=draft.extinction,
        repetitions=draft.repetitions,
        readout=draft.readout,
    )
    if scheme is not None:
        sequence.validate_labels(scheme)
    logger.debug(f"Parsed sequence with {len(channels)} channels, {duration:.6e} s long")
    return sequence


def serialize_sequence(sequence: PulseSequence) -> str:
    """Canonical text form of a sequence, parsing it back gives an equal sequence"""

    lines = [
        f"duration {sequence.total_duration!r}",
        f"repeat {sequence.repetitions}",
        f"rise {sequence.rise_fall_time!r}",
        f"extinction {sequence.extinction!r}",
    ]
    for ch in sequence.channels:
        laser = ch.laser
        lines.append(
            f"channel {ch.name} laser {laser.target} sat {laser.saturation!r} "
            f"linewidth {laser.linewidth!r} detuning {laser.detuning!r}"
        )
    for ch in sequence.channels:
        for t_on, t_off in ch.events:
            lines.append(f"pulse {ch.name} {t_on!r} {t_off!r}")
    if sequence.readout is not None:
        lines.append(f"readout {sequence.readout}")
    return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class SequenceTemplate:
    """Sequence text with free variables, rendered once per swept value"""

    text: str

    def render(self, scheme: Optional[LevelScheme] = None, **variables: float) -> PulseSequence:
        return parse_sequence(self.text, variables, scheme)
