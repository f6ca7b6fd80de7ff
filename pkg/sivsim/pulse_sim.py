# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

"""Time-resolved fluorescence under pulse sequences and the relaxation
experiments built on top of it."""

import csv
import logging
import math
import threading
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from sivsim.analysis import (
    ExponentialForm,
    FitResult,
    fit_exponential,
    initialization_fidelity,
)
from sivsim.detector import DetectorModel
from sivsim.level_model import LevelScheme
from sivsim.rate_engine import (
    Environment,
    Laser,
    PopulationVector,
    base_generator,
    clamp_populations,
    laser_generator,
    parallel_map,
    phonon_rates,
    steady_state_populations,
)
from sivsim.sequence_parser import Channel, PulseSequence, SequenceTemplate
from sivsim.spectrum import format_float
from sivsim.util import NumericalError

logger = logging.getLogger(__name__)

#: laser ramps are followed for this many rise constants, then treated as settled
RAMP_SPAN = 8
#: number of piecewise-constant steps per rise constant
RAMP_STEPS = 4
EDGE_BINS = 3
PLATEAU_FRACTION = 0.1
PLATEAU_TOLERANCE = 0.05


class ExperimentError(ValueError):
    """Raised when an experiment is configured in a way it cannot be run"""


class SimulationError(NumericalError):
    """Raised when a sequence simulation fails"""

    def __init__(self, message: str, bin_index: Optional[int] = None):
        super().__init__(message)
        self.bin_index = bin_index


class PlateauNotReachedError(NumericalError):
    """Raised when the readout pulse is too short for the fluorescence to settle"""


@dataclass(frozen=True, eq=False)
class TimeTrace:
    """Detected photons per time bin, summed over all repetitions"""

    bin_edges: np.ndarray
    counts: np.ndarray
    expected: np.ndarray
    metadata: Dict[str, str] = field(default_factory=dict)

    HEADER = ("t_start_s", "t_end_s", "counts")

    @property
    def bin_starts(self) -> np.ndarray:
        return self.bin_edges[:-1]

    @property
    def bin_widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    def window(self, start: float, stop: float) -> np.ndarray:
        """Indices of bins lying entirely within [start, stop]"""
        eps = 1e-9 * float(self.bin_widths.min())
        return np.flatnonzero(
            (self.bin_edges[:-1] >= start - eps) & (self.bin_edges[1:] <= stop + eps)
        )

    def to_csv(self, path):
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(self.HEADER)
            for t0, t1, c in zip(self.bin_edges[:-1], self.bin_edges[1:], self.counts):
                writer.writerow((format_float(t0), format_float(t1), format_float(c)))


def _channel_amplitude(
    events: Sequence[Tuple[float, float]], t: float, rise: float
) -> float:
    """Relative intensity of one channel at time t, first-order rise and fall"""
    amplitude = 0.0
    for on, off in events:
        if t < on:
            break
        if rise == 0:
            level = 1.0 if t < off else 0.0
        elif t < off:
            elapsed = t - on
            level = 1.0 if elapsed >= RAMP_SPAN * rise else -math.expm1(-elapsed / rise)
        else:
            width, since = off - on, t - off
            if since >= RAMP_SPAN * rise:
                level = 0.0
            else:
                top = 1.0 if width >= RAMP_SPAN * rise else -math.expm1(-width / rise)
                level = top * math.exp(-since / rise)
        amplitude = max(amplitude, level)
    return amplitude


def _breakpoints(sequence: PulseSequence, edges: np.ndarray) -> np.ndarray:
    points = [edges]
    rise = sequence.rise_fall_time
    ramp = np.arange(1, RAMP_SPAN * RAMP_STEPS + 1) * (rise / RAMP_STEPS) if rise > 0 else []
    for ch in sequence.channels:
        for on, off in ch.events:
            points.append(np.array([on, off]))
            if rise > 0:
                points.append(on + ramp[on + ramp < off])
                points.append(off + ramp)
    t = np.unique(np.concatenate(points))
    return t[(t >= 0) & (t <= sequence.total_duration)]


class SequenceSimulator:
    """
    Propagates populations through piecewise-constant segments of a pulse sequence.

    Propagators and their time integrals are cached by segment length and laser
    amplitudes, so repeated segments (and repeated runs with one simulator) reuse them.
    """

    def __init__(self, scheme: LevelScheme, env: Environment, detector: DetectorModel):
        self.scheme = scheme
        self.env = env
        self.detector = detector
        self.base = base_generator(scheme, env).generator
        self.weights = detector.emission_weights(scheme)
        self._drives: Dict[Laser, np.ndarray] = {}
        self._cache: Dict[Tuple, Tuple[np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()

    def thermal_state(self) -> PopulationVector:
        return steady_state_populations(base_generator(self.scheme, self.env))

    def _drive(self, laser: Laser) -> np.ndarray:
        with self._lock:
            if laser not in self._drives:
                self._drives[laser] = laser_generator(self.scheme, laser)
            return self._drives[laser]

    def _propagator(
        self, channels: Sequence[Channel], amplitudes: Tuple[float, ...], dt: float
    ) -> Tuple[np.ndarray, np.ndarray]:
        key = (tuple(ch.laser for ch in channels), amplitudes, float(f"{dt:.12e}"))
        cached = self._cache.get(key)
        if cached is not None:
            return cached

        n = self.scheme.size
        g = self.base.copy()
        for ch, a in zip(channels, amplitudes):
            g += a * self._drive(ch.laser)
        # expm([[G, I], [0, 0]] dt) holds exp(G dt) and its integral over [0, dt]
        augmented = np.zeros((2 * n, 2 * n))
        augmented[:n, :n] = g
        augmented[:n, n:] = np.eye(n)
        block = scipy.linalg.expm(augmented * dt)
        result = (block[:n, :n], block[:n, n:])
        with self._lock:
            self._cache[key] = result
        return result

    def simulate(
        self, sequence: PulseSequence, initial: Optional[PopulationVector] = None
    ) -> TimeTrace:
        """
        :param sequence: pulse sequence, repeated `sequence.repetitions` times with the
            state carried over between repetitions
        :param initial: populations at t = 0, thermal equilibrium by default
        :raises SimulationError: when the propagation produces an invalid state
        :return: detected counts per bin summed over the repetitions
        """

        sequence.validate_labels(self.scheme)
        width = self.detector.bin_width
        nbins = max(1, math.ceil(sequence.total_duration / width - 1e-9))
        edges = np.arange(nbins + 1) * width
        edges[-1] = sequence.total_duration

        points = _breakpoints(sequence, edges)
        leak = sequence.leakage
        segments = []
        for t0, t1 in zip(points[:-1], points[1:]):
            if t1 - t0 <= 0:
                continue
            mid = (t0 + t1) / 2
            amplitudes = tuple(
                round(max(leak, _channel_amplitude(ch.events, mid, sequence.rise_fall_time)), 12)
                for ch in sequence.channels
            )
            index = int(np.searchsorted(edges, t0, side="right")) - 1
            segments.append((index, t1 - t0, amplitudes))

        p = (initial or self.thermal_state()).values.copy()
        if p.size != self.scheme.size:
            raise SimulationError(
                f"Initial state has {p.size} levels, scheme has {self.scheme.size}"
            )

        expected = np.zeros(nbins)
        for _ in range(sequence.repetitions):
            for index, dt, amplitudes in segments:
                propagator, integral = self._propagator(sequence.channels, amplitudes, dt)
                expected[min(index, nbins - 1)] += self.weights @ (integral @ p)
                try:
                    p = clamp_populations(propagator @ p)
                except NumericalError as e:
                    raise SimulationError(f"bin {index}: {e}", index) from None

        expected += self.detector.background * np.diff(edges) * sequence.repetitions
        if self.detector.shot_noise:
            rng = np.random.default_rng(self.detector.rng_seed)
            counts = rng.poisson(expected).astype(float)
        else:
            counts = expected.copy()

        metadata = {
            "sequence": sequence.fingerprint(),
            "scheme": self.scheme.fingerprint(),
            "rng_seed": str(self.detector.rng_seed),
        }
        logger.debug(f"Simulated {len(segments)} segments x {sequence.repetitions} repetitions")
        return TimeTrace(edges, counts, expected, metadata)


def simulate_sequence(
    scheme: LevelScheme,
    sequence: PulseSequence,
    env: Environment,
    detector: DetectorModel,
    initial: Optional[PopulationVector] = None,
) -> TimeTrace:
    """Simulates one sequence, see `SequenceSimulator.simulate`"""
    return SequenceSimulator(scheme, env, detector).simulate(sequence, initial)


@dataclass(frozen=True)
class LeadingEdge:
    #: mean of the first bins of the readout pulse
    edge: float
    #: mean of the last tenth of the readout pulse
    plateau: float

    @property
    def height(self) -> float:
        return self.edge - self.plateau


def leading_edge(trace: TimeTrace, window: Tuple[float, float]) -> LeadingEdge:
    """
    Height of the fluorescence transient at the start of a readout pulse.

    :param window: (t_on, t_off) of the readout pulse
    :raises ExperimentError: when the window holds too few bins
    :raises PlateauNotReachedError: when the fluorescence still drifts at the end of the pulse
    """

    idx = trace.window(*window)
    tail = max(1, math.ceil(PLATEAU_FRACTION * idx.size))
    if idx.size < EDGE_BINS + 2 * tail:
        raise ExperimentError(
            f"Readout window holds {idx.size} bins, at least {EDGE_BINS + 2 * tail} are needed"
        )

    expected = trace.expected[idx]
    excess = float(expected[:EDGE_BINS].mean() - expected[-tail:].mean())
    drift = abs(float(expected[-tail:].mean() - expected[-2 * tail : -tail].mean()))
    scale = max(abs(excess), 1e-9 * abs(float(expected[-tail:].mean())))
    if drift > PLATEAU_TOLERANCE * scale:
        raise PlateauNotReachedError(
            f"Fluorescence still drifts by {drift:.3e} per bin at the end of the readout "
            f"(leading edge excess {excess:.3e}), lengthen the readout pulse"
        )

    counts = trace.counts[idx]
    return LeadingEdge(edge=float(counts[:EDGE_BINS].mean()), plateau=float(counts[-tail:].mean()))


@dataclass(frozen=True)
class T1Point:
    """
    One delay of a relaxation experiment: `h` is the leading-edge height above the
    readout plateau, `a` the same for a fully thermalized start. `edge` and
    `edge_reference` are the leading edges above the dark-count level, used
    for initialization fidelities.
    """

    tau: float
    h: float
    a: float
    edge: float
    edge_reference: float


def _readout_only(sequence: PulseSequence) -> PulseSequence:
    """The sequence reduced to the last pulse of its readout channel"""
    window = sequence.readout_window()
    readout = replace(sequence.channel(sequence.readout or ""), events=(window,))
    return replace(sequence, channels=(readout,), repetitions=1)


def _dark_level(trace: TimeTrace, detector: DetectorModel, repetitions: int) -> float:
    return float(detector.background * trace.bin_widths[:EDGE_BINS].mean() * repetitions)


def fit_t1(points: Sequence[T1Point], form: ExponentialForm = ExponentialForm.DECAY) -> FitResult:
    """Exponential fit of the leading-edge heights against the delay"""
    return fit_exponential([(p.tau, p.h) for p in points], form)


def edge_fidelity(
    points: Sequence[T1Point],
    form: ExponentialForm = ExponentialForm.DECAY,
    dark_read: bool = False,
) -> Tuple[float, bool]:
    """
    Initialization fidelity from the absolute leading edges: their fit extrapolated to
    zero delay against the edge of a thermal start.

    :return: see `initialization_fidelity`
    """

    fit = fit_exponential([(p.tau, p.edge) for p in points], form)
    sign = 1.0 if form is ExponentialForm.DECAY else -1.0
    h0 = fit["a"] + sign * fit["b"]
    return initialization_fidelity(h0, points[0].edge_reference, dark_read)


def spin_t1_experiment(
    scheme: LevelScheme,
    env: Environment,
    detector: DetectorModel,
    taus: Sequence[float],
    template: SequenceTemplate,
    initial: Optional[PopulationVector] = None,
    variable: str = "tau",
    jobs: int = 1,
) -> List[T1Point]:
    """
    Runs the sequence template once per delay and extracts the readout leading edge.

    The reference height `a` comes from the readout pulse alone, applied to thermal
    equilibrium, which is what any delay much longer than T1 converges to.

    :param taus: delays substituted for `variable` in the template
    :param template: sequence text with a readout channel
    :param jobs: number of worker threads
    :return: one point per delay, in input order
    """

    if len(taus) == 0:
        raise ExperimentError("At least one delay is required")
    simulator = SequenceSimulator(scheme, env, detector)
    start = initial or simulator.thermal_state()

    reference_sequence = _readout_only(template.render(scheme, **{variable: float(taus[0])}))
    reference_trace = simulator.simulate(reference_sequence, simulator.thermal_state())
    reference = leading_edge(reference_trace, reference_sequence.readout_window())
    edge_reference = reference.edge - _dark_level(reference_trace, detector, 1)

    def run(tau: float) -> T1Point:
        sequence = template.render(scheme, **{variable: float(tau)})
        trace = simulator.simulate(sequence, start)
        edge = leading_edge(trace, sequence.readout_window())
        dark = _dark_level(trace, detector, sequence.repetitions)
        reps = sequence.repetitions
        return T1Point(
            tau=float(tau),
            h=edge.height / reps,
            a=reference.height,
            edge=(edge.edge - dark) / reps,
            edge_reference=edge_reference,
        )

    logger.info(f"Running relaxation experiment over {len(taus)} delays")
    return parallel_map(run, [float(t) for t in taus], jobs)


def orbital_t1_sequence(
    gap: float,
    label: str = "D2",
    pulse_width: float = 80e-9,
    saturation: float = 10.0,
    linewidth: float = 94e6,
    rise: float = 1e-9,
    extinction: float = 60.0,
    lead: float = 10e-9,
) -> PulseSequence:
    """Two identical pulses on one laser separated by a dark gap, the second one read out"""
    first = (lead, lead + pulse_width)
    second = (first[1] + gap, first[1] + gap + pulse_width)
    channel = Channel(
        "probe",
        Laser(target=label, saturation=saturation, linewidth=linewidth),
        (first, second),
    )
    return PulseSequence(
        channels=(channel,),
        total_duration=second[1] + lead,
        rise_fall_time=rise,
        extinction=extinction,
        readout="probe",
    )


def orbital_t1_experiment(
    scheme: LevelScheme,
    env: Environment,
    detector: DetectorModel,
    gaps: Sequence[float],
    pulse_width: float = 80e-9,
    saturation: float = 10.0,
    label: str = "D2",
    rise: float = 1e-9,
    jobs: int = 1,
) -> List[T1Point]:
    """
    Orbital relaxation from the recovery of the second of two pulses at zero field.
    The first pulse empties the upper ground branch, during the gap phonons refill it.

    :param gaps: dark gaps between the pulses in seconds
    :raises ExperimentError: when the field is nonzero or a gap is negative
    """

    if scheme.field.magnitude != 0:
        raise ExperimentError("Orbital relaxation is measured at zero field")
    if len(gaps) == 0 or min(gaps) < 0:
        raise ExperimentError("Gaps must be a nonempty sequence of nonnegative times")

    simulator = SequenceSimulator(scheme, env, detector)
    thermal = simulator.thermal_state()

    def build(gap: float) -> PulseSequence:
        return orbital_t1_sequence(gap, label, pulse_width, saturation, rise=rise)

    reference_sequence = _readout_only(build(float(gaps[0])))
    reference_trace = simulator.simulate(reference_sequence, thermal)
    reference = leading_edge(reference_trace, reference_sequence.readout_window())
    edge_reference = reference.edge - _dark_level(reference_trace, detector, 1)

    def run(gap: float) -> T1Point:
        sequence = build(gap)
        trace = simulator.simulate(sequence, thermal)
        edge = leading_edge(trace, sequence.readout_window())
        return T1Point(
            tau=gap,
            h=edge.height,
            a=reference.height,
            edge=edge.edge - _dark_level(trace, detector, 1),
            edge_reference=edge_reference,
        )

    logger.info(f"Running orbital relaxation experiment over {len(gaps)} gaps")
    return parallel_map(run, [float(g) for g in gaps], jobs)


def auto_gap_grid(scheme: LevelScheme, env: Environment, points: int = 12) -> List[float]:
    """
    Gaps spanning five expected orbital relaxation times, starting late enough for the
    excited state to have decayed.
    """

    down, up = phonon_rates(scheme.params.ground_orbital_splitting, env)
    expected = 1 / (down + up)
    start = max(5 * scheme.params.radiative_lifetime, expected / 4)
    return list(np.linspace(start, start + 5 * expected, points))
