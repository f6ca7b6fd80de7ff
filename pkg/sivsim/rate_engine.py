# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

"""Classical rate-equation model of the level scheme: generator construction,
steady states, time evolution and excitation spectra."""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, List, Optional, Sequence, Tuple, TypeVar

import marshmallow_dataclass
import numpy as np
import scipy.linalg
from scipy import constants
from scipy.integrate import solve_ivp
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from sivsim.common_serdes import (
    Frequency,
    MarshmallowDataclassExtensions,
    Ratio,
    Temperature,
    Time,
    ext_field,
)
from sivsim.detector import DetectorModel
from sivsim.level_model import LevelScheme, Manifold, TransitionNotFoundError
from sivsim.spectrum import Spectrum
from sivsim.util import InvariantViolation, NumericalError

logger = logging.getLogger(__name__)

#: negative populations down to this value are silently clamped to zero
CLAMP_SILENT = 1e-9
#: populations below this value are an error
CLAMP_LIMIT = -1e-6
#: column sums of a generator must vanish to this fraction of its largest rate
GENERATOR_TOLERANCE = 1e-12


class RateConfigurationError(InvariantViolation):
    """Raised when lasers or the environment are configured incorrectly"""


class SteadyStateError(NumericalError):
    """Raised when a steady state cannot be determined"""


class IntegrationError(NumericalError):
    """Raised when the time integration of the rate equations fails"""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} (at t = {time:.6e} s)")
        self.time = time


class NegativePopulationError(NumericalError):
    """Raised when a population vector has significantly negative entries"""


def bose_occupation(frequency: float, temperature: float) -> float:
    """Mean phonon number of a mode with the given frequency (Hz) at the given temperature (K)"""
    x = constants.h * frequency / (constants.k * temperature)
    if x > 700:
        return 0.0
    return 1 / math.expm1(x)


def orbital_coupling_for_t1(t1: float, temperature: float, splitting: float) -> float:
    """
    Phonon coupling strength that gives the requested orbital relaxation time.
    The imbalance between the two orbital branches relaxes at `down + up = coupling * (2n + 1)`.
    """
    return 1 / (t1 * (2 * bose_occupation(splitting, temperature) + 1))


DEFAULT_ORBITAL_T1 = 38e-9
DEFAULT_ORBITAL_COUPLING = orbital_coupling_for_t1(DEFAULT_ORBITAL_T1, 4.5, 47e9)


@marshmallow_dataclass.dataclass(frozen=True)
class Environment(MarshmallowDataclassExtensions):
    """
    Thermal environment. `orbital_coupling` and `excited_orbital_coupling` are the
    zero-temperature phonon relaxation rates (Hz) between the orbital branches of the
    ground and excited manifolds. Set `spin_t1_from_angle` to add a spin relaxation
    channel proportional to the mixing fraction.
    """

    temperature: Temperature = ext_field(4.5)
    orbital_coupling: Frequency = ext_field(DEFAULT_ORBITAL_COUPLING)
    excited_orbital_coupling: Frequency = ext_field(1e9)
    spin_t1: Time = ext_field(2.4e-3)
    spin_t1_from_angle: bool = ext_field(False)

    def __post_init__(self):
        for name in ("temperature", "orbital_coupling", "excited_orbital_coupling", "spin_t1"):
            value = getattr(self, name)
            if math.isnan(value):
                raise RateConfigurationError(name, "must not be NaN")
        if not 0 < self.temperature < math.inf:
            raise RateConfigurationError(
                "temperature", f"must be positive and finite, got {self.temperature}"
            )
        for name in ("orbital_coupling", "excited_orbital_coupling"):
            if not 0 <= getattr(self, name) < math.inf:
                raise RateConfigurationError(name, "must be nonnegative and finite")
        if not self.spin_t1 > 0:
            raise RateConfigurationError("spin_t1", f"must be positive, got {self.spin_t1}")


@marshmallow_dataclass.dataclass(frozen=True)
class Laser(MarshmallowDataclassExtensions):
    """
    A continuous-wave laser tuned `detuning` Hz away from the transition (or line)
    named by `target`. The saturation parameter scales the stimulated rate on every
    transition relative to its own spontaneous rate.
    """

    target: str
    detuning: Frequency = ext_field(0.0)
    saturation: Ratio = ext_field(1.0)
    linewidth: Frequency = ext_field(94e6)

    def __post_init__(self):
        if not math.isfinite(self.detuning):
            raise RateConfigurationError("detuning", "must be finite")
        if not 0 <= self.saturation < math.inf:
            raise RateConfigurationError(
                "saturation", f"must be nonnegative and finite, got {self.saturation}"
            )
        if not 0 < self.linewidth < math.inf:
            raise RateConfigurationError(
                "linewidth", f"must be positive and finite, got {self.linewidth}"
            )

    def frequency(self, scheme: LevelScheme) -> float:
        """ZPL offset of the laser in Hz"""
        try:
            return scheme.line_frequency(self.target) + self.detuning
        except TransitionNotFoundError as e:
            raise RateConfigurationError("target", str(e.args[0])) from None


def phonon_rates(
    splitting: float, env: Environment, coupling: Optional[float] = None
) -> Tuple[float, float]:
    """
    Detailed-balance phonon rates between two orbital branches.

    :param splitting: orbital splitting in Hz
    :param env: environment providing the temperature and, by default, the coupling
    :param coupling: coupling to use instead of `env.orbital_coupling`
    :return: (down, up) rates in Hz, down = coupling * (n + 1), up = coupling * n
    """

    chi = env.orbital_coupling if coupling is None else coupling
    n = bose_occupation(splitting, env.temperature)
    return chi * (n + 1), chi * n


@dataclass(frozen=True, eq=False)
class RateMatrix:
    """
    Generator of the population dynamics dp/dt = G p.
    G[j, i] is the rate from level i to level j, columns sum to zero.
    """

    generator: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.generator, dtype=float)
        object.__setattr__(self, "generator", g)
        if g.ndim != 2 or g.shape[0] != g.shape[1]:
            raise ValueError(f"Generator must be square, got shape {g.shape}")
        if not np.all(np.isfinite(g)):
            raise RateConfigurationError("generator", "contains non-finite rates")
        off = g - np.diag(np.diag(g))
        if np.any(off < 0):
            raise RateConfigurationError("generator", "has negative off-diagonal rates")
        scale = max(float(np.max(np.abs(g))), 1.0)
        if np.max(np.abs(g.sum(axis=0))) > GENERATOR_TOLERANCE * scale:
            raise RateConfigurationError("generator", "columns do not sum to zero")

    @classmethod
    def from_rates(cls, rates: np.ndarray) -> "RateMatrix":
        """Builds a generator from a matrix of transfer rates, rates[j, i] being i -> j"""
        k = np.array(rates, dtype=float)
        np.fill_diagonal(k, 0.0)
        return cls(k - np.diag(k.sum(axis=0)))

    @property
    def size(self) -> int:
        return self.generator.shape[0]

    def rate(self, src: int, dst: int) -> float:
        return float(self.generator[dst, src])

    def __add__(self, other: "RateMatrix") -> "RateMatrix":
        return RateMatrix(self.generator + other.generator)

    def with_drive(self, drives: Iterable[Tuple[float, np.ndarray]]) -> "RateMatrix":
        """Adds amplitude-weighted laser generators to this one"""
        g = self.generator.copy()
        for amplitude, d in drives:
            g += amplitude * d
        return RateMatrix(g)


@dataclass(frozen=True, eq=False)
class PopulationVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", v)
        if v.ndim != 1:
            raise ValueError("Population vector must be one-dimensional")
        if np.any(v < -CLAMP_SILENT):
            raise NegativePopulationError(f"Negative population {v.min():.3e}")
        if abs(v.sum() - 1) > 1e-9:
            raise NegativePopulationError(f"Populations sum to {v.sum():.12f}, expected 1")

    @classmethod
    def uniform(cls, size: int) -> "PopulationVector":
        return cls(np.full(size, 1 / size))

    @classmethod
    def clamped(cls, values: np.ndarray) -> "PopulationVector":
        return cls(clamp_populations(values))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, index: int) -> float:
        return float(self.values[index])

    def manifold(self, scheme: LevelScheme, manifold: Manifold) -> float:
        return float(sum(self.values[lvl.index] for lvl in scheme.levels_in(manifold)))

    def spin(self, scheme: LevelScheme, spin: int, excited: bool = False) -> float:
        return float(
            sum(
                self.values[lvl.index]
                for lvl in scheme.levels
                if lvl.spin == spin and lvl.is_excited == excited
            )
        )


def clamp_populations(values: np.ndarray) -> np.ndarray:
    """
    Clamps small negative entries caused by round-off and renormalizes.

    :raises NegativePopulationError: when an entry lies below `CLAMP_LIMIT`
    """

    v = np.asarray(values, dtype=float)
    low = float(v.min()) if v.size else 0.0
    if low < CLAMP_LIMIT:
        raise NegativePopulationError(f"Population {low:.3e} is below {CLAMP_LIMIT:.0e}")
    if low < -CLAMP_SILENT:
        logger.warning(f"Clamping negative population {low:.3e}")
    v = np.clip(v, 0.0, None)
    return v / v.sum()


def base_generator(scheme: LevelScheme, env: Environment) -> RateMatrix:
    """
    Laser-independent part of the dynamics: spontaneous emission, orbital
    relaxation of both manifolds and spin relaxation within every orbital branch.
    """

    n = scheme.size
    k = np.zeros((n, n))
    for t in scheme.transitions:
        k[t.lower, t.upper] += t.spontaneous_rate

    ground = phonon_rates(scheme.params.ground_orbital_splitting, env)
    excited = phonon_rates(
        scheme.params.excited_orbital_splitting, env, env.excited_orbital_coupling
    )
    for lvl in scheme.levels:
        if lvl.manifold in (Manifold.GROUND_UPPER, Manifold.EXCITED_UPPER):
            down, up = excited if lvl.is_excited else ground
            partner = scheme.partner(lvl)
            k[partner.index, lvl.index] += down
            k[lvl.index, partner.index] += up

    spin_flip = 1 / (2 * env.spin_t1)
    angle_flip = scheme.mixing_fraction * sum(ground) / 2 if env.spin_t1_from_angle else 0.0
    for down in scheme.levels:
        if down.spin > 0:
            continue
        up = next(
            lvl
            for lvl in scheme.levels_in(down.manifold)
            if lvl.spin > 0 and lvl.nuclear == down.nuclear
        )
        rate = spin_flip + (0.0 if down.is_excited else angle_flip)
        k[up.index, down.index] += rate
        k[down.index, up.index] += rate

    return RateMatrix.from_rates(k)


def lorentzian(detuning: float, fwhm: float) -> float:
    return 1 / (1 + (2 * detuning / fwhm) ** 2)


def laser_generator(scheme: LevelScheme, laser: Laser) -> np.ndarray:
    """
    Generator contribution of a laser at unit amplitude. Each transition is driven
    up and down with rate `saturation * spontaneous_rate * L(delta)`, L being a
    Lorentzian of the laser linewidth evaluated at the laser-transition detuning.
    """

    f_laser = laser.frequency(scheme)
    n = scheme.size
    k = np.zeros((n, n))
    for t in scheme.transitions:
        profile = lorentzian(f_laser - t.frequency, laser.linewidth)
        w = laser.saturation * t.spontaneous_rate * profile
        k[t.upper, t.lower] += w
        k[t.lower, t.upper] += w
    return RateMatrix.from_rates(k).generator


def build_rate_matrix(
    scheme: LevelScheme, lasers: Sequence[Laser], env: Environment
) -> RateMatrix:
    """
    :param scheme: level scheme
    :param lasers: continuous-wave lasers, all at full amplitude
    :param env: thermal environment
    :raises RateConfigurationError: when a laser targets an unknown transition
    :return: generator of the population dynamics
    """

    base = base_generator(scheme, env)
    return base.with_drive((1.0, laser_generator(scheme, laser)) for laser in lasers)


def _solve_stationary(g: np.ndarray) -> np.ndarray:
    n = g.shape[0]
    a = np.vstack([g, np.ones((1, n))])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    p, *_ = np.linalg.lstsq(a, b, rcond=None)
    return p


def steady_state_populations(rates: RateMatrix) -> PopulationVector:
    """
    Stationary populations of the generator.

    A reducible generator has one stationary distribution per closed class of levels.
    In that case the initial population is taken as uniform and every closed class
    receives the probability that eventually flows into it.

    :raises SteadyStateError: when the stationary distribution cannot be determined
    :return: normalized population vector
    """

    g = rates.generator
    n = rates.size
    adjacency = csr_matrix((g.T > 0) & ~np.eye(n, dtype=bool))
    ncomp, labels = connected_components(adjacency, directed=True, connection="strong")

    if ncomp == 1:
        return PopulationVector.clamped(_solve_stationary(g))

    closed = []
    for c in range(ncomp):
        members = np.flatnonzero(labels == c)
        outside = np.flatnonzero(labels != c)
        if not np.any(g[np.ix_(outside, members)] > 0):
            closed.append(members)

    if len(closed) > 1:
        logger.warning(
            f"Rate generator has {len(closed)} closed classes of levels, "
            "weighting their steady states by a uniform initial population"
        )

    uniform = np.full(n, 1 / n)
    transient = np.flatnonzero(~np.isin(np.arange(n), np.concatenate(closed)))
    occupation = np.zeros(0)
    if transient.size:
        try:
            occupation = np.linalg.solve(g[np.ix_(transient, transient)], -uniform[transient])
        except np.linalg.LinAlgError:
            names = ", ".join(str(i) for i in transient)
            raise SteadyStateError(f"Cannot resolve the flow out of levels {names}") from None

    p = np.zeros(n)
    for members in closed:
        mass = uniform[members].sum()
        if transient.size:
            mass += float(g[np.ix_(members, transient)].sum(axis=0) @ occupation)
        p[members] = mass * clamp_populations(_solve_stationary(g[np.ix_(members, members)]))

    return PopulationVector.clamped(p)


def evolve_populations(
    rates: RateMatrix,
    initial: PopulationVector,
    times: Sequence[float],
    method: str = "radau",
    rtol: float = 1e-8,
    atol: float = 1e-12,
) -> List[PopulationVector]:
    """
    Integrates dp/dt = G p from t = 0 and samples the solution at `times`.

    :param method: "radau" for the implicit stiff integrator or "expm" for
        exact matrix exponentials between consecutive sample times
    :raises IntegrationError: when the integrator fails
    :return: one population vector per requested time
    """

    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0:
        raise ValueError("At least one sample time is required")
    if t[0] < 0 or np.any(np.diff(t) < 0):
        raise ValueError("Sample times must be nonnegative and sorted")
    if len(initial) != rates.size:
        raise ValueError(f"Initial state has {len(initial)} levels, generator has {rates.size}")

    g = rates.generator
    p0 = initial.values

    if method == "expm":
        out = []
        p, last = p0, 0.0
        for ti in t:
            if ti > last:
                p = clamp_populations(scipy.linalg.expm(g * (ti - last)) @ p)
            out.append(PopulationVector(p))
            last = ti
        return out

    if method != "radau":
        raise ValueError(f"Unknown integration method '{method}'")

    if t[-1] == 0:
        return [PopulationVector(p0) for _ in t]

    sol = solve_ivp(
        lambda _, p: g @ p,
        (0.0, float(t[-1])),
        p0,
        method="Radau",
        t_eval=t,
        jac=g,
        rtol=rtol,
        atol=atol,
    )
    if not sol.success:
        reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(sol.message, reached)
    return [PopulationVector(clamp_populations(sol.y[:, k])) for k in range(sol.y.shape[1])]


def fluorescence_rate(
    populations: PopulationVector, scheme: LevelScheme, detector: DetectorModel
) -> float:
    """Detected photon rate (Hz) for the given populations"""
    return float(detector.emission_weights(scheme) @ populations.values)


T = TypeVar("T")
U = TypeVar("U")


def parallel_map(func: Callable[[T], U], items: Sequence[T], jobs: int = 1) -> List[U]:
    """Maps `func` over `items`, in a thread pool when `jobs` > 1, keeping the input order"""
    if jobs <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(func, items))


def excitation_spectrum(
    scheme: LevelScheme,
    probe: Laser,
    grid: Sequence[float],
    pump: Optional[Laser],
    env: Environment,
    detector: DetectorModel,
    jobs: int = 1,
) -> Spectrum:
    """
    Steady-state fluorescence while the probe is scanned across `grid`.

    :param probe: probe laser; the grid values replace its detuning from `probe.target`
        and its saturation must be positive
    :param grid: strictly increasing detunings in Hz
    :param pump: optional second laser kept on during the whole scan
    :param jobs: number of worker threads
    :raises RateConfigurationError: when the probe saturation is not positive
    :return: spectrum of detected counts per second
    """

    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size == 0 or np.any(np.diff(x) <= 0):
        raise ValueError("Scan grid must be a nonempty, strictly increasing sequence")
    if not probe.saturation > 0:
        raise RateConfigurationError(
            "saturation", f"probe saturation must be positive, got {probe.saturation}"
        )

    base = base_generator(scheme, env)
    if pump is not None:
        base = base.with_drive([(1.0, laser_generator(scheme, pump))])
    # resolve the probe target once so that a bad label fails before the scan
    probe.frequency(scheme)
    weights = detector.emission_weights(scheme)

    def point(detuning: float) -> float:
        drive = laser_generator(scheme, replace(probe, detuning=float(detuning)))
        p = steady_state_populations(base.with_drive([(1.0, drive)]))
        return float(weights @ p.values)

    logger.info(f"Scanning {probe.target} over {x.size} points")
    return Spectrum(x, np.array(parallel_map(point, list(x), jobs)))


def pump_probe_spectrum(
    scheme: LevelScheme,
    probe: Laser,
    grid: Sequence[float],
    pump_label: str,
    env: Environment,
    detector: DetectorModel,
    pump_saturation: float = 0.1,
    pump_detuning: float = 0.0,
    jobs: int = 1,
) -> Spectrum:
    """`excitation_spectrum` with a pump of the probe's linewidth parked on `pump_label`"""
    pump = Laser(
        target=pump_label,
        detuning=pump_detuning,
        saturation=pump_saturation,
        linewidth=probe.linewidth,
    )
    return excitation_spectrum(scheme, probe, grid, pump, env, detector, jobs)
