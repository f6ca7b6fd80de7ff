# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

"""Density-matrix (Lindblad master equation) model of two lasers driving a Lambda
system, used where ground-state coherence matters."""

import logging
import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from sivsim.analysis import FitResult, fit_lorentzian_dip
from sivsim.detector import DetectorModel
from sivsim.level_model import LevelScheme, Manifold, Transition, TransitionNotFoundError
from sivsim.rate_engine import (
    Environment,
    RateMatrix,
    parallel_map,
    phonon_rates,
    steady_state_populations,
)
from sivsim.spectrum import Spectrum
from sivsim.util import InvariantViolation, NumericalError

logger = logging.getLogger(__name__)

TWO_PI = 2 * math.pi
#: lasers further than this from their transition are rejected
MAX_DETUNING = 10e9
_NULL_TOLERANCE = 1e-11


class LambdaConfigurationError(InvariantViolation):
    """Raised when two transitions do not form a valid Lambda system"""


class DegenerateSteadyStateError(NumericalError):
    """Raised when the Liouvillian has more than one stationary state"""

    def __init__(self, message: str, dimension: int):
        super().__init__(message)
        self.dimension = dimension


class DensityMatrixError(NumericalError):
    """Raised when a density matrix is not Hermitian, not normalized or not positive"""


class ScanMode(Enum):
    #: both lasers move by half of the two-photon detuning in opposite directions
    SYMMETRIC = "symmetric"
    #: the first laser stays put, only the second one is scanned
    PROBE = "probe"


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    values: np.ndarray

    def __post_init__(self):
        rho = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "values", rho)
        if rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
            raise DensityMatrixError(f"Density matrix must be square, got {rho.shape}")
        if np.max(np.abs(rho - rho.conj().T)) > 1e-9:
            raise DensityMatrixError("Density matrix is not Hermitian")
        if abs(np.trace(rho) - 1) > 1e-9:
            raise DensityMatrixError(f"Density matrix has trace {np.trace(rho):.12f}")
        low = float(np.min(np.linalg.eigvalsh((rho + rho.conj().T) / 2)))
        if low < -1e-8:
            raise DensityMatrixError(f"Density matrix has negative eigenvalue {low:.3e}")

    @classmethod
    def pure(cls, state: Sequence[complex]) -> "DensityMatrix":
        psi = np.asarray(state, dtype=complex)
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))

    @classmethod
    def from_vector(cls, vec: np.ndarray, dim: int) -> "DensityMatrix":
        rho = np.asarray(vec, dtype=complex).reshape(dim, dim)
        rho = (rho + rho.conj().T) / 2
        return cls(rho / np.trace(rho).real)

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    @property
    def populations(self) -> np.ndarray:
        return self.values.diagonal().real.copy()

    def population(self, index: int) -> float:
        return float(self.values[index, index].real)

    def coherence(self, i: int, j: int) -> complex:
        return complex(self.values[i, j])

    def vector(self) -> np.ndarray:
        return self.values.reshape(-1)


@dataclass(frozen=True, eq=False)
class Liouvillian:
    """
    Superoperator acting on row-major vectorized density matrices,
    vec(rho)[i * N + j] = rho[i, j].
    """

    matrix: np.ndarray
    dim: int
    #: detected photon rate per unit population of each basis state
    emission: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.matrix.shape != (self.dim**2, self.dim**2):
            raise ValueError(
                f"Superoperator shape {self.matrix.shape} does not match dim {self.dim}"
            )


def build_liouvillian(
    hamiltonian: np.ndarray,
    channels: Sequence[np.ndarray],
    emission: Optional[np.ndarray] = None,
) -> Liouvillian:
    """
    Lindblad superoperator of a Hamiltonian (rad/s) and collapse operators, each
    already scaled by the square root of its rate::

        L = -i (H x I - I x H^T) + sum_k C x C* - 1/2 C^dag C x I - 1/2 I x (C^dag C)^T
    """

    h = np.asarray(hamiltonian, dtype=complex)
    n = h.shape[0]
    eye = np.eye(n)
    mat = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
    for c in channels:
        cdc = c.conj().T @ c
        mat += np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)
    return Liouvillian(mat, n, emission)


def _projector(n: int, i: int, j: int) -> np.ndarray:
    op = np.zeros((n, n), dtype=complex)
    op[i, j] = 1.0
    return op


@dataclass(frozen=True)
class LambdaConfig:
    """
    Two lasers on `leg1` and `leg2`, two transitions sharing their excited level.

    Rabi frequencies are angular (rad/s), detunings are in Hz. In `SYMMETRIC` mode
    the laser on leg 1 sits at `one_photon_detuning - two_photon_detuning / 2`
    and the laser on leg 2 at `one_photon_detuning + two_photon_detuning / 2`
    from their lines. In `PROBE` mode leg 1 stays at `one_photon_detuning` and
    leg 2 sits at `one_photon_detuning + two_photon_detuning`.

    `ground_coherence_rate` is the pure dephasing rate of the ground coherence,
    1 / (2 T2*). With `environment` set, orbital population exchange between the two
    ground levels is included when they lie in different orbital branches, and
    `compose_orbital_dephasing` adds the phonon-limited dephasing of the ground
    branch to `ground_coherence_rate`.
    """

    scheme: LevelScheme
    leg1: str
    leg2: str
    rabi1: float
    rabi2: float
    two_photon_detuning: float = 0.0
    one_photon_detuning: float = 0.0
    ground_coherence_rate: float = 0.0
    environment: Optional[Environment] = None
    compose_orbital_dephasing: bool = False
    full_scheme: bool = False
    scan_mode: ScanMode = ScanMode.SYMMETRIC

    def __post_init__(self):
        try:
            t1, t2 = self.scheme.transition(self.leg1), self.scheme.transition(self.leg2)
        except TransitionNotFoundError as e:
            raise LambdaConfigurationError("leg", str(e.args[0])) from None
        if t1.upper != t2.upper:
            raise LambdaConfigurationError(
                "leg2", f"{self.leg1} and {self.leg2} do not share an excited level"
            )
        if t1.lower == t2.lower:
            raise LambdaConfigurationError(
                "leg2", f"{self.leg1} and {self.leg2} end in the same ground level"
            )
        for name in (
            "rabi1",
            "rabi2",
            "ground_coherence_rate",
        ):
            value = getattr(self, name)
            if not 0 <= value < math.inf:
                raise LambdaConfigurationError(name, f"must be nonnegative and finite, got {value}")
        for name in ("two_photon_detuning", "one_photon_detuning"):
            if not math.isfinite(getattr(self, name)):
                raise LambdaConfigurationError(name, "must be finite")
        for leg, delta in zip((self.leg1, self.leg2), self.atom_detunings):
            if abs(delta) >= MAX_DETUNING:
                raise LambdaConfigurationError(
                    "one_photon_detuning", f"laser on {leg} is {delta:.3e} Hz off resonance"
                )

    @property
    def transitions(self) -> Tuple[Transition, Transition]:
        return self.scheme.transition(self.leg1), self.scheme.transition(self.leg2)

    @property
    def laser_detunings(self) -> Tuple[float, float]:
        """Detunings of both lasers from their (nuclear-averaged) lines in Hz"""
        d, delta = self.one_photon_detuning, self.two_photon_detuning
        if self.scan_mode is ScanMode.PROBE:
            return d, d + delta
        return d - delta / 2, d + delta / 2

    @property
    def atom_detunings(self) -> Tuple[float, float]:
        """Detunings of both lasers from the exact leg transitions in Hz"""
        out = []
        for t, d in zip(self.transitions, self.laser_detunings):
            f_laser = self.scheme.line_frequency(t.electronic_label) + d
            out.append(f_laser - t.frequency)
        return out[0], out[1]

    def dephasing_rate(self) -> float:
        """Total pure dephasing rate of the ground coherence"""
        rate = self.ground_coherence_rate
        if self.compose_orbital_dephasing and self.environment is not None:
            down, up = phonon_rates(
                self.scheme.params.ground_orbital_splitting, self.environment
            )
            lower = self.scheme.levels[self.transitions[0].lower]
            rate += down if lower.manifold is Manifold.GROUND_UPPER else up
        return rate

    def exchange_rates(self) -> Optional[Tuple[float, float]]:
        """Orbital (down, up) rates between the two ground levels in different branches, or None"""
        if self.environment is None:
            return None
        g1, g2 = (self.scheme.levels[t.lower] for t in self.transitions)
        if g1.manifold is g2.manifold:
            return None
        return phonon_rates(self.scheme.params.ground_orbital_splitting, self.environment)


def _minimal_model(
    cfg: LambdaConfig, detector: DetectorModel
) -> Tuple[np.ndarray, List[np.ndarray], np.ndarray]:
    """Three-level model, basis (lower of leg1, lower of leg2, shared excited level)"""

    t1, t2 = cfg.transitions
    scheme = cfg.scheme
    d1, d2 = cfg.atom_detunings
    gamma = scheme.decay_rate(t1.upper)
    branch = t1.spontaneous_rate + t2.spontaneous_rate
    if branch <= 0:
        raise LambdaConfigurationError("leg1", f"{t1.label} and {t2.label} are both dark")

    h = np.zeros((3, 3), dtype=complex)
    h[0, 0] = TWO_PI * d1
    h[1, 1] = TWO_PI * d2
    h[0, 2] = h[2, 0] = cfg.rabi1 / 2
    h[1, 2] = h[2, 1] = cfg.rabi2 / 2

    channels = []
    for k, t in enumerate((t1, t2)):
        rate = gamma * t.spontaneous_rate / branch
        if rate > 0:
            channels.append(math.sqrt(rate) * _projector(3, k, 2))

    dephasing = cfg.dephasing_rate()
    if dephasing > 0:
        op = np.diag([1.0, -1.0, 0.0]).astype(complex)
        channels.append(math.sqrt(dephasing / 2) * op)

    exchange = cfg.exchange_rates()
    if exchange is not None:
        down, up = exchange
        g1 = scheme.levels[t1.lower]
        upper, lower = (0, 1) if g1.manifold is Manifold.GROUND_UPPER else (1, 0)
        if down > 0:
            channels.append(math.sqrt(down) * _projector(3, lower, upper))
        if up > 0:
            channels.append(math.sqrt(up) * _projector(3, upper, lower))

    weight = detector.efficiency * detector.collection_factor(scheme)
    emission = np.array([0.0, 0.0, gamma]) * weight
    return h, channels, emission


def _full_model(
    cfg: LambdaConfig, detector: DetectorModel
) -> Tuple[np.ndarray, List[np.ndarray], np.ndarray]:
    """Every level of the scheme, only the two legs driven"""

    scheme = cfg.scheme
    env = cfg.environment or Environment()
    n = scheme.size
    t1, t2 = cfg.transitions
    d1, d2 = cfg.atom_detunings

    h = np.zeros((n, n), dtype=complex)
    h[t1.lower, t1.lower] = TWO_PI * d1
    h[t2.lower, t2.lower] = TWO_PI * d2
    h[t1.lower, t1.upper] = h[t1.upper, t1.lower] = cfg.rabi1 / 2
    h[t2.lower, t2.upper] = h[t2.upper, t2.lower] = cfg.rabi2 / 2

    channels = []
    for t in scheme.transitions:
        if t.spontaneous_rate > 0:
            channels.append(math.sqrt(t.spontaneous_rate) * _projector(n, t.lower, t.upper))

    ground = phonon_rates(scheme.params.ground_orbital_splitting, env)
    excited = phonon_rates(
        scheme.params.excited_orbital_splitting, env, env.excited_orbital_coupling
    )
    spin_flip = 1 / (2 * env.spin_t1)
    for lvl in scheme.levels:
        if lvl.manifold in (Manifold.GROUND_UPPER, Manifold.EXCITED_UPPER):
            down, up = excited if lvl.is_excited else ground
            partner = scheme.partner(lvl)
            if down > 0:
                channels.append(math.sqrt(down) * _projector(n, partner.index, lvl.index))
            if up > 0:
                channels.append(math.sqrt(up) * _projector(n, lvl.index, partner.index))
        if lvl.spin < 0 and spin_flip > 0:
            up_spin = next(
                other
                for other in scheme.levels_in(lvl.manifold)
                if other.spin > 0 and other.nuclear == lvl.nuclear
            )
            channels.append(math.sqrt(spin_flip) * _projector(n, up_spin.index, lvl.index))
            channels.append(math.sqrt(spin_flip) * _projector(n, lvl.index, up_spin.index))

    dephasing = cfg.dephasing_rate()
    if dephasing > 0:
        op = np.zeros((n, n), dtype=complex)
        op[t1.lower, t1.lower] = 1.0
        op[t2.lower, t2.lower] = -1.0
        channels.append(math.sqrt(dephasing / 2) * op)

    return h, channels, detector.emission_weights(scheme)


def build_lambda_liouvillian(
    cfg: LambdaConfig, detector: Optional[DetectorModel] = None
) -> Liouvillian:
    """
    :param cfg: Lambda configuration
    :param detector: detector used for the emission weights attached to the result
    :return: Liouvillian of the minimal three-level model, or of the whole scheme
        when `cfg.full_scheme` is set
    """

    detector = detector or DetectorModel()
    model = _full_model if cfg.full_scheme else _minimal_model
    h, channels, emission = model(cfg, detector)
    return build_liouvillian(h, channels, emission)


def steady_state_dm(liouvillian: Liouvillian) -> DensityMatrix:
    """
    Stationary density matrix, the null vector of the Liouvillian.

    :raises DegenerateSteadyStateError: when the null space is not one-dimensional
    :raises DensityMatrixError: when the result is not a physical state
    """

    _, s, vh = scipy.linalg.svd(liouvillian.matrix)
    tol = _NULL_TOLERANCE * s[0]
    null = int(np.sum(s <= tol))
    if null > 1:
        raise DegenerateSteadyStateError(
            f"Liouvillian has a {null}-dimensional null space, the steady state is not unique",
            null,
        )
    return DensityMatrix.from_vector(vh[-1].conj(), liouvillian.dim)


def evolve_dm(
    liouvillian: Liouvillian, initial: DensityMatrix, times: Sequence[float]
) -> List[DensityMatrix]:
    """Propagates `initial` from t = 0 with exact matrix exponentials, sampling at `times`"""

    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size == 0 or t[0] < 0 or np.any(np.diff(t) < 0):
        raise ValueError("Sample times must be a nonempty, sorted sequence of nonnegative values")
    if initial.dim != liouvillian.dim:
        raise ValueError(f"Initial state has dim {initial.dim}, Liouvillian {liouvillian.dim}")

    out = []
    vec, last = initial.vector(), 0.0
    for ti in t:
        if ti > last:
            vec = scipy.linalg.expm(liouvillian.matrix * (ti - last)) @ vec
        rho = vec.reshape(liouvillian.dim, liouvillian.dim)
        out.append(DensityMatrix((rho + rho.conj().T) / 2))
        last = ti
    return out


def fluorescence(liouvillian: Liouvillian, rho: DensityMatrix) -> float:
    if liouvillian.emission is None:
        raise ValueError("Liouvillian carries no emission weights")
    return float(liouvillian.emission @ rho.populations)


def cpt_spectrum(
    cfg: LambdaConfig,
    scan: Sequence[float],
    detector: Optional[DetectorModel] = None,
    jobs: int = 1,
) -> Spectrum:
    """
    Steady-state fluorescence as a function of the two-photon detuning.

    :param cfg: Lambda configuration; its `two_photon_detuning` is replaced by the scan values
    :param scan: strictly increasing two-photon detunings in Hz
    :return: spectrum of detected counts per second
    """

    x = np.asarray(scan, dtype=float)
    if x.ndim != 1 or x.size == 0 or np.any(np.diff(x) <= 0):
        raise ValueError("Scan grid must be a nonempty, strictly increasing sequence")
    detector = detector or DetectorModel()

    def point(delta: float) -> float:
        liouvillian = build_lambda_liouvillian(
            replace(cfg, two_photon_detuning=float(delta)), detector
        )
        return fluorescence(liouvillian, steady_state_dm(liouvillian))

    logger.info(f"Scanning {cfg.leg1}/{cfg.leg2} Lambda over {x.size} points")
    return Spectrum(x, np.array(parallel_map(point, list(x), jobs)))


def hyperfine_double_dip(
    cfg: LambdaConfig,
    coupling_A: float,
    scan: Sequence[float],
    detector: Optional[DetectorModel] = None,
    jobs: int = 1,
    incoherent: bool = False,
) -> Spectrum:
    """
    Coherent population trapping with a spin-1/2 nucleus. The hyperfine interaction
    conserves the nuclear spin, so the two nuclear sectors form independent Lambda
    systems whose two-photon resonances are shifted by +-A. Both sectors are equally
    populated and their spectra add up, giving two dips separated by 2 A.

    :param incoherent: add up the rate-equation counterparts of the sectors instead
    """

    if cfg.full_scheme:
        raise LambdaConfigurationError(
            "full_scheme", "hyperfine sectors are solved separately with the minimal model"
        )
    if not coupling_A >= 0:
        raise LambdaConfigurationError("coupling_A", f"must be nonnegative, got {coupling_A}")

    scheme = cfg.scheme.with_hyperfine(coupling_A)
    leg1 = cfg.scheme.transition(cfg.leg1).electronic_label
    leg2 = cfg.scheme.transition(cfg.leg2).electronic_label
    solver = incoherent_spectrum if incoherent else cpt_spectrum
    total: Optional[Spectrum] = None
    for nuclear in ("+", "-"):
        sector = replace(cfg, scheme=scheme, leg1=f"{leg1}:{nuclear}", leg2=f"{leg2}:{nuclear}")
        part = solver(sector, scan, detector, jobs).scaled(0.5)
        total = part if total is None else total + part
    assert total is not None
    return total


def orbital_lambda_spectrum(
    scheme: LevelScheme,
    pump_rabi: float,
    probe_rabi: float,
    grid: Sequence[float],
    env: Environment,
    detector: Optional[DetectorModel] = None,
    pump_label: str = "C2",
    probe_label: str = "D2",
    pump_detuning: float = 0.0,
    ground_coherence_rate: float = 0.0,
    jobs: int = 1,
    incoherent: bool = False,
) -> Spectrum:
    """
    Lambda system across the two ground orbital branches at zero field: a pump on a
    C transition and a probe on the D transition sharing its excited level. Phonon
    population exchange between the branches limits the contrast of the dip.

    :param grid: probe detunings from the probe line in Hz
    :param incoherent: solve the rate-equation counterpart instead, a reference without
        dark state
    :return: spectrum against the probe detuning
    """

    if scheme.field.magnitude != 0:
        raise LambdaConfigurationError(
            "magnitude", "the orbital Lambda system is only defined at zero field"
        )
    x = np.asarray(grid, dtype=float)
    cfg = LambdaConfig(
        scheme=scheme,
        leg1=pump_label,
        leg2=probe_label,
        rabi1=pump_rabi,
        rabi2=probe_rabi,
        one_photon_detuning=pump_detuning,
        ground_coherence_rate=ground_coherence_rate,
        environment=env,
        scan_mode=ScanMode.PROBE,
    )
    solver = incoherent_spectrum if incoherent else cpt_spectrum
    spectrum = solver(cfg, x - pump_detuning, detector, jobs)
    return Spectrum(x, spectrum.counts)


def equivalent_rate_matrix(cfg: LambdaConfig) -> RateMatrix:
    """
    Rate-equation counterpart of the minimal Lambda model obtained by adiabatically
    eliminating the optical coherences. Each leg pumps at::

        W = rabi**2 * g / (2 * (g**2 + (2 pi delta)**2))

    with g the decay rate of the optical coherence. Valid when the ground coherence
    dephases much faster than it is pumped, so that no dark state forms.
    """

    if cfg.full_scheme:
        raise LambdaConfigurationError(
            "full_scheme", "only the minimal model has a rate counterpart"
        )

    t1, t2 = cfg.transitions
    scheme = cfg.scheme
    gamma = scheme.decay_rate(t1.upper)
    branch = t1.spontaneous_rate + t2.spontaneous_rate
    dephasing = cfg.dephasing_rate()

    k = np.zeros((3, 3))
    leaving = [0.0, 0.0]
    exchange = cfg.exchange_rates()
    if exchange is not None:
        in_upper = scheme.levels[t1.lower].manifold is Manifold.GROUND_UPPER
        upper, lower = (0, 1) if in_upper else (1, 0)
        k[lower, upper] = leaving[upper] = exchange[0]
        k[upper, lower] = leaving[lower] = exchange[1]

    for i, (t, rabi, delta) in enumerate(zip((t1, t2), (cfg.rabi1, cfg.rabi2), cfg.atom_detunings)):
        g = gamma / 2 + dephasing / 4 + leaving[i] / 2
        w = rabi**2 * g / (2 * (g**2 + (TWO_PI * delta) ** 2))
        k[2, i] += w
        k[i, 2] += w + gamma * t.spontaneous_rate / branch
    return RateMatrix.from_rates(k)


def incoherent_spectrum(
    cfg: LambdaConfig,
    scan: Sequence[float],
    detector: Optional[DetectorModel] = None,
    jobs: int = 1,
) -> Spectrum:
    """Counterpart of `cpt_spectrum` solved with `equivalent_rate_matrix`, without a dark state"""

    x = np.asarray(scan, dtype=float)
    if x.ndim != 1 or x.size == 0 or np.any(np.diff(x) <= 0):
        raise ValueError("Scan grid must be a nonempty, strictly increasing sequence")
    detector = detector or DetectorModel()
    t1 = cfg.transitions[0]
    weight = (
        cfg.scheme.decay_rate(t1.upper)
        * detector.efficiency
        * detector.collection_factor(cfg.scheme)
    )

    def point(delta: float) -> float:
        rates = equivalent_rate_matrix(replace(cfg, two_photon_detuning=float(delta)))
        return weight * steady_state_populations(rates)[2]

    return Spectrum(x, np.array(parallel_map(point, list(x), jobs)))


def ground_coherence_rate_for_t2_star(t2_star: float) -> float:
    """Dephasing rate 1 / (2 T2*) giving a zero-power dip FWHM of 1 / (2 pi T2*) in Hz"""
    if not t2_star > 0:
        raise LambdaConfigurationError("t2_star", f"must be positive, got {t2_star}")
    return 1 / (2 * t2_star)


def relative_spectrum(spectrum: Spectrum, reference: Spectrum) -> Spectrum:
    """Ratio of a coherent spectrum to its incoherent reference, 1 where the reference is dark"""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(reference.counts > 0, spectrum.counts / reference.counts, 1.0)
    return Spectrum(spectrum.grid, ratio)


@dataclass(frozen=True)
class DipPoint:
    probe_rabi: float
    #: probe saturation parameter 2 rabi**2 / gamma**2
    power: float
    spectrum: Spectrum
    fit: FitResult
    reference: Optional[Spectrum] = None


def dip_power_series(
    cfg: LambdaConfig,
    probe_rabis: Sequence[float],
    scan: Sequence[float],
    detector: Optional[DetectorModel] = None,
    quadratic_baseline: bool = True,
    jobs: int = 1,
    normalize: bool = True,
) -> List[DipPoint]:
    """
    Fits the dark-resonance dip once per probe Rabi frequency (angular) on leg 2.

    :param normalize: fit the ratio to the incoherent spectrum, which removes the
        one-photon background; depth and contrast are then relative to that background
    :raises FitError: when a spectrum holds no fittable dip
    """

    gamma = cfg.scheme.decay_rate(cfg.transitions[0].upper)
    out = []
    for rabi in probe_rabis:
        point_cfg = replace(cfg, rabi2=float(rabi))
        spectrum = cpt_spectrum(point_cfg, scan, detector, jobs)
        reference = None
        fitted = spectrum
        if normalize:
            reference = incoherent_spectrum(point_cfg, scan, detector, jobs)
            fitted = relative_spectrum(spectrum, reference)
        fit = fit_lorentzian_dip(fitted, quadratic_baseline)
        logger.info(
            f"Probe Rabi {rabi / TWO_PI:.3e} Hz: dip FWHM {fit['fwhm']:.4e} Hz, "
            f"contrast {fit['contrast']:.3e}"
        )
        out.append(
            DipPoint(float(rabi), 2 * float(rabi) ** 2 / gamma**2, spectrum, fit, reference)
        )
    return out
