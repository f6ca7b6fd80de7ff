# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

"""Curve fitting and feature extraction for simulated spectra and time traces."""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import marshmallow_dataclass
import numpy as np
from scipy import optimize, signal, stats

from sivsim.common_serdes import (
    MarshmallowDataclassExtensions,
    StringList,
    ext_field,
    flatten_dotted,
    unflatten_dotted,
)
from sivsim.spectrum import Spectrum, format_float
from sivsim.util import NumericalError

logger = logging.getLogger(__name__)

MAX_EVALUATIONS = 200
TAU_UNIDENTIFIABLE = "tau_unidentifiable"
NOT_CONVERGED = "not_converged"


class FitError(NumericalError):
    """Raised when a fit cannot be performed or diverges to non-finite parameters"""


class DipShapeError(FitError):
    """Raised when the data does not contain a dip"""


class ExponentialForm(Enum):
    #: y = a + b * exp(-x / tau)
    DECAY = "decay"
    #: y = a - b * exp(-x / tau)
    RECOVERY = "recovery"


@marshmallow_dataclass.dataclass(frozen=True)
class FitResult(MarshmallowDataclassExtensions):
    """Best-fit parameters with one-sigma standard errors"""

    model: str
    params: Dict[str, float]
    std_errors: Dict[str, float]
    residual: float
    iterations: int
    converged: bool
    flags: StringList = ext_field(list)

    def __getitem__(self, name: str) -> float:
        return self.params[name]

    def error(self, name: str) -> float:
        return self.std_errors[name]

    def to_text(self) -> str:
        """Serializes the result as `key = value` lines"""
        lines = []
        for key, value in flatten_dotted(self.to_dict()).items():
            if isinstance(value, float):
                value = format_float(value)
            elif isinstance(value, bool):
                value = "true" if value else "false"
            elif isinstance(value, list):
                value = ",".join(value)
            lines.append(f"{key} = {value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "FitResult":
        flat: Dict[str, object] = {}
        for line in text.splitlines():
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, _, value = line.partition("=")
            flat[key.strip()] = value.strip()
        tree = unflatten_dotted(flat)
        try:
            return cls(
                model=str(tree["model"]),
                params={k: float(v) for k, v in tree.get("params", {}).items()},
                std_errors={k: float(v) for k, v in tree.get("std_errors", {}).items()},
                residual=float(tree["residual"]),
                iterations=int(tree["iterations"]),
                converged=tree["converged"] == "true",
                flags=[f for f in str(tree.get("flags", "")).split(",") if f],
            )
        except (KeyError, ValueError) as e:
            raise FitError(f"Malformed fit result: {e}") from None


def _points(points: Sequence[Tuple[float, float]]) -> Tuple[np.ndarray, np.ndarray]:
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise FitError("Expected a sequence of (x, y) pairs")
    if not np.all(np.isfinite(arr)):
        raise FitError("Data contains non-finite values")
    return arr[:, 0], arr[:, 1]


def _scale(values: np.ndarray) -> float:
    s = float(np.max(np.abs(values)))
    return s if s > 0 else 1.0


def _least_squares(
    residuals: Callable[[np.ndarray], np.ndarray],
    jacobian: Callable[[np.ndarray], np.ndarray],
    start: np.ndarray,
    max_evaluations: int = MAX_EVALUATIONS,
) -> Tuple[np.ndarray, np.ndarray, float, int, bool]:
    """Levenberg-Marquardt fit

    :return: (params, covariance, residual norm, evaluations, converged)
    """

    result = optimize.least_squares(
        residuals,
        start,
        jac=jacobian,
        method="lm",
        ftol=1e-14,
        xtol=1e-14,
        gtol=1e-14,
        max_nfev=max_evaluations,
    )
    m, n = result.fun.size, result.x.size
    dof = max(m - n, 1)
    variance = 2 * result.cost / dof
    try:
        cov = np.linalg.inv(result.jac.T @ result.jac) * variance
    except np.linalg.LinAlgError:
        cov = np.full((n, n), np.inf)
    return result.x, cov, float(np.linalg.norm(result.fun)), int(result.nfev), result.status > 0


def _std(cov: np.ndarray, i: int) -> float:
    value = cov[i, i]
    return float(math.sqrt(value)) if np.isfinite(value) and value >= 0 else math.inf


def fit_exponential(
    points: Sequence[Tuple[float, float]],
    form: ExponentialForm = ExponentialForm.DECAY,
    max_evaluations: int = MAX_EVALUATIONS,
) -> FitResult:
    """
    Least-squares fit of `a + b exp(-x / tau)` (decay) or `a - b exp(-x / tau)` (recovery).

    Data with no variation is reported with b = 0 and the `tau_unidentifiable` flag.
    A fit that does not converge within `max_evaluations` is returned with its last
    estimate, `converged = False` and the `not_converged` flag.

    :param points: at least four (x, y) pairs with x >= 0
    :raises FitError: on invalid data or when the parameters diverge
    """

    x, y = _points(points)
    if x.size < 4:
        raise FitError(f"At least 4 points are required, got {x.size}")
    if np.any(x < 0):
        raise FitError("Abscissae must be nonnegative")
    if np.unique(x).size < 3:
        raise FitError("At least 3 distinct abscissae are required")

    xs, ys = _scale(x), _scale(y)
    u, v = x / xs, y / ys
    sign = 1.0 if form is ExponentialForm.DECAY else -1.0
    model = f"exponential_{form.value}"

    if np.ptp(v) <= 1e-12:
        return FitResult(
            model=model,
            params={"a": float(np.mean(y)), "b": 0.0, "tau": float(np.ptp(x) / 3)},
            std_errors={"a": float(np.std(y) / math.sqrt(y.size)), "b": 0.0, "tau": math.inf},
            residual=float(np.linalg.norm(y - np.mean(y))),
            iterations=0,
            converged=True,
            flags=[TAU_UNIDENTIFIABLE],
        )

    order = np.argsort(u)
    a0 = float(v[order[-1]])
    b0 = sign * float(v[order[0]] - a0) or 1e-3
    start = np.array([a0, b0, max(float(np.ptp(u)) / 3, 1e-6)])

    def residuals(p: np.ndarray) -> np.ndarray:
        a, b, tau = p
        return a + sign * b * np.exp(-u / tau) - v

    def jacobian(p: np.ndarray) -> np.ndarray:
        _, b, tau = p
        e = np.exp(-u / tau)
        return np.column_stack([np.ones_like(u), sign * e, sign * b * e * u / tau**2])

    params, cov, residual, nfev, converged = _least_squares(
        residuals, jacobian, start, max_evaluations
    )
    if not np.all(np.isfinite(params)):
        raise FitError("Exponential fit diverged to non-finite parameters")

    a, b, tau = params
    scales = np.array([ys, ys, xs])
    flags = []
    if not converged:
        logger.warning(f"Exponential fit did not converge within {max_evaluations} evaluations")
        flags.append(NOT_CONVERGED)
    elif tau <= 0:
        raise FitError(f"Exponential fit converged to a nonpositive time constant {tau * xs:.3e}")
    if tau <= 0 or tau > 10 * np.ptp(u) or abs(b) < 1e-9:
        flags.append(TAU_UNIDENTIFIABLE)
    return FitResult(
        model=model,
        params={"a": float(a * ys), "b": float(b * ys), "tau": float(tau * xs)},
        std_errors={name: _std(cov, i) * scales[i] for i, name in enumerate(("a", "b", "tau"))},
        residual=residual * ys,
        iterations=nfev,
        converged=converged,
        flags=flags,
    )


def _half_width_guess(u: np.ndarray, v: np.ndarray, baseline: float, center: int) -> float:
    depth = baseline - v[center]
    below = np.flatnonzero(v < baseline - depth / 2)
    if below.size < 2:
        return float(np.ptp(u)) / 20
    return max(float(u[below[-1]] - u[below[0]]), float(np.min(np.diff(u)))) / 2


def fit_lorentzian_dip(spectrum: Spectrum, quadratic_baseline: bool = False) -> FitResult:
    """
    Fits `baseline - depth / (1 + ((x - center) / (fwhm / 2)) ** 2)`, optionally with
    additional `slope * (x - center) + curvature * (x - center) ** 2` terms absorbing the
    slow background of the one-photon resonance.

    :raises DipShapeError: when the best fit has no dip
    :raises FitError: when the parameters diverge, a fit that runs out of evaluations
        is returned with the `not_converged` flag
    """

    x, y = spectrum.grid, spectrum.counts
    if x.size < 5:
        raise FitError(f"At least 5 points are required, got {x.size}")

    x0 = float(np.mean(x))
    xs = _scale(x - x0)
    ys = _scale(y)
    u, v = (x - x0) / xs, y / ys

    edge = max(1, u.size // 10)
    outer = np.concatenate([np.arange(edge), np.arange(u.size - edge, u.size)])
    if quadratic_baseline and outer.size >= 3:
        # the background is estimated from the wings, the dip may sit on top of a peak
        background = np.polyfit(u[outer], v[outer], 2)
    else:
        background = np.array([0.0, 0.0, float(np.mean(v[outer]))])
    excess = v - np.polyval(background, u)
    center_index = int(np.argmin(excess))
    depth0 = -float(excess[center_index])
    if depth0 <= 0:
        raise DipShapeError("Spectrum has no dip below its edges")
    c0 = float(u[center_index])
    baseline0 = float(np.polyval(background, c0))
    hw0 = _half_width_guess(u, excess + baseline0, baseline0, center_index)

    start = [baseline0, depth0, c0, hw0]
    if quadratic_baseline:
        start.extend([float(2 * background[0] * c0 + background[1]), float(background[0])])

    def residuals(p: np.ndarray) -> np.ndarray:
        baseline, depth, c, hw = p[:4]
        r = baseline - depth / (1 + ((u - c) / hw) ** 2) - v
        if quadratic_baseline:
            r = r + p[4] * (u - c) + p[5] * (u - c) ** 2
        return r

    def jacobian(p: np.ndarray) -> np.ndarray:
        _, depth, c, hw = p[:4]
        z = (u - c) / hw
        den = 1 + z**2
        cols = [
            np.ones_like(u),
            -1 / den,
            -depth * 2 * z / (hw * den**2),
            -depth * 2 * z**2 / (hw * den**2),
        ]
        if quadratic_baseline:
            cols[2] = cols[2] - p[4] - 2 * p[5] * (u - c)
            cols.extend([u - c, (u - c) ** 2])
        return np.column_stack(cols)

    params, cov, residual, nfev, converged = _least_squares(
        residuals, jacobian, np.array(start)
    )
    if not np.all(np.isfinite(params)):
        raise FitError("Lorentzian fit diverged to non-finite parameters")
    if not converged:
        logger.warning(f"Lorentzian fit did not converge within {MAX_EVALUATIONS} evaluations")
    if params[1] <= 0:
        raise DipShapeError(f"Best fit has a peak instead of a dip (depth {params[1] * ys:.3e})")

    names = ["baseline", "depth", "center", "fwhm"]
    scales = [ys, ys, xs, 2 * xs]
    values = [params[0] * ys, params[1] * ys, params[2] * xs + x0, 2 * abs(params[3]) * xs]
    if quadratic_baseline:
        names.extend(["slope", "curvature"])
        scales.extend([ys / xs, ys / xs**2])
        values.extend([params[4] * ys / xs, params[5] * ys / xs**2])

    result_params = dict(zip(names, map(float, values)))
    result_params["contrast"] = result_params["depth"] / result_params["baseline"]
    errors = {name: _std(cov, i) * scales[i] for i, name in enumerate(names)}
    errors["contrast"] = (
        errors["depth"] / abs(result_params["baseline"]) if result_params["baseline"] else math.inf
    )
    return FitResult(
        model="lorentzian_dip",
        params=result_params,
        std_errors=errors,
        residual=residual * ys,
        iterations=nfev,
        converged=converged,
        flags=[] if converged else [NOT_CONVERGED],
    )


def fit_linear(points: Sequence[Tuple[float, float]]) -> FitResult:
    """
    Ordinary least-squares line `slope * x + intercept`.

    The coefficient of determination is reported as the `r_squared` parameter,
    without a standard error.

    :raises FitError: with fewer than two points or when all abscissae are equal
    """

    x, y = _points(points)
    if x.size < 2:
        raise FitError(f"At least 2 points are required, got {x.size}")
    if np.ptp(x) == 0:
        raise FitError("All abscissae are equal, the slope is undetermined")

    result = stats.linregress(x, y)
    residual = float(np.linalg.norm(y - (result.intercept + result.slope * x)))
    if x.size == 2:
        slope_error = intercept_error = 0.0
    else:
        slope_error, intercept_error = float(result.stderr), float(result.intercept_stderr)
    r_squared = 1.0 if residual == 0 and np.ptp(y) > 0 else float(result.rvalue**2)
    return FitResult(
        model="linear",
        params={
            "slope": float(result.slope),
            "intercept": float(result.intercept),
            "r_squared": r_squared,
        },
        std_errors={"slope": slope_error, "intercept": intercept_error},
        residual=residual,
        iterations=0,
        converged=True,
    )


def extrapolate_zero_power(series: Sequence[Tuple[float, float]]) -> Tuple[float, float]:
    """
    Extrapolates a linewidth measured at several powers to zero power.

    :param series: (power, fwhm) pairs, at least three
    :return: (fwhm at zero power, its standard error)
    """

    if len(series) < 3:
        raise FitError(f"At least 3 powers are required, got {len(series)}")
    fit = fit_linear(series)
    return fit["intercept"], fit.error("intercept")


def t2_star_from_fwhm(fwhm: float) -> float:
    """Ground-state dephasing time of a coherent population trapping dip: T2* = 1 / (2 pi FWHM)"""
    if not fwhm > 0:
        raise ValueError(f"Linewidth must be positive, got {fwhm}")
    return 1 / (2 * math.pi * fwhm)


def fwhm_from_t2_star(t2_star: float) -> float:
    if not t2_star > 0:
        raise ValueError(f"T2* must be positive, got {t2_star}")
    return 1 / (2 * math.pi * t2_star)


class FeatureKind(Enum):
    PEAK = "peak"
    DIP = "dip"


@dataclass(frozen=True)
class Feature:
    position: float
    height: float
    kind: FeatureKind


def find_features(spectrum: Spectrum, threshold: float = 0.01) -> List[Feature]:
    """
    Finds resolved peaks and dips of a spectrum.

    A local maximum (minimum) is a feature when both its topographic prominence and its
    excursion above (below) the median of the counts exceed `threshold * (max - min)`.
    Two overlapping lines separated by a saddle thus count as two peaks, the saddle itself
    is no dip. Positions are refined by a parabola through the neighbours.

    :param threshold: minimum prominence relative to the full range of the spectrum
    :return: features sorted by position, `height` being the signed prominence
    """

    x, y = spectrum.grid, spectrum.counts
    span = float(np.ptp(y)) if y.size else 0.0
    if span == 0:
        return []

    baseline = float(np.median(y))
    features = []
    for kind, sign in ((FeatureKind.PEAK, 1.0), (FeatureKind.DIP, -1.0)):
        indices, props = signal.find_peaks(sign * y, prominence=threshold * span)
        for k, prominence in zip(indices, props["prominences"]):
            if sign * (y[k] - baseline) <= threshold * span:
                continue
            features.append(
                Feature(position=_refine(x, y, int(k)), height=sign * float(prominence), kind=kind)
            )
    return sorted(features, key=lambda f: f.position)


def _refine(x: np.ndarray, y: np.ndarray, k: int) -> float:
    """Vertex of the parabola through three neighbouring points"""
    if k == 0 or k == x.size - 1:
        return float(x[k])
    coeffs = np.polyfit(x[k - 1 : k + 2] - x[k], y[k - 1 : k + 2], 2)
    if coeffs[0] == 0:
        return float(x[k])
    offset = -coeffs[1] / (2 * coeffs[0])
    return float(x[k] + np.clip(offset, x[k - 1] - x[k], x[k + 1] - x[k]))


def find_peaks(spectrum: Spectrum, prominence: float = 0.01) -> List[float]:
    """Positions of the peaks found by `find_features`, sorted ascending"""
    return [f.position for f in find_features(spectrum, prominence) if f.kind is FeatureKind.PEAK]


def find_dips(spectrum: Spectrum, prominence: float = 0.01) -> List[float]:
    """Positions of the dips found by `find_features`, sorted ascending"""
    return [f.position for f in find_features(spectrum, prominence) if f.kind is FeatureKind.DIP]


def initialization_fidelity(h0: float, a: float, dark_read: bool = False) -> Tuple[float, bool]:
    """
    Spin initialization fidelity from the readout height right after initialization
    (`h0`) and the height after full thermalization (`a`, an equal spin mixture).

    :param dark_read: the readout addresses the spin state that initialization empties
    :return: (fidelity clamped to [0, 1], whether clamping was needed)
    """

    if not a > 0:
        raise FitError(f"Thermal readout height must be positive, got {a}")
    ratio = h0 / (2 * a)
    value = 1 - ratio if dark_read else ratio
    if 0 <= value <= 1:
        return value, False
    logger.warning(f"Initialization fidelity {value:.4f} lies outside [0, 1], clamping")
    return min(max(value, 0.0), 1.0), True


def rate_from_tau(fit: FitResult) -> Tuple[float, float]:
    """Converts a fitted time constant into a rate with its propagated error"""
    tau, err = fit["tau"], fit.error("tau")
    return 1 / tau, err / tau**2


def summarize(fit: Optional[FitResult], prefix: str = "") -> Dict[str, float]:
    """Flat mapping of fitted values and errors suitable for sweep tables"""
    if fit is None:
        return {}
    out = {f"{prefix}{k}": v for k, v in fit.params.items()}
    out.update({f"{prefix}{k}_err": v for k, v in fit.std_errors.items()})
    return out
