# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

"""
Scenario runners: each one turns a RunConfig into a data table, optional fit text,
a flat summary used by sweeps, sidecar tables and a plot description.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from sivsim.analysis import (
    TAU_UNIDENTIFIABLE,
    ExponentialForm,
    FitError,
    FitResult,
    extrapolate_zero_power,
    find_dips,
    find_features,
    fit_linear,
    fit_lorentzian_dip,
    rate_from_tau,
    t2_star_from_fwhm,
)
from sivsim.level_model import LevelScheme, build_level_scheme
from sivsim.lindblad_engine import (
    TWO_PI,
    LambdaConfig,
    dip_power_series,
    ground_coherence_rate_for_t2_star,
    hyperfine_double_dip,
    orbital_lambda_spectrum,
    relative_spectrum,
)
from sivsim.pulse_sim import (
    SequenceSimulator,
    T1Point,
    TimeTrace,
    auto_gap_grid,
    edge_fidelity,
    fit_t1,
    orbital_t1_experiment,
    spin_t1_experiment,
)
from sivsim.rate_engine import Laser, excitation_spectrum, pump_probe_spectrum
from sivsim.run_config import RunConfig, RunConfigError, Scenario, apply_override, known_keys
from sivsim.sequence_parser import SequenceTemplate
from sivsim.spectrum import Spectrum, format_float
from sivsim.util import NumericalError

logger = logging.getLogger(__name__)


@dataclass
class Table:
    header: List[str]
    rows: List[List[Any]] = field(default_factory=list)

    @classmethod
    def from_spectrum(cls, spectrum: Spectrum) -> "Table":
        return cls(list(Spectrum.HEADER), [[x, y] for x, y in zip(spectrum.grid, spectrum.counts)])

    @classmethod
    def from_trace(cls, trace: TimeTrace) -> "Table":
        return cls(
            list(TimeTrace.HEADER),
            [
                [t0, t1, c]
                for t0, t1, c in zip(trace.bin_edges[:-1], trace.bin_edges[1:], trace.counts)
            ],
        )

    def column(self, name: str) -> List[Any]:
        i = self.header.index(name)
        return [row[i] for row in self.rows]


@dataclass
class PlotSeries:
    label: str
    x: Sequence[float]
    y: Sequence[float]
    #: "line" or "points"
    style: str = "line"


@dataclass
class PlotSpec:
    title: str
    xlabel: str
    ylabel: str
    series: List[PlotSeries] = field(default_factory=list)
    #: scale applied to x values before plotting, with the unit shown in `xlabel`
    xscale: float = 1.0


@dataclass
class ScenarioResult:
    scenario: Scenario
    data: Table
    fit_text: Optional[str] = None
    summary: Dict[str, float] = field(default_factory=dict)
    sidecars: Dict[str, Table] = field(default_factory=dict)
    plot: Optional[PlotSpec] = None


def level_scheme(cfg: RunConfig) -> LevelScheme:
    return build_level_scheme(cfg.scheme, cfg.field, cfg.hyperfine)


def _extra_lines(values: Dict[str, float]) -> str:
    return "".join(f"{k} = {format_float(v)}\n" for k, v in values.items())


def _scan(span: float, points: int, center: float = 0.0) -> np.ndarray:
    if points < 2:
        raise RunConfigError(f"A scan needs at least 2 points, got {points}")
    return center + np.linspace(-span / 2, span / 2, points)


def run_spectrum(cfg: RunConfig, jobs: int = 1) -> ScenarioResult:
    block = cfg.spectrum
    if block.points < 2 or not block.scan_stop > block.scan_start:
        raise RunConfigError("spectrum: scan_stop must exceed scan_start with at least 2 points")
    scheme = level_scheme(cfg)
    grid = np.linspace(block.scan_start, block.scan_stop, block.points)
    probe = Laser(target=block.probe, saturation=block.probe_saturation, linewidth=block.linewidth)

    spectra: Dict[str, Spectrum] = {}
    for entry in block.pumps or ["none"]:
        if entry.lower() == "none":
            spectra[entry] = excitation_spectrum(
                scheme, probe, grid, None, cfg.environment, cfg.detector, jobs
            )
        else:
            spectra[entry] = pump_probe_spectrum(
                scheme,
                probe,
                grid,
                entry,
                cfg.environment,
                cfg.detector,
                block.pump_saturation,
                block.pump_detuning,
                jobs,
            )

    summary: Dict[str, float] = {}
    lines = []
    plot = PlotSpec(
        title=f"Excitation spectrum around {block.probe}",
        xlabel="probe detuning (GHz)",
        ylabel="counts (Hz)",
        xscale=1e-9,
    )
    for entry, spectrum in spectra.items():
        features = find_features(spectrum, block.feature_threshold)
        name = "pump_" + entry if entry.lower() != "none" else "no_pump"
        summary[f"{name}_features"] = float(len(features))
        lines.append(f"{name}.features = {len(features)}")
        for i, feature in enumerate(features):
            lines.append(
                f"{name}.feature{i} = {feature.kind.value} {format_float(feature.position)}"
            )
        plot.series.append(PlotSeries(name, spectrum.grid, spectrum.counts))

    first, *rest = spectra.items()
    sidecars = {
        f"spectrum_pump_{entry}.csv": Table.from_spectrum(spectrum) for entry, spectrum in rest
    }
    return ScenarioResult(
        scenario=Scenario.SPECTRUM,
        data=Table.from_spectrum(first[1]),
        fit_text="\n".join(lines) + "\n",
        summary=summary,
        sidecars=sidecars,
        plot=plot,
    )


def _lambda_config(cfg: RunConfig, scheme: LevelScheme, probe_rabi: float) -> LambdaConfig:
    block = cfg.cpt
    return LambdaConfig(
        scheme=scheme,
        leg1=block.leg1,
        leg2=block.leg2,
        rabi1=TWO_PI * block.pump_rabi,
        rabi2=TWO_PI * probe_rabi,
        one_photon_detuning=block.one_photon_detuning,
        ground_coherence_rate=ground_coherence_rate_for_t2_star(block.t2_star),
        environment=cfg.environment if block.compose_orbital_dephasing else None,
        compose_orbital_dephasing=block.compose_orbital_dephasing,
        full_scheme=block.full_scheme,
    )


def run_cpt(cfg: RunConfig, jobs: int = 1) -> ScenarioResult:
    block = cfg.cpt
    if not block.probe_rabis:
        raise RunConfigError("cpt.probe_rabis: at least one probe Rabi frequency is required")
    scheme = build_level_scheme(cfg.scheme, cfg.field)
    scan = _scan(block.scan_span, block.points)
    series = dip_power_series(
        _lambda_config(cfg, scheme, block.probe_rabis[0]),
        [TWO_PI * r for r in block.probe_rabis],
        scan,
        cfg.detector,
        block.quadratic_baseline,
        jobs,
        block.normalize_background,
    )

    dip_fits = Table(
        ["probe_rabi_hz", "saturation", "fwhm_hz", "fwhm_err_hz", "depth", "contrast", "center_hz"],
        [
            [
                p.probe_rabi / TWO_PI,
                p.power,
                p.fit["fwhm"],
                p.fit.error("fwhm"),
                p.fit["depth"],
                p.fit["contrast"],
                p.fit["center"],
            ]
            for p in series
        ],
    )
    first = series[0].fit
    summary = {
        "fwhm_hz": first["fwhm"],
        "fwhm_err_hz": first.error("fwhm"),
        "contrast": first["contrast"],
        "center_hz": first["center"],
    }
    extra: Dict[str, float] = {}
    if len(series) >= 3:
        fwhm0, err0 = extrapolate_zero_power([(p.power, p.fit["fwhm"]) for p in series])
        extra["zero_power.fwhm"] = fwhm0
        extra["zero_power.fwhm_err"] = err0
        summary["fwhm0_hz"] = fwhm0
        if fwhm0 > 0:
            extra["zero_power.t2_star"] = t2_star_from_fwhm(fwhm0)
            summary["t2_star_s"] = extra["zero_power.t2_star"]

    plot = PlotSpec(
        title=f"Coherent population trapping on {block.leg1}/{block.leg2}",
        xlabel="two-photon detuning (MHz)",
        ylabel="counts (Hz)",
        xscale=1e-6,
        series=[
            PlotSeries(
                f"probe {p.probe_rabi / TWO_PI * 1e-6:g} MHz", p.spectrum.grid, p.spectrum.counts
            )
            for p in series
        ],
    )
    sidecars = {"dip_fit.csv": dip_fits}
    for i, p in enumerate(series[1:], start=1):
        sidecars[f"spectrum_probe{i}.csv"] = Table.from_spectrum(p.spectrum)
    if series[0].reference is not None:
        sidecars["reference.csv"] = Table.from_spectrum(series[0].reference)
    return ScenarioResult(
        scenario=Scenario.CPT,
        data=Table.from_spectrum(series[0].spectrum),
        fit_text=first.to_text() + _extra_lines(extra),
        summary=summary,
        sidecars=sidecars,
        plot=plot,
    )


def _refine_dip(spectrum: Spectrum, position: float, half_window: float) -> float:
    """Dip center from a local Lorentzian fit on a sloped baseline, else the grid minimum"""
    mask = np.abs(spectrum.grid - position) <= half_window
    try:
        fit = fit_lorentzian_dip(
            Spectrum(spectrum.grid[mask], spectrum.counts[mask]), quadratic_baseline=True
        )
    except FitError:
        return position
    if abs(fit["center"] - position) > half_window:
        return position
    return fit["center"]


def run_hyperfine(cfg: RunConfig, jobs: int = 1) -> ScenarioResult:
    """
    Double dark resonance of the two nuclear sectors. With `cpt.normalize_background`
    the dips are located on the ratio to the incoherent spectrum.
    """

    block = cfg.cpt
    coupling = cfg.hyperfine.coupling_A
    scheme = build_level_scheme(cfg.scheme, cfg.field)
    scan = _scan(block.scan_span, block.points)
    probe_rabi = block.probe_rabis[0] if block.probe_rabis else block.pump_rabi
    lam = _lambda_config(cfg, scheme, probe_rabi)
    spectrum = hyperfine_double_dip(lam, coupling, scan, cfg.detector, jobs)
    sidecars: Dict[str, Table] = {}
    located = spectrum
    if block.normalize_background:
        reference = hyperfine_double_dip(lam, coupling, scan, cfg.detector, jobs, incoherent=True)
        located = relative_spectrum(spectrum, reference)
        sidecars["reference.csv"] = Table.from_spectrum(reference)

    dips = find_dips(located)
    by_depth = sorted(dips, key=lambda x: float(np.interp(x, located.grid, located.counts)))
    deepest = sorted(by_depth[:2])
    if len(deepest) == 2:
        half = (deepest[1] - deepest[0]) / 2
        deepest = [_refine_dip(located, x, 0.8 * half) for x in deepest]
        separation = deepest[1] - deepest[0]
    else:
        separation = 0.0

    values = {
        "dips": float(len(deepest)),
        "separation_hz": separation,
        "coupling_A_hz": separation / 2,
    }
    text = "".join(f"dip{i}.center = {format_float(x)}\n" for i, x in enumerate(deepest))
    text += _extra_lines({"separation": separation, "coupling_A": separation / 2})
    return ScenarioResult(
        scenario=Scenario.HYPERFINE,
        data=Table.from_spectrum(spectrum),
        fit_text=f"dips = {len(deepest)}\n" + text,
        summary=values,
        sidecars=sidecars,
        plot=PlotSpec(
            title=f"Hyperfine-split dark resonance, A = {coupling * 1e-6:g} MHz",
            xlabel="two-photon detuning (MHz)",
            ylabel="counts (Hz)",
            xscale=1e-6,
            series=[PlotSeries("counts", spectrum.grid, spectrum.counts)],
        ),
    )


def run_orbital_cpt(cfg: RunConfig, jobs: int = 1) -> ScenarioResult:
    """
    Orbital Lambda dip at zero field. The contrast is measured against the incoherent
    rate-equation spectrum computed for the same lasers.
    """

    block = cfg.orbital_cpt
    scheme = build_level_scheme(cfg.scheme, cfg.field)
    grid = _scan(block.scan_span, block.points, block.pump_detuning)
    kwargs = dict(
        scheme=scheme,
        pump_rabi=TWO_PI * block.pump_rabi,
        probe_rabi=TWO_PI * block.probe_rabi,
        grid=grid,
        env=cfg.environment,
        detector=cfg.detector,
        pump_label=block.pump,
        probe_label=block.probe,
        pump_detuning=block.pump_detuning,
        ground_coherence_rate=(
            ground_coherence_rate_for_t2_star(block.t2_star) if block.t2_star else 0.0
        ),
        jobs=jobs,
    )
    spectrum = orbital_lambda_spectrum(**kwargs)
    reference = orbital_lambda_spectrum(**kwargs, incoherent=True)

    ratio = relative_spectrum(spectrum, reference).counts
    k = int(np.argmin(ratio))
    contrast = float(1 - ratio[k])
    summary = {"contrast": contrast, "dip_detuning_hz": float(grid[k])}
    return ScenarioResult(
        scenario=Scenario.ORBITAL_CPT,
        data=Table.from_spectrum(spectrum),
        fit_text=_extra_lines({"contrast": contrast, "dip_detuning": float(grid[k])}),
        summary=summary,
        sidecars={"reference.csv": Table.from_spectrum(reference)},
        plot=PlotSpec(
            title=f"Orbital Lambda system {block.pump}/{block.probe}",
            xlabel="probe detuning (MHz)",
            ylabel="counts (Hz)",
            xscale=1e-6,
            series=[
                PlotSeries("coherent", spectrum.grid, spectrum.counts),
                PlotSeries("incoherent", reference.grid, reference.counts),
            ],
        ),
    )


def _relaxation_table(points: List[T1Point]) -> Table:
    return Table(
        ["tau_s", "h", "a", "edge", "edge_reference"],
        [[p.tau, p.h, p.a, p.edge, p.edge_reference] for p in points],
    )


def _relaxation_plot(title: str, points: List[T1Point], fit: FitResult) -> PlotSpec:
    taus = np.array([p.tau for p in points])
    x = np.linspace(0, taus.max(), 200)
    sign = 1.0 if fit.model.endswith("decay") else -1.0
    y = fit["a"] + sign * fit["b"] * np.exp(-x / fit["tau"])
    unit, scale = next(
        ((u, s) for u, s in (("ms", 1e3), ("us", 1e6), ("ns", 1e9)) if taus.max() * s >= 1),
        ("ns", 1e9),
    )
    return PlotSpec(
        title=title,
        xlabel=f"delay ({unit})",
        xscale=scale,
        ylabel="leading edge height (counts)",
        series=[
            PlotSeries("simulated", taus, [p.h for p in points], style="points"),
            PlotSeries("fit", x, y),
        ],
    )


def run_spin_t1(cfg: RunConfig, jobs: int = 1) -> ScenarioResult:
    block = cfg.spin_t1
    if not block.sequence:
        raise RunConfigError("spin_t1.sequence: a sequence file is required")
    if not block.taus:
        raise RunConfigError("spin_t1.taus: at least one delay is required")
    try:
        text = Path(block.sequence).read_text()
    except OSError as e:
        raise RunConfigError(
            f"spin_t1.sequence: cannot read {block.sequence}: {e.strerror}"
        ) from None

    scheme = level_scheme(cfg)
    template = SequenceTemplate(text)
    points = spin_t1_experiment(
        scheme,
        cfg.environment,
        cfg.detector,
        block.taus,
        template,
        variable=block.variable,
        jobs=jobs,
    )
    fit = fit_t1(points, block.form)

    extra: Dict[str, float] = {}
    summary = {"t1_s": fit["tau"], "t1_err_s": fit.error("tau")}
    if fit.converged and TAU_UNIDENTIFIABLE not in fit.flags:
        fidelity, clamped = edge_fidelity(points, block.form, block.dark_read)
        extra["fidelity"] = fidelity
        extra["fidelity_clamped"] = float(clamped)
        summary["fidelity"] = fidelity

    first = template.render(scheme, **{block.variable: float(block.taus[0])})
    trace = SequenceSimulator(scheme, cfg.environment, cfg.detector).simulate(first)
    return ScenarioResult(
        scenario=Scenario.SPIN_T1,
        data=_relaxation_table(points),
        fit_text=fit.to_text() + _extra_lines(extra),
        summary=summary,
        sidecars={"trace.csv": Table.from_trace(trace)},
        plot=_relaxation_plot("Spin relaxation", points, fit),
    )


def run_orbital_t1(cfg: RunConfig, jobs: int = 1) -> ScenarioResult:
    block = cfg.orbital_t1
    scheme = level_scheme(cfg)
    gaps = list(block.gaps) or auto_gap_grid(scheme, cfg.environment)
    points = orbital_t1_experiment(
        scheme,
        cfg.environment,
        cfg.detector,
        gaps,
        pulse_width=block.pulse_width,
        saturation=block.saturation,
        label=block.label,
        rise=block.rise,
        jobs=jobs,
    )
    fit = fit_t1(points, ExponentialForm.RECOVERY)
    rate, rate_err = rate_from_tau(fit)
    return ScenarioResult(
        scenario=Scenario.ORBITAL_T1,
        data=_relaxation_table(points),
        fit_text=fit.to_text() + _extra_lines({"rate": rate, "rate_err": rate_err}),
        summary={"t1_s": fit["tau"], "t1_err_s": fit.error("tau"), "rate_hz": rate},
        plot=_relaxation_plot("Orbital relaxation", points, fit),
    )


RUNNERS: Dict[Scenario, Callable[[RunConfig, int], ScenarioResult]] = {
    Scenario.SPECTRUM: run_spectrum,
    Scenario.CPT: run_cpt,
    Scenario.HYPERFINE: run_hyperfine,
    Scenario.ORBITAL_CPT: run_orbital_cpt,
    Scenario.SPIN_T1: run_spin_t1,
    Scenario.ORBITAL_T1: run_orbital_t1,
}


def run_sweep(cfg: RunConfig, jobs: int = 1) -> ScenarioResult:
    """
    Runs `sweep.scenario` once per value of `sweep.axis` and tabulates the summaries.

    A value whose run fails with a numerical or validation problem is kept as a row
    with empty summary cells and the message in the `errors` column. When the axis is
    numeric, the `sweep.fit_key` column of the successful rows is fitted with a line.
    """

    block = cfg.sweep
    if block.scenario is Scenario.SWEEP:
        raise RunConfigError("sweep.scenario: sweeps cannot be nested")
    runner = RUNNERS[block.scenario]

    def run(value: str) -> Tuple[str, Optional[float], Dict[str, float], str]:
        try:
            point = apply_override(cfg, block.axis, value)
            point = apply_override(point, "scenario", block.scenario.value)
            resolved = point.to_flat()[block.axis]
            number = float(resolved) if isinstance(resolved, (int, float)) else None
            return value, number, runner(point, 1).summary, ""
        except (NumericalError, ValueError) as e:
            logger.warning(f"Sweep value {block.axis} = {value} failed: {e}")
            return value, None, {}, str(e).replace("\n", " ")

    if block.axis not in known_keys():
        raise RunConfigError(f"sweep.axis: unknown key '{block.axis}'")

    if jobs > 1 and len(block.values) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, block.values))
    else:
        results = [run(v) for v in block.values]

    keys = sorted({k for _, _, summary, _ in results for k in summary})
    table = Table(
        ["value", *keys, "errors"],
        [
            [value, *[summary.get(k, "") for k in keys], error]
            for value, _, summary, error in results
        ],
    )
    if block.fit_key and keys and block.fit_key not in keys:
        raise RunConfigError(
            f"sweep.fit_key: '{block.fit_key}' is not a summary column of {block.scenario.value}"
        )
    key = block.fit_key or (keys[0] if keys else "")

    succeeded = [(n, s) for _, n, s, _ in results if key in s]
    numeric = all(n is not None for n, _ in succeeded)
    fit: Optional[FitResult] = None
    if numeric and len(succeeded) >= 2:
        try:
            fit = fit_linear([(n, s[key]) for n, s in succeeded])
        except FitError as e:
            logger.warning(f"Linear fit of the sweep failed: {e}")

    plot = None
    if succeeded:
        xs = [n if numeric else i for i, (n, _) in enumerate(succeeded)]
        series = [PlotSeries(key, xs, [s[key] for _, s in succeeded], style="points")]
        if fit is not None:
            line = [min(xs), max(xs)]
            series.append(
                PlotSeries("linear fit", line, [fit["slope"] * v + fit["intercept"] for v in line])
            )
        plot = PlotSpec(
            title=f"{block.scenario.value} sweep over {block.axis}",
            xlabel=block.axis,
            ylabel=key,
            series=series,
        )

    summary = {} if fit is None else {k: fit[k] for k in ("slope", "intercept", "r_squared")}
    return ScenarioResult(
        scenario=Scenario.SWEEP,
        data=table,
        fit_text=None if fit is None else fit.to_text() + f"fit_key = {key}\n",
        summary=summary,
        plot=plot,
    )


def run_scenario(cfg: RunConfig, jobs: int = 1) -> ScenarioResult:
    logger.info(f"Running scenario {cfg.scenario.value}")
    if cfg.scenario is Scenario.SWEEP:
        return run_sweep(cfg, jobs)
    return RUNNERS[cfg.scenario](cfg, jobs)
