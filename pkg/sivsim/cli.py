# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

import logging
import sys
from dataclasses import replace
from pathlib import Path
from typing import Callable, Optional, Tuple

import click
import marshmallow

from sivsim.artifacts import write_result
from sivsim.config import config
from sivsim.level_model import TransitionNotFoundError
from sivsim.pulse_sim import ExperimentError
from sivsim.run_config import (
    RunConfig,
    RunConfigError,
    Scenario,
    apply_override,
    list_presets,
    load_preset,
    load_run_config,
)
from sivsim.scenarios import run_scenario
from sivsim.sequence_parser import SequenceError
from sivsim.util import InvariantViolation, NumericalError

click_r_file = click.Path(
    exists=True, file_okay=True, dir_okay=False, readable=True, path_type=Path
)
click_opt_rw_dir = click.Path(
    exists=False, file_okay=False, dir_okay=True, readable=True, writable=True, path_type=Path
)

main = click.Group(help="Optical spin dynamics simulator for silicon-vacancy color centers")

AVAILABLE_LOG_LEVELS = ["NOTSET", "DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
DEFAULT_LOG_LEVEL = config.log_level or "WARNING"

EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_ERROR = 3

CONFIG_ERRORS = (
    RunConfigError,
    InvariantViolation,
    SequenceError,
    ExperimentError,
    TransitionNotFoundError,
    marshmallow.ValidationError,
    OSError,
    ValueError,
)


def configure_log_level(log_level: str):
    logging.basicConfig(level=DEFAULT_LOG_LEVEL)
    if log_level not in AVAILABLE_LOG_LEVELS:
        logging.warning(f"Wrong log-level value: {log_level}. Select one of {AVAILABLE_LOG_LEVELS}")
        log_level = DEFAULT_LOG_LEVEL

    logger = logging.getLogger()
    logger.setLevel(log_level)


def _guarded(action: Callable[[], None]):
    """Runs `action`, turning known failures into a diagnostic and an exit status"""
    try:
        action()
    except NumericalError as e:
        click.echo(f"Numerical failure: {e}", err=True)
        sys.exit(EXIT_NUMERICAL_ERROR)
    except CONFIG_ERRORS as e:
        message = e.args[0] if isinstance(e, KeyError) and e.args else e
        click.echo(f"Configuration error: {message}", err=True)
        sys.exit(EXIT_CONFIG_ERROR)


def _load(
    config_path: Optional[Path], preset: Optional[str], overrides: Tuple[str, ...]
) -> RunConfig:
    if (config_path is None) == (preset is None):
        raise RunConfigError("Exactly one of --config and --preset is required")
    if preset is not None:
        return load_preset(preset, overrides)
    assert config_path is not None
    return load_run_config(config_path, overrides)


def _finish(cfg: RunConfig, out: Optional[Path], seed: Optional[int], jobs: Optional[int]):
    if out is not None:
        cfg = replace(cfg, output_dir=str(out))
    if seed is not None:
        cfg = cfg.with_seed(seed)
    jobs = jobs or config.jobs or 1
    if jobs < 1:
        raise RunConfigError(f"--jobs must be at least 1, got {jobs}")
    return cfg, jobs


def _source_options(func):
    func = click.option(
        "--set",
        "overrides",
        multiple=True,
        metavar="KEY=VALUE",
        help="Override a configuration key, may be repeated",
    )(func)
    func = click.option("--preset", "-p", help="Name of a bundled preset")(func)
    func = click.option(
        "--config", "-c", "config_path", type=click_r_file, help="Run configuration file"
    )(func)
    return func


def _output_options(func):
    func = click.option("--log-level", default=DEFAULT_LOG_LEVEL, help="Log level")(func)
    func = click.option("--no-plot", is_flag=True, help="Do not write plot.svg")(func)
    func = click.option("--seed", type=int, help="Random seed of the detector shot noise")(func)
    func = click.option("--jobs", "-j", type=int, help="Number of worker threads")(func)
    func = click.option("--out", "-o", type=click_opt_rw_dir, help="Output directory")(func)
    return func


@main.command("run", help="Run a scenario and write its artifacts")
@_source_options
@_output_options
def run_main(
    config_path: Optional[Path],
    preset: Optional[str],
    overrides: Tuple[str, ...],
    out: Optional[Path],
    jobs: Optional[int],
    seed: Optional[int],
    no_plot: bool,
    log_level: str,
):
    configure_log_level(log_level)

    def action():
        cfg, n = _finish(_load(config_path, preset, overrides), out, seed, jobs)
        result = run_scenario(cfg, n)
        write_result(result, cfg, cfg.output_dir, plot=not no_plot)
        click.echo(f"Results written to {cfg.output_dir}")

    _guarded(action)


@main.command("sweep", help="Run a scenario once per value of one configuration key")
@_source_options
@click.option("--axis", "-a", required=True, help="Dotted configuration key to sweep")
@click.option(
    "--values", "-v", "values", default="", help="Comma separated values, SI suffixes allowed"
)
@click.option(
    "--scenario",
    "-s",
    type=click.Choice([s.value for s in Scenario if s is not Scenario.SWEEP]),
    help="Scenario to sweep, the configured one by default",
)
@_output_options
def sweep_main(
    config_path: Optional[Path],
    preset: Optional[str],
    overrides: Tuple[str, ...],
    axis: str,
    values: str,
    scenario: Optional[str],
    out: Optional[Path],
    jobs: Optional[int],
    seed: Optional[int],
    no_plot: bool,
    log_level: str,
):
    configure_log_level(log_level)

    def action():
        cfg, n = _finish(_load(config_path, preset, overrides), out, seed, jobs)
        if scenario is None:
            swept = cfg.sweep.scenario if cfg.scenario is Scenario.SWEEP else cfg.scenario
            scenario_name = swept.value
        else:
            scenario_name = scenario
        cfg = apply_override(cfg, "sweep.scenario", scenario_name)
        cfg = apply_override(cfg, "sweep.axis", axis)
        cfg = apply_override(cfg, "sweep.values", values)
        cfg = apply_override(cfg, "scenario", Scenario.SWEEP.value)
        result = run_scenario(cfg, n)
        write_result(result, cfg, cfg.output_dir, plot=not no_plot)
        click.echo(f"Sweep over {axis} written to {cfg.output_dir}")

    _guarded(action)


@main.command("presets", help="List the bundled presets")
@click.option("--show", metavar="NAME", help="Print the resolved configuration of one preset")
def presets_main(show: Optional[str]):
    def action():
        if show is None:
            for name in list_presets():
                click.echo(name)
        else:
            click.echo(load_preset(show).to_text(), nl=False)

    _guarded(action)


if __name__ == "__main__":
    main()
