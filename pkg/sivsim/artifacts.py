# Copyright (c) 2024 Antmicro <www.antmicro.com>
# SPDX-License-Identifier: Apache-2.0

"""Writers for the files a run leaves in its output directory."""

import csv
import logging
from pathlib import Path
from typing import Any, Dict, List, Union

import matplotlib
import numpy as np
from matplotlib.figure import Figure

from sivsim.run_config import RunConfig
from sivsim.scenarios import PlotSpec, ScenarioResult, Table
from sivsim.spectrum import format_float
from sivsim.util import sha256_text

logger = logging.getLogger(__name__)

DATA_FILE = "data.csv"
FIT_FILE = "fit.txt"
PLOT_FILE = "plot.svg"
MANIFEST_FILE = "manifest.txt"

# fixed ids and no timestamps, so that reruns give identical files
_SVG_RC = {"svg.hashsalt": "sivsim", "svg.fonttype": "none"}


def _cell(value: Any) -> str:
    if isinstance(value, (float, np.floating)):
        return format_float(float(value))
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    return str(value)


def write_table(table: Table, path: Union[str, Path]):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(table.header)
        for row in table.rows:
            writer.writerow([_cell(v) for v in row])


def write_plot(spec: PlotSpec, path: Union[str, Path]):
    with matplotlib.rc_context(_SVG_RC):
        fig = Figure(figsize=(6.4, 4.0))
        ax = fig.subplots()
        for series in spec.series:
            x = np.asarray(series.x, dtype=float) * spec.xscale
            if series.style == "points":
                ax.plot(x, series.y, "o", markersize=3, label=series.label)
            else:
                ax.plot(x, series.y, "-", linewidth=1, label=series.label)
        ax.set_title(spec.title)
        ax.set_xlabel(spec.xlabel)
        ax.set_ylabel(spec.ylabel)
        if len(spec.series) > 1:
            ax.legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})


def manifest_text(cfg: RunConfig, hashes: Dict[str, str]) -> str:
    """
    The resolved configuration in the `key = value` format followed by
    `# sha256 <file> <hash>` comment lines, loadable as a run configuration.
    """

    lines = [cfg.to_text()]
    if cfg.spin_t1.sequence and Path(cfg.spin_t1.sequence).is_file():
        lines.append(
            f"# sha256 {cfg.spin_t1.sequence} "
            f"{sha256_text(Path(cfg.spin_t1.sequence).read_bytes())}\n"
        )
    lines.extend(f"# sha256 {name} {digest}\n" for name, digest in sorted(hashes.items()))
    return "".join(lines)


def write_result(
    result: ScenarioResult, cfg: RunConfig, out_dir: Union[str, Path], plot: bool = True
) -> List[Path]:
    """
    Writes `data.csv`, `fit.txt` (when the scenario fits something), sidecar tables,
    `plot.svg` and finally `manifest.txt` into `out_dir`.

    :return: paths of the written files
    """

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []

    write_table(result.data, out / DATA_FILE)
    written.append(out / DATA_FILE)
    if result.fit_text:
        (out / FIT_FILE).write_text(result.fit_text, encoding="utf-8")
        written.append(out / FIT_FILE)
    for name, table in sorted(result.sidecars.items()):
        write_table(table, out / name)
        written.append(out / name)
    if plot and result.plot is not None:
        write_plot(result.plot, out / PLOT_FILE)
        written.append(out / PLOT_FILE)

    hashes = {p.name: sha256_text(p.read_bytes()) for p in written}
    (out / MANIFEST_FILE).write_text(manifest_text(cfg, hashes), encoding="utf-8")
    written.append(out / MANIFEST_FILE)
    for path in written:
        logger.info(f"Wrote {path}")
    return written
