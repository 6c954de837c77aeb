"""Output plumbing for the CLI: delimited data, JSON reports, checksummed
manifests, and the matplotlib figures rendered alongside the data files.

Everything written here is deterministic for a fixed config and seed:
no timestamps, sorted JSON keys, fixed figure metadata.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
from typing import Iterable, Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "OutputWriter",
    "render_line_figure",
    "render_spectrum_figure",
    "render_decay_figure",
]

_PNG_METADATA = {"Software": "baflow"}

plt.rcParams.update(
    {
        "figure.figsize": (6.0, 4.0),
        "savefig.dpi": 150,
        "axes.grid": True,
        "grid.alpha": 0.3,
        "svg.hashsalt": "baflow",
    }
)


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


class OutputWriter:
    """Collects the files a command emits and finalises a manifest whose
    checksums make reruns byte-comparable."""

    def __init__(self, output_dir: str, command: str, config: dict,
                 figures: bool = True, data_format: str = "csv"):
        if data_format not in ("csv", "json"):
            raise ValueError(f"unknown data format {data_format!r}")
        self.output_dir = output_dir
        self.command = command
        self.config = config
        self.figures = figures
        self.data_format = data_format
        self.files: list[str] = []
        os.makedirs(output_dir, exist_ok=True)

    def path(self, name: str) -> str:
        return os.path.join(self.output_dir, name)

    def _register(self, name: str) -> str:
        if name not in self.files:
            self.files.append(name)
        return self.path(name)

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
        """Write a data table in the selected format (CSV, or row-object
        JSON when the writer was built with data_format='json')."""
        if self.data_format == "json":
            payload = {"columns": list(header),
                       "rows": [list(row) for row in rows]}
            # _table suffix keeps data files clear of same-stem reports
            return self.write_json(name.rsplit(".", 1)[0] + "_table.json", payload)
        path = self._register(name)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(header)
            for row in rows:
                writer.writerow([_format_cell(v) for v in row])
        return path

    def write_json(self, name: str, payload: dict) -> str:
        path = self._register(name)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True, default=_jsonify)
            fh.write("\n")
        return path

    def save_figure(self, name: str, fig) -> Optional[str]:
        if not self.figures:
            plt.close(fig)
            return None
        path = self._register(name)
        fig.savefig(path, metadata=_PNG_METADATA, bbox_inches="tight")
        plt.close(fig)
        return path

    def finalize(self) -> str:
        manifest = {
            "command": self.command,
            "config": self.config,
            "library": "baflow",
            "files": {name: _sha256(self.path(name)) for name in sorted(self.files)},
        }
        path = self.path("manifest.json")
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=_jsonify)
            fh.write("\n")
        return path


def _format_cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (np.floating,)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return str(value)


def _jsonify(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating,)):
        return float(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.bool_,)):
        return bool(value)
    raise TypeError(f"cannot serialise {type(value)!r}")


def render_line_figure(
    writer: OutputWriter,
    name: str,
    x: np.ndarray,
    series: dict,
    xlabel: str,
    ylabel: str,
    title: str,
    logy: bool = False,
):
    fig, ax = plt.subplots()
    for label, y in series.items():
        ax.plot(x, y, label=label)
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    if len(series) > 1:
        ax.legend()
    return writer.save_figure(name, fig)


def render_spectrum_figure(writer: OutputWriter, name: str, spectra: dict, title: str):
    fig, ax = plt.subplots()
    for label, evals in spectra.items():
        evals = np.asarray(evals)
        ax.plot(np.arange(1, evals.size + 1), evals, "o-", label=label)
    ax.set_xlabel("mode index")
    ax.set_ylabel("eigenvalue")
    ax.set_yscale("log")
    ax.set_title(title)
    ax.legend()
    return writer.save_figure(name, fig)


def render_decay_figure(
    writer: OutputWriter,
    name: str,
    times: np.ndarray,
    dist: np.ndarray,
    bound: Optional[np.ndarray],
    title: str,
):
    fig, ax = plt.subplots()
    positive = dist > 0
    ax.semilogy(times[positive], dist[positive], label="distance to reference")
    if bound is not None:
        ax.semilogy(times, bound, "--", label="rate bound line")
    ax.set_xlabel("t")
    ax.set_ylabel("l1 distance")
    ax.set_title(title)
    ax.legend()
    return writer.save_figure(name, fig)
