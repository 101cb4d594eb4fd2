"""Turn engine CSVs into static overlap panels.

Input files follow the shared schema ``t, schedule, direction_name,
overlap_mean, overlap_std, loss_mean``; any extra columns are ignored.
Series whose schedule label comes from a theory integrator (it starts
with ``dmft`` or ``one_pass``) are drawn as continuous lines; everything
else is an ensemble simulation and is drawn as markers with one
standard error bars.  No numbers are computed here: what is plotted is
exactly what the CSVs contain.

Rendering is deterministic: the same spec over the same CSVs produces
byte-identical image files (the only varying PNG metadata field,
the producing library's name tag, is stripped).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from matplotlib.figure import Figure

REQUIRED_COLUMNS = ("t", "schedule", "direction_name", "overlap_mean", "overlap_std")

# reuse-flavoured series in blue, one-pass-flavoured in red; other
# schedules draw from the remaining tableau colours in label order
_FAMILY_COLORS = {
    "full_batch_reuse": "tab:blue",
    "dmft": "tab:blue",
    "fresh_one_pass": "tab:red",
    "one_pass": "tab:red",
}
_EXTRA_COLORS = ("tab:green", "tab:purple", "tab:orange", "tab:brown", "tab:cyan")


class SchemaError(ValueError):
    """A CSV is missing a required column; the message names it."""


def _is_theory(label: str) -> bool:
    return label.startswith("dmft") or label.startswith("one_pass")


def _color_for(label: str, fallback_index: int) -> str:
    for prefix, color in _FAMILY_COLORS.items():
        if label.startswith(prefix):
            return color
    return _EXTRA_COLORS[fallback_index % len(_EXTRA_COLORS)]


@dataclass(frozen=True)
class Series:
    """One (schedule label, direction) trajectory read from a CSV."""

    label: str
    direction: str
    t: np.ndarray
    overlap: np.ndarray
    std_error: np.ndarray

    @property
    def theory(self) -> bool:
        return _is_theory(self.label)


@dataclass(frozen=True)
class RowSpec:
    """One stacked panel row: a direction and its axis label."""

    direction: str
    ylabel: str = "overlap"


@dataclass(frozen=True)
class PanelSpec:
    """Everything needed to draw one image."""

    csv_paths: tuple[str, ...]
    rows: tuple[RowSpec, ...]
    out: str
    dpi: int = 150
    title: str = ""
    xlabel: str = "gradient step t"

    def __post_init__(self) -> None:
        if not self.csv_paths:
            raise ValueError("need at least one CSV path")
        if not self.rows:
            raise ValueError("need at least one panel row")
        if self.dpi < 10:
            raise ValueError(f"dpi {self.dpi} is not a printable resolution")


def read_series(path: str | Path) -> list[Series]:
    """Parse one CSV into per-(schedule, direction) trajectories."""
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        for column in REQUIRED_COLUMNS:
            if column not in header:
                raise SchemaError(f"{path}: missing required column {column!r}")
        rows = list(reader)
    groups: dict[tuple[str, str], list[tuple[int, float, float]]] = {}
    for row in rows:
        key = (row["schedule"], row["direction_name"])
        groups.setdefault(key, []).append(
            (int(row["t"]), float(row["overlap_mean"]), float(row["overlap_std"]))
        )
    out = []
    for (label, direction), triples in groups.items():
        triples.sort()
        t, overlap, std_error = (np.asarray(col) for col in zip(*triples))
        out.append(Series(label, direction, t, overlap, std_error))
    return out


def _collect(spec: PanelSpec) -> list[Series]:
    series: list[Series] = []
    for path in spec.csv_paths:
        series.extend(read_series(path))
    for row in spec.rows:
        if not any(s.direction == row.direction for s in series):
            raise ValueError(
                f"no series for direction {row.direction!r} in "
                f"{', '.join(spec.csv_paths)}"
            )
    return series


def build_figure(spec: PanelSpec) -> Figure:
    """Draw the panel into a fresh figure without touching any files."""
    series = _collect(spec)
    n = len(spec.rows)
    fig = Figure(figsize=(6.0, 3.2 * n), dpi=spec.dpi)
    axes = fig.subplots(n, 1, sharex=True, squeeze=False)[:, 0]
    labels_seen: list[str] = []
    for ax, row in zip(axes, spec.rows):
        for s in sorted(
            (s for s in series if s.direction == row.direction),
            key=lambda s: s.label,
        ):
            if s.label not in labels_seen:
                labels_seen.append(s.label)
            color = _color_for(s.label, labels_seen.index(s.label))
            if s.theory:
                ax.plot(s.t, s.overlap, "-", color=color, label=s.label)
            else:
                ax.errorbar(
                    s.t, s.overlap, yerr=s.std_error, color=color,
                    linestyle="none", marker="o", markersize=4,
                    capsize=2, label=s.label,
                )
        ax.set_ylabel(row.ylabel)
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8, frameon=False)
    axes[-1].set_xlabel(spec.xlabel)
    if spec.title:
        axes[0].set_title(spec.title)
    fig.set_layout_engine("tight")
    return fig


def render(spec: PanelSpec) -> Path:
    """Draw the panel and write the image file the spec names."""
    fig = build_figure(spec)
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, dpi=spec.dpi, metadata={"Software": None})
    return out
