"""Figure rendering for the solver's CSV artifacts.

Pure post-processing: both plot functions are functions of the CSV
bytes alone and never recompute solver quantities.  Input files must
match the solver's schemas exactly (header string checked verbatim).
Heatmaps use a fixed symmetric color scale on [-1, 1]; out-of-range
values are clipped, not rescaled, so different runs stay comparable.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

__all__ = [
    "SchemaError",
    "PlotJob",
    "ConvergencePlot",
    "FieldPlot",
    "read_hconv",
    "read_solution",
    "plot_convergence",
    "plot_field",
]

HCONV_HEADER = "p,dp,nx,ndof_trial,l2_err_pct,rate_h"
SOLUTION_HEADER = "x,y,re_p,im_p,re_u1,im_u1,re_u2,im_u2"
CLIP_RANGE = (-1.0, 1.0)


class SchemaError(ValueError):
    """The input file does not match the expected CSV schema."""


@dataclass(frozen=True)
class PlotJob:
    """One rendering task: input CSV, plot kind and output image path."""

    input_path: str
    kind: str  # "convergence" | "heatmap"
    output_path: str
    clip: tuple[float, float] = CLIP_RANGE


@dataclass(frozen=True, eq=False)
class ConvergencePlot:
    figure: object
    n_series: int
    points_per_series: dict


@dataclass(frozen=True, eq=False)
class FieldPlot:
    figure: object
    grid_shape: tuple[int, int]
    values: np.ndarray  # the clipped re_p grid actually drawn


def _read_rows(path, header: str) -> list[dict]:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != header:
        raise SchemaError(f"{path}: expected header {header!r}, got {text[0] if text else '<empty>'!r}")
    rows = list(csv.DictReader(text))
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def read_hconv(path) -> list[dict]:
    """Rows of a refinement-sweep artifact, numerically typed."""
    rows = _read_rows(path, HCONV_HEADER)
    out = []
    for i, row in enumerate(rows):
        try:
            out.append(
                {
                    "p": int(row["p"]),
                    "dp": int(row["dp"]),
                    "nx": int(row["nx"]),
                    "ndof_trial": int(row["ndof_trial"]),
                    "l2_err_pct": float(row["l2_err_pct"]),
                    "rate_h": float(row["rate_h"]) if row["rate_h"] else None,
                }
            )
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: bad value in data row {i + 1}: {exc}") from exc
    if any(row["l2_err_pct"] <= 0 for row in out):
        raise SchemaError(f"{path}: errors must be positive for a log-log plot")
    return out


def read_solution(path) -> list[dict]:
    """Rows of a sampled-solution artifact, numerically typed."""
    rows = _read_rows(path, SOLUTION_HEADER)
    out = []
    for i, row in enumerate(rows):
        try:
            out.append({key: float(row[key]) for key in SOLUTION_HEADER.split(",")})
        except (TypeError, ValueError) as exc:
            raise SchemaError(f"{path}: bad value in data row {i + 1}: {exc}") from exc
    return out


def plot_convergence(input_path, output_path) -> ConvergencePlot:
    """Log-log error against trial unknowns, one labelled series per (p, dp)."""
    rows = read_hconv(input_path)
    series: dict[tuple[int, int], list] = {}
    for row in rows:
        series.setdefault((row["p"], row["dp"]), []).append((row["ndof_trial"], row["l2_err_pct"]))

    fig, ax = plt.subplots(figsize=(7.0, 5.5))
    for (p, dp), points in sorted(series.items()):
        points.sort()
        ndofs = [n for n, _ in points]
        errs = [e for _, e in points]
        ax.loglog(ndofs, errs, marker="o", label=f"p={p}, dp={dp}")
    ax.set_xlabel("trial degrees of freedom")
    ax.set_ylabel("field L2 error [%]")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize="small", ncols=max(1, len(series) // 8))
    fig.tight_layout()
    fig.savefig(output_path, dpi=150)
    return ConvergencePlot(
        figure=fig,
        n_series=len(series),
        points_per_series={key: len(points) for key, points in series.items()},
    )


def plot_field(input_path, output_path, clip: tuple[float, float] = CLIP_RANGE) -> FieldPlot:
    """Heatmap of the real pressure on its sampling grid, clipped to the fixed scale."""
    rows = read_solution(input_path)
    xs = sorted({row["x"] for row in rows})
    ys = sorted({row["y"] for row in rows})
    if len(xs) * len(ys) != len(rows):
        raise SchemaError(f"{input_path}: samples do not form a full tensor grid")
    x_index = {x: i for i, x in enumerate(xs)}
    y_index = {y: j for j, y in enumerate(ys)}
    grid = np.full((len(ys), len(xs)), np.nan)
    for row in rows:
        grid[y_index[row["y"]], x_index[row["x"]]] = row["re_p"]
    if np.isnan(grid).any():
        raise SchemaError(f"{input_path}: duplicate or missing grid samples")
    lo, hi = clip
    clipped = np.clip(grid, lo, hi)

    fig, ax = plt.subplots(figsize=(5.5, 5.0))
    image = ax.imshow(
        clipped,
        origin="lower",
        extent=(min(xs), max(xs), min(ys), max(ys)),
        vmin=lo,
        vmax=hi,
        cmap="RdBu_r",
        interpolation="nearest",
        aspect="equal",
    )
    fig.colorbar(image, ax=ax, label="Re p")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    fig.tight_layout()
    fig.savefig(output_path, dpi=150)
    return FieldPlot(figure=fig, grid_shape=grid.shape, values=clipped)
