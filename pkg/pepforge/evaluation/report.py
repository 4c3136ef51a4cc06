# pepforge evaluation reports
#
# Files written by `evaluate` (all through atomic writes):
#   metrics.csv        one row per complex (sample means, COMPLEX_COLUMNS) and a final summary row;
#                      alignment settings on line 1
#   samples.csv        one row per generated sample (METRIC_COLUMNS)
#   distributions.csv  per-angle 100-bin histograms of generated vs reference angles
#   summary.json       means, trimmed RMSD mean, threshold fractions, per-angle JS/KL, Ramachandran
#   *.svg              optional: one histogram per angle column plus a Ramachandran scatter

from __future__ import annotations

import logging
import math
import os
from collections.abc import Sequence
from typing import Any

import numpy as np

from ..utils.atomic_io import write_csv, write_json
from ..utils.geometry import ANGLE_NAMES, InternalCoords
from .distributions import AngleHistogram, angle_divergence
from .ensemble import COMPLEX_COLUMNS, METRIC_COLUMNS, MetricRow, per_complex

logger = logging.getLogger(__name__)

DISTRIBUTION_COLUMNS = ("column", "bin", "lo", "hi", "generated", "reference")


def write_metrics(path: str, rows: Sequence[MetricRow], alignment: str) -> None:
    table = per_complex(rows)
    write_csv(path, COMPLEX_COLUMNS, (c.csv_row() for c in table), comment=f"alignment: {alignment}")


def write_samples(path: str, rows: Sequence[MetricRow], alignment: str) -> None:
    write_csv(path, METRIC_COLUMNS, (r.csv_row() for r in rows), comment=f"alignment: {alignment}")


def write_distributions(
    path: str,
    generated: dict[str, AngleHistogram],
    reference: dict[str, AngleHistogram],
) -> None:
    rows: list[list[Any]] = []
    for name in ANGLE_NAMES:
        g, r = generated[name], reference[name]
        for i in range(len(g.counts)):
            rows.append([name, i, float(g.edges[i]), float(g.edges[i + 1]), int(g.counts[i]), int(r.counts[i])])
    write_csv(path, DISTRIBUTION_COLUMNS, rows)


def divergences(
    generated: dict[str, AngleHistogram],
    reference: dict[str, AngleHistogram],
) -> dict[str, dict[str, float] | None]:
    """Per-column JS/KL; columns with no samples on either side map to None."""
    out: dict[str, dict[str, float] | None] = {}
    for name in ANGLE_NAMES:
        g, r = generated[name], reference[name]
        out[name] = angle_divergence(g, r) if g.total and r.total else None
    return out


def write_summary(path: str, summary: dict[str, Any]) -> None:
    write_json(path, summary)


# -----------------
# SVG figures (matplotlib, headless)
# -----------------
def _pyplot() -> Any:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    plt.rcParams["svg.hashsalt"] = "pepforge"
    return plt


def _save(fig: Any, path: str) -> None:
    tmp = path + ".tmp"
    fig.savefig(tmp, format="svg", bbox_inches="tight", metadata={"Date": None})
    os.replace(tmp, path)


def write_histogram_svgs(
    out_dir: str,
    generated: dict[str, AngleHistogram],
    reference: dict[str, AngleHistogram],
) -> list[str]:
    plt = _pyplot()
    paths = []
    for name in ANGLE_NAMES:
        g, r = generated[name], reference[name]
        centers = np.degrees(0.5 * (g.edges[:-1] + g.edges[1:]))
        width = math.degrees(float(g.edges[1] - g.edges[0]))
        fig, ax = plt.subplots(figsize=(5, 3.2))
        for hist, label, color in ((r, "reference", "#3498db"), (g, "generated", "#e67e22")):
            dens = hist.counts / hist.total if hist.total else hist.counts.astype(float)
            ax.bar(centers, dens, width=width, alpha=0.55, color=color, label=label)
        ax.set_xlim(-180, 180)
        ax.set_xlabel(f"{name} (degrees)")
        ax.set_ylabel("fraction")
        ax.legend(loc="upper right", fontsize=8)
        path = os.path.join(out_dir, f"hist_{name}.svg")
        _save(fig, path)
        plt.close(fig)
        paths.append(path)
    return paths


def write_ramachandran_svg(
    path: str,
    generated: Sequence[InternalCoords],
    reference: Sequence[InternalCoords],
) -> str:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    for ics, label, color in ((reference, "reference", "#3498db"), (generated, "generated", "#e67e22")):
        if not ics:
            continue
        phi = np.degrees(np.concatenate([ic.column("phi") for ic in ics]))
        psi = np.degrees(np.concatenate([ic.column("psi") for ic in ics]))
        ax.scatter(phi, psi, s=5, alpha=0.6, color=color, label=label)
    ax.set_xlim(-180, 180)
    ax.set_ylim(-180, 180)
    ax.set_xlabel("phi (degrees)")
    ax.set_ylabel("psi (degrees)")
    ax.set_aspect("equal")
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path)
    plt.close(fig)
    return path


__all__ = [
    "DISTRIBUTION_COLUMNS",
    "write_metrics",
    "write_samples",
    "write_distributions",
    "divergences",
    "write_summary",
    "write_histogram_svgs",
    "write_ramachandran_svg",
]
