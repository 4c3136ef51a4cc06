# pepforge angle distributions: histograms, JS/KL divergences and Ramachandran regions.

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass

import numpy as np

from ..core.errors import EmptyDataError, ShapeError
from ..utils.geometry import ANGLE_NAMES, InternalCoords, wrap_angle

logger = logging.getLogger(__name__)

HIST_BINS = 100
SMOOTHING_EPS = 1e-10

RAMACHANDRAN_REGIONS = ("beta_sheet", "rh_helix", "lh_helix", "other")

# (phi_lo, phi_hi, psi_lo, psi_hi) in degrees, inclusive; checked in this order
_REGION_BOXES: tuple[tuple[str, tuple[float, float, float, float]], ...] = (
    ("beta_sheet", (-180.0, -45.0, 90.0, 180.0)),
    ("rh_helix", (-160.0, -20.0, -120.0, 30.0)),
    ("lh_helix", (20.0, 125.0, -45.0, 90.0)),
)


@dataclass(frozen=True, eq=False)
class AngleHistogram:
    edges: np.ndarray
    counts: np.ndarray
    column: str

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def probabilities(self) -> np.ndarray:
        if self.total == 0:
            raise EmptyDataError(f"histogram for {self.column} is empty")
        p = self.counts / self.total + SMOOTHING_EPS
        return p / p.sum()


def angle_histogram(values: Iterable[float] | np.ndarray, column: str, bins: int = HIST_BINS) -> AngleHistogram:
    v = np.asarray(list(values) if not isinstance(values, np.ndarray) else values, dtype=np.float64).ravel()
    if v.size:
        v = np.asarray(wrap_angle(v))
    edges = np.linspace(-math.pi, math.pi, bins + 1)
    counts, _ = np.histogram(v, bins=edges)
    return AngleHistogram(edges=edges, counts=counts.astype(np.int64), column=column)


def column_histograms(ics: Sequence[InternalCoords], bins: int = HIST_BINS) -> dict[str, AngleHistogram]:
    """One histogram per angle column, pooled over every peptide."""
    stacked = np.concatenate([ic.angles for ic in ics], axis=0) if ics else np.zeros((0, 8))
    return {name: angle_histogram(stacked[:, i], name, bins) for i, name in enumerate(ANGLE_NAMES)}


def _kl(p: np.ndarray, q: np.ndarray, log=np.log) -> float:
    return float(np.sum(p * (log(p) - log(q))))


def angle_divergence(gen: AngleHistogram, test: AngleHistogram) -> dict[str, float]:
    """JS distance (base 2, in [0, 1]) and KL(gen || test) in nats."""
    if gen.edges.shape != test.edges.shape or not np.allclose(gen.edges, test.edges):
        raise ShapeError(f"histograms for {gen.column}/{test.column} use different binning")
    p, q = gen.probabilities(), test.probabilities()
    m = 0.5 * (p + q)
    js = 0.5 * _kl(p, m, np.log2) + 0.5 * _kl(q, m, np.log2)
    return {
        "js_distance": float(min(1.0, math.sqrt(max(0.0, js)))),
        "kl_divergence": max(0.0, _kl(p, q)),
    }


def ramachandran_region(phi: float, psi: float) -> str:
    """Region of one (phi, psi) pair given in radians."""
    a, b = math.degrees(float(phi)), math.degrees(float(psi))
    for name, (phi_lo, phi_hi, psi_lo, psi_hi) in _REGION_BOXES:
        if phi_lo <= a <= phi_hi and psi_lo <= b <= psi_hi:
            return name
    return "other"


def ramachandran_bins(ic: InternalCoords | Sequence[InternalCoords]) -> dict[str, int]:
    counts = dict.fromkeys(RAMACHANDRAN_REGIONS, 0)
    for one in [ic] if isinstance(ic, InternalCoords) else ic:
        for phi, psi in zip(one.column("phi"), one.column("psi")):
            counts[ramachandran_region(phi, psi)] += 1
    return counts


def region_shares(counts: dict[str, int]) -> dict[str, float]:
    total = sum(counts.values())
    if total == 0:
        raise EmptyDataError("no residues to bin")
    return {k: counts[k] / total for k in RAMACHANDRAN_REGIONS}


__all__ = [
    "HIST_BINS",
    "SMOOTHING_EPS",
    "RAMACHANDRAN_REGIONS",
    "AngleHistogram",
    "angle_histogram",
    "column_histograms",
    "angle_divergence",
    "ramachandran_region",
    "ramachandran_bins",
    "region_shares",
]
