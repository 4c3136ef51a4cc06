# pepforge result aggregation
#
# Responsibilities:
# - MetricRow: per-sample metrics for one generated peptide against its reference complex
# - select_ensemble: merge runs made with different ext-k checkpoint pairs, keeping per complex
#   the candidate with the best TM-score (structure columns) and the best similarity (sequence
#   columns). Selection needs the reference, so it is an evaluation-time rule only.
# - summarize: means, trimmed RMSD mean, threshold fractions
# - per_complex: the metrics.csv table, sample means per complex plus an all-sample summary row

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import asdict, dataclass, replace
from typing import Any

import numpy as np

from ..core.errors import EmptyDataError

logger = logging.getLogger(__name__)

TRIM_FRACTION = 0.01
RMSD_THRESHOLD = 5.0
TM_THRESHOLDS = (0.2, 0.5)

METRIC_COLUMNS = ("pdb_id", "sample_id", "ext_k", "length", "rmsd", "tm", "recovery", "similarity", "contact")


@dataclass(frozen=True)
class MetricRow:
    pdb_id: str
    sample_id: str
    ext_k: int
    length: int
    rmsd: float
    tm: float
    recovery: float
    similarity: float
    contact: bool
    sequence: str = ""

    def csv_row(self) -> list[Any]:
        d = asdict(self)
        return [int(v) if isinstance(v, bool) else v for v in (d[c] for c in METRIC_COLUMNS)]


def trimmed_mean(values: Iterable[float], drop: float = TRIM_FRACTION) -> float:
    """Mean after discarding the largest floor(n * drop) values."""
    v = np.sort(np.asarray(list(values), dtype=np.float64))
    if v.size == 0:
        raise EmptyDataError("trimmed mean of no values")
    k = int(math.floor(v.size * drop))
    return float(v[: v.size - k].mean())


def select_ensemble(runs: Sequence[Sequence[MetricRow]]) -> list[MetricRow]:
    """Earlier runs win ties; output is ordered by (pdb_id, sample_id)."""
    best_struct: dict[tuple[str, str], MetricRow] = {}
    best_seq: dict[tuple[str, str], MetricRow] = {}
    for rows in runs:
        for r in rows:
            key = (r.pdb_id, r.sample_id)
            if key not in best_struct or r.tm > best_struct[key].tm:
                best_struct[key] = r
            if key not in best_seq or r.similarity > best_seq[key].similarity:
                best_seq[key] = r
    out = []
    for key in sorted(best_struct):
        s, q = best_struct[key], best_seq[key]
        out.append(replace(s, recovery=q.recovery, similarity=q.similarity, sequence=q.sequence))
    logger.info(f"[ensemble] kept {len(out)} candidates from {len(runs)} runs")
    return out


def summarize(rows: Sequence[MetricRow], diversity: float | None = None) -> dict[str, Any]:
    if not rows:
        raise EmptyDataError("no metric rows to summarise")
    rmsd = np.array([r.rmsd for r in rows])
    tm = np.array([r.tm for r in rows])
    out: dict[str, Any] = {
        "count": len(rows),
        "complexes": len({r.pdb_id for r in rows}),
        "rmsd_mean": float(rmsd.mean()),
        "rmsd_trimmed_mean": trimmed_mean(rmsd),
        "tm_mean": float(tm.mean()),
        "recovery_mean": float(np.mean([r.recovery for r in rows])),
        "similarity_mean": float(np.mean([r.similarity for r in rows])),
        "contact_rate": 100.0 * sum(r.contact for r in rows) / len(rows),
        f"frac_rmsd_lt_{RMSD_THRESHOLD:g}": float(np.mean(rmsd < RMSD_THRESHOLD)),
    }
    for thr in TM_THRESHOLDS:
        out[f"frac_tm_gt_{thr:g}"] = float(np.mean(tm > thr))
    out["diversity"] = diversity
    return out


COMPLEX_COLUMNS = (
    "pdb_id",
    "samples",
    "ext_k",
    "length",
    "rmsd",
    "tm",
    "recovery",
    "similarity",
    "contact",
    f"frac_rmsd_lt_{RMSD_THRESHOLD:g}",
    *(f"frac_tm_gt_{thr:g}" for thr in TM_THRESHOLDS),
)
SUMMARY_LABEL = "summary"


@dataclass(frozen=True)
class ComplexMetrics:
    """Sample means for one complex (or for every sample, on the summary row); contact in percent."""
    pdb_id: str
    samples: int
    ext_k: str
    length: int | None
    rmsd: float
    tm: float
    recovery: float
    similarity: float
    contact: float
    frac_rmsd: float
    frac_tm: tuple[float, ...]

    def csv_row(self) -> list[Any]:
        return [
            self.pdb_id,
            self.samples,
            self.ext_k,
            "" if self.length is None else self.length,
            self.rmsd,
            self.tm,
            self.recovery,
            self.similarity,
            self.contact,
            self.frac_rmsd,
            *self.frac_tm,
        ]


def aggregate(label: str, rows: Sequence[MetricRow]) -> ComplexMetrics:
    if not rows:
        raise EmptyDataError(f"no metric rows for {label}")
    rmsd = np.array([r.rmsd for r in rows])
    tm = np.array([r.tm for r in rows])
    lengths = {r.length for r in rows}
    return ComplexMetrics(
        pdb_id=label,
        samples=len(rows),
        # ensemble rows of one complex may come from several ext-k runs
        ext_k="|".join(str(k) for k in sorted({r.ext_k for r in rows})),
        length=lengths.pop() if len(lengths) == 1 else None,
        rmsd=float(rmsd.mean()),
        tm=float(tm.mean()),
        recovery=float(np.mean([r.recovery for r in rows])),
        similarity=float(np.mean([r.similarity for r in rows])),
        contact=100.0 * sum(r.contact for r in rows) / len(rows),
        frac_rmsd=float(np.mean(rmsd < RMSD_THRESHOLD)),
        frac_tm=tuple(float(np.mean(tm > thr)) for thr in TM_THRESHOLDS),
    )


def per_complex(rows: Sequence[MetricRow]) -> list[ComplexMetrics]:
    """One aggregate per pdb_id, ordered by pdb_id, followed by the all-sample summary row."""
    groups: dict[str, list[MetricRow]] = {}
    for r in rows:
        groups.setdefault(r.pdb_id, []).append(r)
    out = [aggregate(pid, groups[pid]) for pid in sorted(groups)]
    out.append(aggregate(SUMMARY_LABEL, rows))
    return out


__all__ = [
    "TRIM_FRACTION",
    "METRIC_COLUMNS",
    "COMPLEX_COLUMNS",
    "SUMMARY_LABEL",
    "MetricRow",
    "ComplexMetrics",
    "aggregate",
    "per_complex",
    "trimmed_mean",
    "select_ensemble",
    "summarize",
]
