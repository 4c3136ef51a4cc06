# pepforge sequence metrics: recovery, Needleman-Wunsch similarity and set diversity.
#
# Alignment is global with a linear gap penalty (4 per gap symbol by default) under BLOSUM62.
# Similarity normalises by the reference self-score and keeps its sign; diversity normalises each
# pair by the self-score of the longer sequence (ties: the larger self-score).

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from ..core.errors import (
    AlphabetError,
    DegenerateNormalizerError,
    EmptyDataError,
    RangeError,
    ShapeError,
)
from ..utils.blosum import blosum62_matrix
from ..utils.residues import AA_ORDER

logger = logging.getLogger(__name__)

DEFAULT_GAP_PENALTY = 4.0


@dataclass(frozen=True, eq=False)
class AlignmentConfig:
    substitution: np.ndarray = field(default_factory=blosum62_matrix)
    gap_penalty: float = DEFAULT_GAP_PENALTY
    alphabet: str = AA_ORDER

    def __post_init__(self) -> None:
        if not self.gap_penalty >= 0:
            raise RangeError(f"gap_penalty must be >= 0, got {self.gap_penalty}")
        k = len(self.alphabet)
        if np.shape(self.substitution) != (k, k):
            raise ShapeError(f"substitution matrix must be {k}x{k} for alphabet {self.alphabet!r}")

    def encode(self, seq: str) -> np.ndarray:
        try:
            return np.array([self.alphabet.index(c) for c in seq], dtype=np.int64)
        except ValueError:
            bad = sorted({c for c in seq if c not in self.alphabet})
            raise AlphabetError(f"letters {''.join(bad)!r} are not in the alignment alphabet") from None

    def describe(self) -> str:
        return f"needleman-wunsch linear gap {self.gap_penalty:g}"


_DEFAULT: AlignmentConfig | None = None


def default_alignment() -> AlignmentConfig:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = AlignmentConfig()
    return _DEFAULT


def _tidy(v: float) -> float:
    return int(v) if float(v).is_integer() else float(v)


def nw_score(s1: str, s2: str, cfg: AlignmentConfig | None = None) -> float:
    """Optimal global alignment score; integral whenever the matrix and gap are."""
    cfg = cfg or default_alignment()
    if not s1 or not s2:
        raise EmptyDataError("alignment needs two non-empty sequences")
    a, b = cfg.encode(s1), cfg.encode(s2)
    S = np.asarray(cfg.substitution, dtype=np.float64)
    g = float(cfg.gap_penalty)
    prev = -g * np.arange(len(b) + 1, dtype=np.float64)
    for i, ai in enumerate(a, start=1):
        cur = np.empty_like(prev)
        cur[0] = -g * i
        diag = prev[:-1] + S[ai, b]
        up = prev[1:] - g
        for j in range(1, len(b) + 1):
            cur[j] = max(diag[j - 1], up[j - 1], cur[j - 1] - g)
        prev = cur
    return _tidy(prev[-1])


def recovery_rate(pred: str, truth: str) -> float:
    if len(pred) != len(truth):
        raise ShapeError(f"recovery needs equal lengths, got {len(pred)} and {len(truth)}")
    if not truth:
        raise EmptyDataError("recovery of empty sequences")
    same = sum(p == t for p, t in zip(pred, truth))
    return 100.0 * same / len(truth)


def seq_similarity(pred: str, truth: str, cfg: AlignmentConfig | None = None) -> float:
    denom = nw_score(truth, truth, cfg)
    if denom <= 0:
        raise DegenerateNormalizerError(f"self-alignment score of {truth!r} is {denom}")
    return float(nw_score(pred, truth, cfg)) / float(denom)


def seq_diversity(seqs: Sequence[str], cfg: AlignmentConfig | None = None) -> float:
    """1 - mean over all ordered pairs (i, j), diagonal included, of the normalised score."""
    n = len(seqs)
    if n < 2:
        raise EmptyDataError(f"diversity needs at least two sequences, got {n}")
    self_scores = [float(nw_score(s, s, cfg)) for s in seqs]
    for s, v in zip(seqs, self_scores):
        if v <= 0:
            raise DegenerateNormalizerError(f"self-alignment score of {s!r} is {v}")
    total = 0.0
    for i in range(n):
        for j in range(n):
            if i == j:
                total += 1.0
                continue
            li, lj = len(seqs[i]), len(seqs[j])
            if li != lj:
                norm = self_scores[i] if li > lj else self_scores[j]
            else:
                norm = max(self_scores[i], self_scores[j])
            total += float(nw_score(seqs[i], seqs[j], cfg)) / norm
    return 1.0 - total / (n * n)


__all__ = [
    "DEFAULT_GAP_PENALTY",
    "AlignmentConfig",
    "default_alignment",
    "nw_score",
    "recovery_rate",
    "seq_similarity",
    "seq_diversity",
]
