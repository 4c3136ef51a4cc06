# pepforge structure metrics: rigid superposition, backbone RMSD and TM-score.
#
# Public API:
#   superpose(mobile, target) -> (R, t)       mobile @ R.T + t best matches target
#   kabsch_rmsd(A, B) -> float                over the N, CA, C, O atoms of every residue
#   tm_score(A, B) -> float                   CA pairs by index, fragment-seeded search
#   paired_interior(generated, reference)     residue correspondence used by evaluate

from __future__ import annotations

import logging
import math

import numpy as np

from ..core.errors import EmptyDataError, ShapeError
from ..utils.geometry import Backbone

logger = logging.getLogger(__name__)

TM_D0_FLOOR = 0.5
TM_MAX_ITER = 20
TM_MIN_FRAGMENT = 3


def _points(x: Backbone | np.ndarray) -> np.ndarray:
    if isinstance(x, Backbone):
        return x.coords.reshape(-1, 3)
    return np.asarray(x, dtype=np.float64).reshape(-1, 3)


def superpose(mobile: Backbone | np.ndarray, target: Backbone | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares rotation and translation (SVD with reflection correction)."""
    P, Q = _points(mobile), _points(target)
    if P.shape != Q.shape:
        raise ShapeError(f"cannot superpose {P.shape[0]} points onto {Q.shape[0]}")
    if len(P) == 0:
        raise EmptyDataError("cannot superpose empty point sets")
    cp, cq = P.mean(axis=0), Q.mean(axis=0)
    H = (P - cp).T @ (Q - cq)
    U, _S, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    return R, cq - R @ cp


def kabsch_rmsd(A: Backbone, B: Backbone) -> float:
    if len(A) != len(B):
        raise ShapeError(f"RMSD needs equal residue counts, got {len(A)} and {len(B)}")
    P, Q = _points(A), _points(B)
    R, t = superpose(P, Q)
    diff = P @ R.T + t - Q
    return float(math.sqrt(float(np.mean(np.sum(diff * diff, axis=1)))))


def tm_d0(length: int) -> float:
    return max(TM_D0_FLOOR, 1.24 * float(np.cbrt(length - 15)) - 1.8)


def _tm_from(P: np.ndarray, Q: np.ndarray, sel: np.ndarray, d0: float) -> tuple[float, np.ndarray]:
    R, t = superpose(P[sel], Q[sel])
    d = np.linalg.norm(P @ R.T + t - Q, axis=1)
    return float(np.mean(1.0 / (1.0 + (d / d0) ** 2))), d


def tm_score(A: Backbone, B: Backbone) -> float:
    """
    max over superpositions of mean 1 / (1 + (d_i / d0)^2) on CA pairs. Seeds are every
    contiguous fragment of length L, L/2, L/4, ... (>= 3); each seed is refined by re-fitting on
    the pairs closer than the search cutoff until the selection stops changing.
    """
    if len(A) != len(B):
        raise ShapeError(f"TM-score needs equal residue counts, got {len(A)} and {len(B)}")
    L = len(A)
    if L == 0:
        raise EmptyDataError("TM-score of an empty structure")
    P, Q = A.atom("CA"), B.atom("CA")
    d0 = tm_d0(L)
    d_search = min(max(d0, 4.5), 8.0)

    frag_lengths: list[int] = []
    f = L
    while True:
        frag_lengths.append(f)
        f //= 2
        if f < TM_MIN_FRAGMENT:
            break

    best = 0.0
    for flen in frag_lengths:
        for start in range(0, L - flen + 1):
            sel = np.zeros(L, dtype=bool)
            sel[start : start + flen] = True
            for _ in range(TM_MAX_ITER):
                score, d = _tm_from(P, Q, sel, d0)
                best = max(best, score)
                cut = d_search
                nxt = d < cut
                while nxt.sum() < min(TM_MIN_FRAGMENT, L):
                    cut += 0.5
                    nxt = d < cut
                if np.array_equal(nxt, sel):
                    break
                sel = nxt
    return min(1.0, best)


def paired_interior(generated: Backbone, reference: Backbone) -> tuple[Backbone, Backbone]:
    """
    Generated residue k (k >= 1) sits where reference residue k sits: the sampler emits the seed
    residue plus one residue per interior row, so both sides reduce to the reference interior.
    """
    n = len(reference) - 2
    if n < 1:
        raise ShapeError(f"reference peptide too short for pairing ({len(reference)} residues)")
    if len(generated) < n + 1:
        raise ShapeError(f"generated peptide has {len(generated)} residues, need {n + 1}")
    return generated.slice(1, n + 1), reference.slice(1, n + 1)


__all__ = ["superpose", "kabsch_rmsd", "tm_d0", "tm_score", "paired_interior"]
