# Batch assembly: pad peptides and pockets to the longest member, with validity masks.

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from ..core.errors import EmptyDataError
from ..utils.residues import NUM_AA, encode

if TYPE_CHECKING:
    from ..data.dataset import ComplexExample
    from .structure_diffusion import AngleCalibration


@dataclass(frozen=True, eq=False)
class Batch:
    pdb_ids: tuple[str, ...]
    angles: np.ndarray  # (B, n, 8) raw peptide angles
    x0: np.ndarray  # (B, n, 8) diffusion-space angles (calibrated when a calibration is given)
    residues: np.ndarray  # (B, n) interior residue indices
    pep_mask: np.ndarray  # (B, n) bool
    pocket_angles: np.ndarray  # (B, m, 8)
    pocket_aa: np.ndarray  # (B, m, 20)
    pocket_mask: np.ndarray  # (B, m) bool

    def __len__(self) -> int:
        return len(self.pdb_ids)


def collate(examples: Sequence[ComplexExample], calibration: AngleCalibration | None = None) -> Batch:
    if not examples:
        raise EmptyDataError("cannot collate an empty batch")
    B = len(examples)
    n = max(len(ex.peptide_angles) for ex in examples)
    m = max(len(ex.pocket) for ex in examples)
    angles = np.zeros((B, n, 8))
    x0 = np.zeros((B, n, 8))
    residues = np.zeros((B, n), dtype=np.int64)
    pep_mask = np.zeros((B, n), dtype=bool)
    pocket_angles = np.zeros((B, m, 8))
    pocket_aa = np.zeros((B, m, NUM_AA))
    pocket_mask = np.zeros((B, m), dtype=bool)
    for i, ex in enumerate(examples):
        k = len(ex.peptide_angles)
        a = ex.peptide_angles.angles
        angles[i, :k] = a
        x0[i, :k] = calibration.normalize(a) if calibration is not None else a
        residues[i, :k] = encode(ex.interior_sequence)
        pep_mask[i, :k] = True
        p = len(ex.pocket)
        pocket_angles[i, :p] = ex.pocket.angles
        pocket_aa[i, :p] = ex.pocket.aa_onehot
        pocket_mask[i, :p] = True
    return Batch(
        pdb_ids=tuple(ex.pdb_id for ex in examples),
        angles=angles,
        x0=x0,
        residues=residues,
        pep_mask=pep_mask,
        pocket_angles=pocket_angles,
        pocket_aa=pocket_aa,
        pocket_mask=pocket_mask,
    )


__all__ = ["Batch", "collate"]
