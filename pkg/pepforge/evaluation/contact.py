# Geometric contact rate: share of peptides with a backbone atom within the cutoff of the pocket.

from __future__ import annotations

import logging
from collections.abc import Sequence

import numpy as np

from ..core.errors import EmptyDataError
from ..utils.geometry import Backbone
from .structure import paired_interior, superpose

logger = logging.getLogger(__name__)

CONTACT_CUTOFF = 5.0


def place_on_reference(generated: Backbone, reference: Backbone) -> Backbone:
    """Move a generated peptide into the receptor frame by superposing its paired interior."""
    gen_part, ref_part = paired_interior(generated, reference)
    R, t = superpose(gen_part, ref_part)
    return generated.transformed(R, t)


def in_contact(peptide: Backbone, pocket_atoms: np.ndarray, cutoff: float = CONTACT_CUTOFF) -> bool:
    pts = peptide.coords.reshape(-1, 3)
    pocket = np.asarray(pocket_atoms, dtype=np.float64).reshape(-1, 3)
    if len(pocket) == 0:
        return False
    d = np.linalg.norm(pts[:, None, :] - pocket[None, :, :], axis=-1)
    return bool(d.min() < cutoff)


def contact_rate(
    peptides: Sequence[Backbone],
    pocket: Backbone | np.ndarray,
    cutoff: float = CONTACT_CUTOFF,
) -> float:
    """Percentage of peptides (already in the receptor frame) touching the pocket backbone."""
    if not peptides:
        raise EmptyDataError("contact rate of an empty peptide set")
    atoms = pocket.coords if isinstance(pocket, Backbone) else pocket
    hits = sum(in_contact(p, atoms, cutoff) for p in peptides)
    return 100.0 * hits / len(peptides)


__all__ = ["CONTACT_CUTOFF", "place_on_reference", "in_contact", "contact_rate"]
