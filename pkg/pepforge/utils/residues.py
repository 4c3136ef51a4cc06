# Amino-acid alphabet shared by datasets, checkpoints, and metrics.
#
# Index order is alphabetical by one-letter code and is written into every example document
# and checkpoint so a mismatch is detectable on load.

from __future__ import annotations

import numpy as np

from ..core.errors import AlphabetError

AA_ORDER = "ACDEFGHIKLMNPQRSTVWY"
NUM_AA = len(AA_ORDER)
AA_INDEX: dict[str, int] = {aa: i for i, aa in enumerate(AA_ORDER)}

THREE_TO_ONE: dict[str, str] = {
    "ALA": "A", "CYS": "C", "ASP": "D", "GLU": "E", "PHE": "F",
    "GLY": "G", "HIS": "H", "ILE": "I", "LYS": "K", "LEU": "L",
    "MET": "M", "ASN": "N", "PRO": "P", "GLN": "Q", "ARG": "R",
    "SER": "S", "THR": "T", "VAL": "V", "TRP": "W", "TYR": "Y",
}
ONE_TO_THREE: dict[str, str] = {v: k for k, v in THREE_TO_ONE.items()}

UNKNOWN_AA = "X"


def one_letter(res_name: str) -> str:
    """Map a three-letter residue name to its one-letter code, 'X' when non-canonical."""
    return THREE_TO_ONE.get(res_name.strip().upper(), UNKNOWN_AA)


def encode(sequence: str) -> np.ndarray:
    """Sequence string -> integer indices in AA_ORDER."""
    try:
        return np.array([AA_INDEX[c] for c in sequence], dtype=np.int64)
    except KeyError as e:
        raise AlphabetError(f"Unknown amino-acid letter {e.args[0]!r} in {sequence!r}") from e


def decode(indices: np.ndarray) -> str:
    return "".join(AA_ORDER[int(i)] for i in indices)


def one_hot(sequence: str) -> np.ndarray:
    """Sequence string -> (n, 20) one-hot matrix."""
    idx = encode(sequence)
    out = np.zeros((len(idx), NUM_AA), dtype=np.float64)
    out[np.arange(len(idx)), idx] = 1.0
    return out


__all__ = [
    "AA_ORDER",
    "NUM_AA",
    "AA_INDEX",
    "THREE_TO_ONE",
    "ONE_TO_THREE",
    "UNKNOWN_AA",
    "one_letter",
    "encode",
    "decode",
    "one_hot",
]
