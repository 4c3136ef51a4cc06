# FASTA records for sampled and shuffled sequences.

from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np

from ..core.errors import DataError

LINE_WIDTH = 60


@dataclass(frozen=True)
class FastaRecord:
    header: str
    sequence: str


def parse_fasta(text: str) -> list[FastaRecord]:
    records: list[FastaRecord] = []
    header: str | None = None
    chunks: list[str] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith(">"):
            if header is not None:
                records.append(FastaRecord(header, "".join(chunks)))
            header = line[1:].strip()
            chunks = []
        else:
            if header is None:
                raise DataError(f"FASTA line {lineno}: sequence data before the first header")
            chunks.append(line.replace(" ", "").upper())
    if header is not None:
        records.append(FastaRecord(header, "".join(chunks)))
    if not records:
        raise DataError("FASTA input contains no records")
    return records


def format_fasta(records: Iterable[FastaRecord]) -> str:
    out: list[str] = []
    for r in records:
        out.append(f">{r.header}")
        for i in range(0, max(len(r.sequence), 1), LINE_WIDTH):
            out.append(r.sequence[i : i + LINE_WIDTH])
    return "\n".join(out) + "\n"


def sample_header(pdb_id: str, length: int, seed: int) -> str:
    return f"{pdb_id}|{length}|{seed}"


def shuffle_records(records: list[FastaRecord], seed: int) -> list[FastaRecord]:
    """Uniform per-record permutation of letters; lengths and letter multisets are kept."""
    rng = np.random.default_rng(seed)
    out = []
    for r in records:
        perm = rng.permutation(len(r.sequence))
        out.append(FastaRecord(r.header, "".join(r.sequence[i] for i in perm)))
    return out


__all__ = ["FastaRecord", "parse_fasta", "format_fasta", "sample_header", "shuffle_records"]
