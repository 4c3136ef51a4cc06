# pepforge dataset: complexes -> training examples
#
# Responsibilities:
# - Filtering rules for receptor-peptide complexes (resolution, peptide length, unknown residue
#   types, broken peptide geometry) with a per-rule rejection report
# - Pocket detection (backbone atoms within a cutoff of any peptide backbone atom) and ext-k
#   expansion along receptor chains
# - Example construction: peptide internal coordinates + one-hot types, pocket angle rows +
#   one-hot types, contact residues kept for evaluation
# - Deterministic train/val/test partitions and JSON documents for examples and splits
#
# Public API:
# - filter_complex(s, peptide_chain) -> FilterResult
# - find_pocket(s, peptide_chain, cutoff, receptor_chains=None) -> list[ResidueId]
# - extend_pocket(pocket_ids, k, s) -> list[ResidueId]
# - build_example(s, peptide_chain, k, ...) -> ComplexExample
# - split_dataset(pdb_ids, ratios, seed) -> DatasetSplit
# - example_to_doc / example_from_doc / save_example / load_example / save_split / load_split
# - read_complex_table(path) -> list[ComplexEntry]

from __future__ import annotations

import json
import logging
import math
import os
from collections import Counter
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..core.errors import (
    ConfigError,
    DataError,
    DatasetSizeError,
    EmptyPocketError,
    InvariantError,
    PepforgeError,
    ShapeError,
)
from ..utils.atomic_io import write_json
from ..utils.config_validation import assert_valid_example_doc
from ..utils.geometry import (
    MAX_BOND_LENGTH,
    Backbone,
    InternalCoords,
    angle_rows,
    extract_internal,
)
from ..utils.pdb_io import Chain, Structure
from ..utils.residues import AA_ORDER, UNKNOWN_AA, one_hot

logger = logging.getLogger(__name__)

MAX_RESOLUTION = 5.0
MIN_PEPTIDE_LENGTH = 5
MAX_PEPTIDE_LENGTH = 30

# Rule names used in reasons and the rejection report
RULES = ("resolution", "length", "unknown", "geometry")

ResidueId = tuple[str, int]


# -----------------
# Types
# -----------------
@dataclass(frozen=True, eq=False)
class PocketRepr:
    """m pocket residues: (m, 8) angle rows, residue types, and (chain, seq_num) provenance."""
    angles: np.ndarray
    aa: str
    ids: tuple[ResidueId, ...]

    def __post_init__(self) -> None:
        a = np.asarray(self.angles, dtype=np.float64).reshape(-1, 8)
        if not (a.shape[0] == len(self.aa) == len(self.ids)):
            raise ShapeError(
                f"pocket rows disagree: angles={a.shape[0]} aa={len(self.aa)} ids={len(self.ids)}"
            )
        if a.shape[0] == 0:
            raise EmptyPocketError("pocket representation has no residues")
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)
        object.__setattr__(self, "ids", tuple((str(c), int(n)) for c, n in self.ids))

    def __len__(self) -> int:
        return len(self.aa)

    @property
    def aa_onehot(self) -> np.ndarray:
        return one_hot(self.aa)


@dataclass(frozen=True, eq=False)
class ComplexExample:
    pdb_id: str
    receptor_chains: tuple[str, ...]
    peptide_chain: str
    ext_k: int
    pocket_cutoff: float
    resolution: float | None
    peptide: Backbone
    peptide_angles: InternalCoords
    pocket: PocketRepr
    contact_ids: tuple[ResidueId, ...]
    contact_backbone: np.ndarray

    def __post_init__(self) -> None:
        L = len(self.peptide)
        if not (MIN_PEPTIDE_LENGTH <= L <= MAX_PEPTIDE_LENGTH):
            raise InvariantError(f"[{self.pdb_id}] peptide length {L} outside [5, 30]")
        if len(self.peptide_angles) != L - 2:
            raise ShapeError(f"[{self.pdb_id}] peptide angles have {len(self.peptide_angles)} rows for L={L}")

    @property
    def sequence(self) -> str:
        return self.peptide.sequence

    @property
    def interior_sequence(self) -> str:
        """Residue types aligned with the angle rows (first and last residue dropped)."""
        return self.peptide.sequence[1:-1]

    @property
    def peptide_onehot(self) -> np.ndarray:
        return one_hot(self.peptide.sequence)


@dataclass
class FilterResult:
    accepted: bool
    reasons: list[str] = field(default_factory=list)

    @property
    def reason(self) -> str:
        return ",".join(self.reasons)


@dataclass(frozen=True)
class ComplexEntry:
    """One row of complexes.tsv: pdb id, receptor chains, peptide chain."""
    pdb_id: str
    receptor_chains: tuple[str, ...]
    peptide_chain: str


@dataclass
class RejectionReport:
    total: int = 0
    accepted: int = 0
    counts: Counter = field(default_factory=Counter)
    rejected: list[dict[str, Any]] = field(default_factory=list)

    def reject(self, pdb_id: str, reasons: Sequence[str]) -> None:
        for r in reasons:
            self.counts[r] += 1
        self.rejected.append({"pdb_id": pdb_id, "reasons": list(reasons)})

    def to_dict(self) -> dict[str, Any]:
        return {
            "total": self.total,
            "accepted": self.accepted,
            "counts": {k: int(self.counts[k]) for k in sorted(self.counts)},
            "rejected": self.rejected,
        }


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    seed: int
    ratios: tuple[float, float, float]

    def partition(self, name: str) -> tuple[str, ...]:
        if name not in ("train", "val", "test"):
            raise ConfigError(f"unknown split partition {name!r}")
        return getattr(self, name)

    def to_dict(self) -> dict[str, Any]:
        return {
            "seed": self.seed,
            "ratios": list(self.ratios),
            "train": list(self.train),
            "val": list(self.val),
            "test": list(self.test),
        }


# -----------------
# Filtering
# -----------------
def _peptide_geometry_ok(chain: Chain) -> bool:
    try:
        chain.backbone().check_invariants()
    except PepforgeError:
        return False
    return True


def filter_complex(s: Structure, peptide_chain: str) -> FilterResult:
    """Apply every rule and report all violated ones; raises ChainLookupError for a missing chain."""
    chain = s.chain(peptide_chain)
    reasons: list[str] = []
    if s.resolution is not None and s.resolution > MAX_RESOLUTION:
        reasons.append("resolution")
    L = len(chain.residues)
    if L < MIN_PEPTIDE_LENGTH or L > MAX_PEPTIDE_LENGTH:
        reasons.append("length")
    if UNKNOWN_AA in chain.sequence:
        reasons.append("unknown")
    if L >= 2 and not _peptide_geometry_ok(chain):
        reasons.append("geometry")
    return FilterResult(accepted=not reasons, reasons=reasons)


# -----------------
# Pocket
# -----------------
def _receptor(s: Structure, peptide_chain: str, receptor_chains: Sequence[str] | None) -> list[Chain]:
    if receptor_chains:
        return [s.chain(c) for c in receptor_chains if c != peptide_chain]
    return [c for c in s.chains if c.chain_id != peptide_chain]


def find_pocket(
    s: Structure,
    peptide_chain: str,
    cutoff: float,
    receptor_chains: Sequence[str] | None = None,
) -> list[ResidueId]:
    """Receptor residues with any backbone atom closer than `cutoff` to any peptide backbone atom."""
    if not (cutoff > 0 and math.isfinite(cutoff)):
        raise ConfigError(f"pocket cutoff must be > 0, got {cutoff}")
    pep = s.chain(peptide_chain).backbone().coords.reshape(-1, 3)
    ids: list[ResidueId] = []
    for chain in _receptor(s, peptide_chain, receptor_chains):
        for res in chain.residues:
            d = np.linalg.norm(res.backbone()[:, None, :] - pep[None, :, :], axis=-1)
            if float(d.min()) < cutoff:
                ids.append((chain.chain_id, res.seq_num))
    if not ids:
        raise EmptyPocketError(f"[{s.pdb_id}] no receptor residue within {cutoff} A of chain {peptide_chain}")
    return sorted(ids)


def extend_pocket(pocket_ids: Iterable[ResidueId], k: int, s: Structure) -> list[ResidueId]:
    """
    Add the residues numbered seq_num +-1..+-k around every pocket residue in its chain.
    Neighbours follow residue numbering, so a numbering gap or a chain end contributes nothing.
    """
    if k < 0:
        raise ConfigError(f"ext_k must be >= 0, got {k}")
    out: set[ResidueId] = set()
    present: dict[str, set[int]] = {}
    for cid, num in pocket_ids:
        nums = present.setdefault(cid, {r.seq_num for r in s.chain(cid).residues})
        if num not in nums:
            raise DataError(f"[{s.pdb_id}] residue {cid}{num} not present in chain {cid}")
        out.update((cid, j) for j in range(num - k, num + k + 1) if j in nums)
    return sorted(out)


def _linked(chain: Chain, i: int, j: int) -> bool:
    c = chain.residues[i].atoms["C"]
    n = chain.residues[j].atoms["N"]
    return float(np.linalg.norm(n - c)) < MAX_BOND_LENGTH


def pocket_repr(s: Structure, ids: Sequence[ResidueId]) -> PocketRepr:
    """
    Angle rows for pocket residues. A residue needs a bonded predecessor and successor in its
    chain and a canonical type; others are dropped rather than filled.
    """
    rows: list[np.ndarray] = []
    aa: list[str] = []
    kept: list[ResidueId] = []
    dropped = 0
    for cid, num in ids:
        chain = s.chain(cid)
        pos = {r.seq_num: i for i, r in enumerate(chain.residues)}
        i = pos[num]
        res = chain.residues[i]
        if i == 0 or i == len(chain.residues) - 1 or res.aa == UNKNOWN_AA:
            dropped += 1
            continue
        if not (_linked(chain, i - 1, i) and _linked(chain, i, i + 1)):
            dropped += 1
            continue
        prev = chain.residues[i - 1].backbone()[None]
        rows.append(angle_rows(prev, res.backbone()[None])[0])
        aa.append(res.aa)
        kept.append((cid, num))
    if dropped:
        logger.debug(f"[{s.pdb_id}] {dropped} pocket residue(s) without computable angles dropped")
    if not kept:
        raise EmptyPocketError(f"[{s.pdb_id}] no pocket residue has computable angles")
    return PocketRepr(angles=np.stack(rows), aa="".join(aa), ids=tuple(kept))


def build_example(
    s: Structure,
    peptide_chain: str,
    k: int,
    cutoff: float = 5.0,
    receptor_chains: Sequence[str] | None = None,
) -> ComplexExample:
    verdict = filter_complex(s, peptide_chain)
    if not verdict.accepted:
        raise DataError(f"[{s.pdb_id}] complex rejected: {verdict.reason}")
    chain = s.chain(peptide_chain)
    peptide = chain.backbone()
    contact = find_pocket(s, peptide_chain, cutoff, receptor_chains)
    extended = extend_pocket(contact, k, s)
    pocket = pocket_repr(s, extended)
    contact_bb = np.stack(
        [
            next(r for r in s.chain(cid).residues if r.seq_num == num).backbone()
            for cid, num in contact
        ]
    )
    receptor = tuple(receptor_chains) if receptor_chains else tuple(
        c.chain_id for c in s.chains if c.chain_id != peptide_chain
    )
    logger.debug(
        f"[{s.pdb_id}] example: L={len(peptide)} contact={len(contact)} ext{k}={len(extended)} m={len(pocket)}"
    )
    return ComplexExample(
        pdb_id=s.pdb_id,
        receptor_chains=receptor,
        peptide_chain=peptide_chain,
        ext_k=int(k),
        pocket_cutoff=float(cutoff),
        resolution=s.resolution,
        peptide=peptide,
        peptide_angles=extract_internal(peptide),
        pocket=pocket,
        contact_ids=tuple(contact),
        contact_backbone=contact_bb,
    )


# -----------------
# Splits
# -----------------
def _partition_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder sizes; each differs from ratio*n by less than 1."""
    raw = [r * n for r in ratios]
    sizes = [int(math.floor(x + 1e-9)) for x in raw]
    rest = n - sum(sizes)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - sizes[i]), i))
    for i in order[:rest]:
        sizes[i] += 1
    return sizes


def split_dataset(pdb_ids: Sequence[str], ratios: Sequence[float], seed: int) -> DatasetSplit:
    """Deterministic partition of unique PDB ids into train/val/test."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-6:
        raise ConfigError(f"split ratios must be three non-negative numbers summing to 1, got {list(ratios)}")
    unique = sorted(set(pdb_ids))
    if len(unique) != len(pdb_ids):
        logger.warning(f"split_dataset: {len(pdb_ids) - len(unique)} duplicate PDB id(s) removed")
    wanted = sum(1 for r in ratios if r > 0)
    if len(unique) < wanted:
        raise DatasetSizeError(f"{len(unique)} example(s) cannot fill {wanted} partitions")
    rng = np.random.default_rng(seed)
    order = [unique[i] for i in rng.permutation(len(unique))]
    n_train, n_val, _ = _partition_sizes(len(unique), ratios)
    return DatasetSplit(
        train=tuple(order[:n_train]),
        val=tuple(order[n_train : n_train + n_val]),
        test=tuple(order[n_train + n_val :]),
        seed=int(seed),
        ratios=(float(ratios[0]), float(ratios[1]), float(ratios[2])),
    )


def dedupe_entries(entries: Sequence[ComplexEntry]) -> list[ComplexEntry]:
    """One entry per PDB id; the lexicographically first (pdb_id, peptide chain, receptors) wins."""
    best: dict[str, ComplexEntry] = {}
    for e in sorted(entries, key=lambda e: (e.pdb_id, e.peptide_chain, e.receptor_chains)):
        if e.pdb_id in best:
            logger.warning(f"[{e.pdb_id}] duplicate PDB id, keeping peptide chain {best[e.pdb_id].peptide_chain}")
            continue
        best[e.pdb_id] = e
    return [best[k] for k in sorted(best)]


# -----------------
# Documents
# -----------------
def _ids_doc(ids: Iterable[ResidueId]) -> list[list[Any]]:
    return [[c, int(n)] for c, n in ids]


def example_to_doc(ex: ComplexExample) -> dict[str, Any]:
    return {
        "meta": {
            "pdb_id": ex.pdb_id,
            "receptor_chains": list(ex.receptor_chains),
            "peptide_chain": ex.peptide_chain,
            "ext_k": ex.ext_k,
            "pocket_cutoff": ex.pocket_cutoff,
            "resolution": ex.resolution,
            "aa_order": AA_ORDER,
        },
        "peptide": {
            "seq": ex.sequence,
            "angles": ex.peptide_angles.angles.tolist(),
            "backbone": ex.peptide.coords.tolist(),
        },
        "pocket": {
            "aa": ex.pocket.aa,
            "angles": ex.pocket.angles.tolist(),
            "ids": _ids_doc(ex.pocket.ids),
            "contact": {
                "ids": _ids_doc(ex.contact_ids),
                "backbone": np.asarray(ex.contact_backbone).tolist(),
            },
        },
    }


def example_from_doc(doc: dict[str, Any]) -> ComplexExample:
    assert_valid_example_doc(doc)
    meta, pep, poc = doc["meta"], doc["peptide"], doc["pocket"]
    seq = pep["seq"]
    peptide = Backbone(np.asarray(pep["backbone"], dtype=np.float64), seq)
    contact = poc["contact"]
    contact_bb = np.asarray(contact["backbone"], dtype=np.float64).reshape(-1, 4, 3)
    return ComplexExample(
        pdb_id=meta["pdb_id"],
        receptor_chains=tuple(meta.get("receptor_chains", [])),
        peptide_chain=meta.get("peptide_chain", ""),
        ext_k=int(meta["ext_k"]),
        pocket_cutoff=float(meta.get("pocket_cutoff", 5.0)),
        resolution=meta.get("resolution"),
        peptide=peptide,
        peptide_angles=InternalCoords(np.asarray(pep["angles"], dtype=np.float64), source_length=len(seq)),
        pocket=PocketRepr(
            angles=np.asarray(poc["angles"], dtype=np.float64),
            aa=poc["aa"],
            ids=tuple((c, n) for c, n in poc["ids"]),
        ),
        contact_ids=tuple((c, n) for c, n in contact["ids"]),
        contact_backbone=contact_bb,
    )


def example_path(data_dir: str, pdb_id: str) -> str:
    return os.path.join(data_dir, f"{pdb_id}.example.json")


def save_example(path: str, ex: ComplexExample) -> None:
    write_json(path, example_to_doc(ex))


def _read_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as f:
            return json.load(f)
    except OSError as ex:
        raise DataError(f"cannot read {path}: {ex}") from ex
    except ValueError as ex:
        raise DataError(f"{path} is not valid JSON: {ex}") from ex


def load_example(path: str) -> ComplexExample:
    return example_from_doc(_read_json(path))


def save_split(path: str, split: DatasetSplit) -> None:
    write_json(path, split.to_dict())


def load_split(path: str) -> DatasetSplit:
    doc = _read_json(path)
    try:
        return DatasetSplit(
            train=tuple(doc["train"]),
            val=tuple(doc["val"]),
            test=tuple(doc["test"]),
            seed=int(doc["seed"]),
            ratios=tuple(float(r) for r in doc["ratios"]),  # type: ignore[arg-type]
        )
    except (KeyError, TypeError, ValueError) as ex:
        raise DataError(f"{path} is not a split manifest: {ex}") from ex


def load_partition(data_dir: str, name: str) -> list[ComplexExample]:
    """Examples of one split partition, in manifest order."""
    split = load_split(os.path.join(data_dir, "split.json"))
    return [load_example(example_path(data_dir, pid)) for pid in split.partition(name)]


def read_complex_table(path: str) -> list[ComplexEntry]:
    """
    Tab-separated `pdb_id  receptor_chains  peptide_chain`; receptor chains comma-separated or
    '*' for every non-peptide chain. Blank lines, '#' comments and a `pdb_id` header are skipped.
    """
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.read().splitlines()
    except OSError as ex:
        raise DataError(f"cannot read {path}: {ex}") from ex
    out: list[ComplexEntry] = []
    for lineno, line in enumerate(lines, start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        cols = [c.strip() for c in text.split("\t")]
        if cols[0].lower() == "pdb_id":
            continue
        if len(cols) != 3 or not cols[0] or len(cols[2]) != 1:
            raise DataError(f"{path}:{lineno}: expected 'pdb_id<TAB>receptor_chains<TAB>peptide_chain'")
        receptors = () if cols[1] in ("", "*") else tuple(c.strip() for c in cols[1].split(",") if c.strip())
        out.append(ComplexEntry(pdb_id=cols[0].lower(), receptor_chains=receptors, peptide_chain=cols[2]))
    return out


__all__ = [
    "RULES",
    "ResidueId",
    "PocketRepr",
    "ComplexExample",
    "FilterResult",
    "ComplexEntry",
    "RejectionReport",
    "DatasetSplit",
    "filter_complex",
    "find_pocket",
    "extend_pocket",
    "pocket_repr",
    "build_example",
    "split_dataset",
    "dedupe_entries",
    "example_to_doc",
    "example_from_doc",
    "example_path",
    "save_example",
    "load_example",
    "save_split",
    "load_split",
    "load_partition",
    "read_complex_table",
]
