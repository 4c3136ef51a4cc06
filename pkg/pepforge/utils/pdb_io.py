# PDB text input/output for backbone-level structures
#
# Reading keeps the first MODEL only, the first alternate location of each atom, and the four
# backbone atoms N, CA, C, O. Residues missing any backbone atom, or whose sequence number does
# not increase within their chain (insertion codes), are dropped and counted.
# Water and HETATM groups without any backbone atom (ligands, ions) are ignored silently.
#
# Public API:
# - Residue / Chain / Structure
# - parse_pdb(data, pdb_id="") -> Structure
# - read_pdb(path) -> Structure
# - format_backbone_pdb(backbone, chain_id="A", ...) -> str

from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass, field

import numpy as np

from ..core.errors import ChainLookupError, DataError, EmptyStructureError
from .geometry import BACKBONE_ATOMS, Backbone
from .residues import ONE_TO_THREE, one_letter

logger = logging.getLogger(__name__)

_WATER = {"HOH", "WAT", "DOD", "H2O"}
_RESOLUTION = re.compile(r"^REMARK\s+2\s+RESOLUTION\.\s+([0-9]+(?:\.[0-9]*)?)")


@dataclass
class Residue:
    seq_num: int
    name: str
    aa: str
    atoms: dict[str, np.ndarray]

    def backbone(self) -> np.ndarray:
        """(4, 3) N, CA, C, O coordinates."""
        return np.stack([self.atoms[a] for a in BACKBONE_ATOMS])


@dataclass
class Chain:
    chain_id: str
    residues: list[Residue] = field(default_factory=list)

    @property
    def sequence(self) -> str:
        return "".join(r.aa for r in self.residues)

    def backbone(self) -> Backbone:
        coords = np.stack([r.backbone() for r in self.residues]) if self.residues else np.zeros((0, 4, 3))
        return Backbone(coords, self.sequence)


@dataclass
class Structure:
    chains: list[Chain]
    resolution: float | None = None
    pdb_id: str = ""
    dropped: int = 0

    @property
    def chain_ids(self) -> list[str]:
        return [c.chain_id for c in self.chains]

    def chain(self, chain_id: str) -> Chain:
        for c in self.chains:
            if c.chain_id == chain_id:
                return c
        raise ChainLookupError(f"[{self.pdb_id}] chain {chain_id!r} not found (have {self.chain_ids})")


def _decode(data: bytes | str) -> str:
    if isinstance(data, str):
        return data
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        return data.decode("latin-1")


def parse_pdb(data: bytes | str, pdb_id: str = "") -> Structure:
    text = _decode(data)
    resolution: float | None = None
    # (chain, seq_num, icode) -> (record, res_name, atoms), insertion-ordered
    groups: dict[tuple[str, int, str], tuple[str, str, dict[str, np.ndarray]]] = {}
    seen_model = False

    for line in text.splitlines():
        rec = line[:6]
        if rec.startswith("REMARK"):
            m = _RESOLUTION.match(line)
            if m:
                resolution = float(m.group(1))
            continue
        if rec.startswith("MODEL"):
            if seen_model:
                break
            seen_model = True
            continue
        if rec.startswith("ENDMDL") or rec.startswith("END   ") or line.strip() == "END":
            break
        if not (rec.startswith("ATOM") or rec.startswith("HETATM")):
            continue
        if len(line) < 54:
            continue
        res_name = line[17:20].strip().upper()
        if res_name in _WATER:
            continue
        atom_name = line[12:16].strip().upper()
        try:
            seq_num = int(line[22:26])
            xyz = np.array([float(line[30:38]), float(line[38:46]), float(line[46:54])])
        except ValueError:
            logger.debug(f"[{pdb_id}] unparsable coordinate record skipped: {line.rstrip()}")
            continue
        chain_id = line[21]
        icode = line[26] if len(line) > 26 else " "
        key = (chain_id, seq_num, icode)
        if key not in groups:
            groups[key] = ("HETATM" if rec.startswith("HETATM") else "ATOM", res_name, {})
        atoms = groups[key][2]
        if atom_name in BACKBONE_ATOMS and atom_name not in atoms:
            atoms[atom_name] = xyz

    if not groups:
        raise EmptyStructureError(f"[{pdb_id}] no parsable ATOM records")

    chains: dict[str, Chain] = {}
    dropped = 0
    for (chain_id, seq_num, _icode), (record, res_name, atoms) in groups.items():
        if record == "HETATM" and not atoms:
            continue
        chain = chains.setdefault(chain_id, Chain(chain_id))
        if len(atoms) < len(BACKBONE_ATOMS):
            dropped += 1
            continue
        if chain.residues and seq_num <= chain.residues[-1].seq_num:
            dropped += 1
            continue
        chain.residues.append(Residue(seq_num, res_name, one_letter(res_name), atoms))

    kept = [c for c in chains.values() if c.residues]
    if not kept:
        raise EmptyStructureError(f"[{pdb_id}] no residue with a complete backbone")
    if dropped:
        logger.warning(f"[{pdb_id}] dropped {dropped} residue(s) with incomplete backbone or non-increasing numbering")
    return Structure(chains=kept, resolution=resolution, pdb_id=pdb_id, dropped=dropped)


def read_pdb(path: str) -> Structure:
    pdb_id = os.path.basename(path).split(".")[0].lower()
    try:
        with open(path, "rb") as f:
            data = f.read()
    except OSError as ex:
        raise DataError(f"cannot read {path}: {ex}") from ex
    return parse_pdb(data, pdb_id=pdb_id)


def format_backbone_pdb(
    backbone: Backbone,
    chain_id: str = "A",
    start_seq: int = 1,
    remarks: list[str] | None = None,
) -> str:
    """ATOM records for a backbone, one residue per sequence letter ('X' written as UNK)."""
    lines = [f"REMARK 250 {r}"[:80] for r in (remarks or [])]
    serial = 1
    for i, (res, aa) in enumerate(zip(backbone.coords, backbone.sequence)):
        res_name = ONE_TO_THREE.get(aa, "UNK")
        for name, xyz in zip(BACKBONE_ATOMS, res):
            element = name[0]
            lines.append(
                f"{'ATOM':<6}{serial:>5} {' ' + name:<4} {res_name:>3} {chain_id:1}{start_seq + i:>4}    "
                f"{xyz[0]:>8.3f}{xyz[1]:>8.3f}{xyz[2]:>8.3f}{1.0:>6.2f}{0.0:>6.2f}          {element:>2}"
            )
            serial += 1
    last = backbone.sequence[-1] if len(backbone) else "G"
    lines.append(f"TER   {serial:>5}      {ONE_TO_THREE.get(last, 'UNK'):>3} {chain_id:1}{start_seq + len(backbone) - 1:>4}")
    lines.append("END")
    return "\n".join(lines) + "\n"


__all__ = ["Residue", "Chain", "Structure", "parse_pdb", "read_pdb", "format_backbone_pdb"]
