import math
import os

import numpy as np
import pytest

from pepforge.utils.geometry import Backbone, ideal_backbone
from pepforge.utils.pdb_io import format_backbone_pdb, parse_pdb

HELIX = (math.radians(-57.0), math.radians(-47.0))
STRAND = (math.radians(-120.0), math.radians(130.0))
RECEPTOR_SEQ = "ACDEFGHIKLMNPQRSTVWY"
CONTACT_GAP = 3.5


@pytest.fixture(autouse=True)
def _isolated_home(tmp_path, monkeypatch):
    """History and config lookups stay inside the test's tmp dir."""
    home = tmp_path / "home"
    home.mkdir()
    monkeypatch.setenv("PEPFORGE_HOME", str(home))
    monkeypatch.setenv("HOME", str(home))
    monkeypatch.setenv("XDG_CONFIG_HOME", str(home / "xdg"))
    monkeypatch.delenv("PEPFORGE_SEED", raising=False)
    monkeypatch.chdir(tmp_path)


def _axis(points):
    centred = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centred)
    return vt[0]


def _rotation_onto(v, u):
    """Rotation taking unit vector v onto unit vector u (v, u not antiparallel)."""
    k = np.cross(v, u)
    c = float(np.dot(v, u))
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + kx + kx @ kx / (1.0 + c)


def _perpendicular(u, turn):
    e = np.eye(3)[int(np.argmin(np.abs(u)))]
    a = np.cross(u, e)
    a /= np.linalg.norm(a)
    b = np.cross(u, a)
    return math.cos(turn) * a + math.sin(turn) * b


def dock_peptide(receptor: Backbone, peptide: Backbone, turn: float = 0.0, gap: float = CONTACT_GAP) -> Backbone:
    """Lay the peptide alongside the receptor with its closest backbone atoms about `gap` apart."""
    u = _axis(receptor.atom("CA"))
    v = _axis(peptide.atom("CA"))
    if np.dot(u, v) < 0:
        v = -v
    R = _rotation_onto(v, u)
    centred = peptide.transformed(R, -peptide.atom("CA").mean(axis=0) @ R.T)
    direction = _perpendicular(u, turn)
    centre = receptor.atom("CA").mean(axis=0)
    rec = receptor.coords.reshape(-1, 3)
    for d in np.arange(5.0, 30.0, 0.02):
        placed = centred.transformed(np.eye(3), centre + d * direction)
        pts = placed.coords.reshape(-1, 3)
        if np.linalg.norm(rec[:, None] - pts[None], axis=-1).min() >= gap:
            return placed
    raise AssertionError("could not place peptide")


def complex_pdb_text(chains, resolution=2.0) -> str:
    """PDB text for [(chain_id, Backbone), ...] with an optional resolution remark."""
    lines = []
    if resolution is not None:
        lines.append(f"REMARK   2 RESOLUTION.    {resolution:.2f} ANGSTROMS.")
    for chain_id, bb in chains:
        block = format_backbone_pdb(bb, chain_id=chain_id)
        lines.extend(line for line in block.splitlines() if line != "END")
    lines.append("END")
    return "\n".join(lines) + "\n"


def synthetic_complex(peptide_seq="KLVFAEDV", turn=0.0, resolution=2.0, receptor_len=20):
    receptor = ideal_backbone(receptor_len, *HELIX, sequence=RECEPTOR_SEQ[:receptor_len])
    peptide = dock_peptide(receptor, ideal_backbone(len(peptide_seq), *STRAND, sequence=peptide_seq), turn=turn)
    return receptor, peptide, complex_pdb_text([("A", receptor), ("P", peptide)], resolution=resolution)


PEPTIDES = ("KLVFAEDV", "GSWTRQ", "MNPYHIKL", "DEFGHIKLMN", "RSTVWY")


def write_pdb_dir(root, rejected=True):
    """Directory with five dockable complexes and a complexes.tsv; optionally one low-resolution entry."""
    pdb_dir = root / "pdb"
    pdb_dir.mkdir()
    rows = ["pdb_id\treceptor_chains\tpeptide_chain"]
    for i, seq in enumerate(PEPTIDES):
        pid = f"{i + 1}abc"
        _, _, text = synthetic_complex(seq, turn=0.7 * i)
        (pdb_dir / f"{pid}.pdb").write_text(text)
        rows.append(f"{pid}\tA\tP")
    if rejected:
        _, _, text = synthetic_complex("KLVFAE", resolution=5.5)
        (pdb_dir / "9low.pdb").write_text(text)
        rows.append("9low\t*\tP")
    (pdb_dir / "complexes.tsv").write_text("\n".join(rows) + "\n")
    return pdb_dir


@pytest.fixture
def complex_structure():
    _, _, text = synthetic_complex()
    return parse_pdb(text, pdb_id="1abc")


@pytest.fixture
def pdb_dir(tmp_path):
    return write_pdb_dir(tmp_path)


def read_bytes(path) -> bytes:
    with open(os.fspath(path), "rb") as f:
        return f.read()
