# pepforge geometry: backbone internal coordinates
#
# Angle algebra, dihedral/bond-angle extraction from Cartesian backbones, and exact
# reconstruction (NeRF placement) of backbones from internal coordinates.
#
# Per interior residue i the eight angles are, in column order:
#   psi    = dihedral N(i-1)-CA(i-1)-C(i-1)-N(i)
#   omega  = dihedral CA(i-1)-C(i-1)-N(i)-CA(i)
#   phi    = dihedral C(i-1)-N(i)-CA(i)-C(i)
#   delta  = dihedral N(i)-CA(i)-C(i)-O(i)
#   theta1 = angle CA(i-1)-C(i-1)-N(i)
#   theta2 = angle C(i-1)-N(i)-CA(i)
#   theta3 = angle N(i)-CA(i)-C(i)
#   theta4 = angle CA(i)-C(i)-O(i)
# First and last residues are not represented (rows == L - 2).
#
# Reconstruction places atoms in N -> CA -> C -> O order, using (psi, theta1), (omega, theta2),
# (phi, theta3), (delta, theta4) respectively.
#
# Public API:
# - wrap_angle(x) -> radians in [-pi, pi)
# - dihedral(p1, p2, p3, p4) / bond_angle(p1, p2, p3)
# - extract_internal(backbone) -> InternalCoords
# - place_atom(a, b, c, bond_len, bond_ang, dihedral) -> Vec3
# - reconstruct(ic, lens, seed=None, sequence=None) -> Backbone
# - measure_bond_lengths(backbone) -> list[BondLengthSet]
# - ideal_backbone(length, phi, psi, ...) -> Backbone

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..core.errors import (
    DegenerateGeometryError,
    InvalidValueError,
    InvariantError,
    ShapeError,
    TooShortError,
)

Vec3 = np.ndarray

ANGLE_NAMES: tuple[str, ...] = (
    "psi", "omega", "phi", "delta", "theta1", "theta2", "theta3", "theta4",
)
DIHEDRAL_COLUMNS: tuple[int, ...] = (0, 1, 2, 3)
BOND_ANGLE_COLUMNS: tuple[int, ...] = (4, 5, 6, 7)
BACKBONE_ATOMS: tuple[str, ...] = ("N", "CA", "C", "O")

# Chain connectivity bound for C(i-1)-N(i), and the bound every bond length must respect
MAX_BOND_LENGTH = 2.0
_EPS = 1e-9


class AngleRow(NamedTuple):
    psi: float
    omega: float
    phi: float
    delta: float
    theta1: float
    theta2: float
    theta3: float
    theta4: float


@dataclass(frozen=True)
class BondLengthSet:
    """Backbone bond lengths in Angstrom."""
    n_ca: float
    ca_c: float
    c_n: float
    c_o: float

    def __post_init__(self) -> None:
        for name in ("n_ca", "ca_c", "c_n", "c_o"):
            v = float(getattr(self, name))
            if not math.isfinite(v) or v <= 0.0 or v >= MAX_BOND_LENGTH:
                raise InvalidValueError(f"bond length {name}={v} outside (0, {MAX_BOND_LENGTH})")


# Engh-Huber values used for generation-time reconstruction
FIXED_BOND_LENGTHS = BondLengthSet(n_ca=1.458, ca_c=1.525, c_n=1.329, c_o=1.231)
# N-CA-C angle of the de novo seed frame
SEED_N_CA_C_ANGLE = 1.937

# Canonical bond angles (radians) for building ideal backbones
IDEAL_THETA1 = math.radians(116.2)  # CA-C-N
IDEAL_THETA2 = math.radians(121.7)  # C-N-CA
IDEAL_THETA3 = math.radians(111.0)  # N-CA-C
IDEAL_THETA4 = math.radians(120.5)  # CA-C-O


@dataclass(frozen=True, eq=False)
class InternalCoords:
    """(n, 8) angle matrix of interior residues of a peptide of source_length residues."""
    angles: np.ndarray
    source_length: int

    def __post_init__(self) -> None:
        a = np.asarray(self.angles, dtype=np.float64)
        if a.ndim != 2 or a.shape[1] != 8:
            raise ShapeError(f"InternalCoords expects an (n, 8) matrix, got {a.shape}")
        if a.shape[0] != int(self.source_length) - 2:
            raise ShapeError(
                f"rows ({a.shape[0]}) must equal source_length - 2 ({int(self.source_length) - 2})"
            )
        if not np.all(np.isfinite(a)):
            raise InvalidValueError("InternalCoords contains non-finite angles")
        dih = a[:, DIHEDRAL_COLUMNS]
        if np.any(dih < -math.pi) or np.any(dih >= math.pi):
            raise InvariantError("dihedral columns must lie in [-pi, pi)")
        ba = a[:, BOND_ANGLE_COLUMNS]
        if np.any(ba <= 0.0) or np.any(ba > math.pi):
            raise InvariantError("bond-angle columns must lie in (0, pi]")
        a.setflags(write=False)
        object.__setattr__(self, "angles", a)

    def __len__(self) -> int:
        return int(self.angles.shape[0])

    @property
    def rows(self) -> list[AngleRow]:
        return [AngleRow(*map(float, r)) for r in self.angles]

    def column(self, name: str) -> np.ndarray:
        return self.angles[:, ANGLE_NAMES.index(name)]


@dataclass(frozen=True, eq=False)
class Backbone:
    """Per-residue N, CA, C, O coordinates, shape (L, 4, 3), with one-letter residue codes."""
    coords: np.ndarray
    sequence: str

    def __post_init__(self) -> None:
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 3 or c.shape[1:] != (4, 3):
            raise ShapeError(f"Backbone coords must be (L, 4, 3), got {c.shape}")
        if len(self.sequence) != c.shape[0]:
            raise ShapeError(
                f"sequence length {len(self.sequence)} != residue count {c.shape[0]}"
            )
        if not np.all(np.isfinite(c)):
            raise InvalidValueError("Backbone contains non-finite coordinates")
        c.setflags(write=False)
        object.__setattr__(self, "coords", c)

    def __len__(self) -> int:
        return int(self.coords.shape[0])

    @property
    def residues(self) -> list[dict[str, object]]:
        return [
            {"N": r[0], "CA": r[1], "C": r[2], "O": r[3], "aa": aa}
            for r, aa in zip(self.coords, self.sequence)
        ]

    def atom(self, name: str) -> np.ndarray:
        """(L, 3) coordinates of one backbone atom type."""
        return self.coords[:, BACKBONE_ATOMS.index(name)]

    def transformed(self, rotation: np.ndarray, translation: np.ndarray) -> Backbone:
        return Backbone(self.coords @ np.asarray(rotation).T + np.asarray(translation), self.sequence)

    def slice(self, start: int, stop: int) -> Backbone:
        return Backbone(self.coords[start:stop], self.sequence[start:stop])

    def check_invariants(self) -> None:
        """Raise when chain connectivity or atom uniqueness is violated."""
        flat = self.coords.reshape(-1, 3)
        if len(flat) > 1:
            d = np.linalg.norm(flat[:, None, :] - flat[None, :, :], axis=-1)
            d[np.diag_indices_from(d)] = np.inf
            if np.any(d < 1e-6):
                i, j = np.unravel_index(int(np.argmin(d)), d.shape)
                raise DegenerateGeometryError(
                    f"duplicated atom positions at residues {i // 4} and {j // 4}"
                )
        if len(self) > 1:
            cn = np.linalg.norm(self.coords[1:, 0] - self.coords[:-1, 2], axis=-1)
            bad = np.nonzero(cn >= MAX_BOND_LENGTH)[0]
            if bad.size:
                raise InvariantError(
                    f"chain break between residues {int(bad[0])} and {int(bad[0]) + 1} "
                    f"(C-N {cn[bad[0]]:.2f} A)"
                )


# -----------------
# Angle algebra
# -----------------
def wrap_angle(x: float | np.ndarray) -> float | np.ndarray:
    """Map radians into [-pi, pi). Values already inside the interval are returned unchanged."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise InvalidValueError("wrap_angle received a non-finite value")
    wrapped = np.mod(arr + math.pi, 2.0 * math.pi) - math.pi
    # np.mod can round up to exactly 2*pi for tiny negative inputs
    wrapped = np.where(wrapped >= math.pi, wrapped - 2.0 * math.pi, wrapped)
    out = np.where((arr >= -math.pi) & (arr < math.pi), arr, wrapped)
    if np.ndim(x) == 0:
        return float(out)
    return out


def _as_points(*points: object) -> list[np.ndarray]:
    out = []
    for p in points:
        a = np.asarray(p, dtype=np.float64)
        if a.shape[-1] != 3:
            raise ShapeError(f"expected 3D points, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise InvalidValueError("non-finite coordinate")
        out.append(a)
    return out


def _dihedrals(p1: np.ndarray, p2: np.ndarray, p3: np.ndarray, p4: np.ndarray) -> np.ndarray:
    """Vectorised signed torsion about p2->p3, shape (..., 3) -> (...)."""
    b1 = p2 - p1
    b2 = p3 - p2
    b3 = p4 - p3
    nb1 = np.linalg.norm(b1, axis=-1)
    nb2 = np.linalg.norm(b2, axis=-1)
    nb3 = np.linalg.norm(b3, axis=-1)
    if np.any(nb1 < _EPS) or np.any(nb2 < _EPS) or np.any(nb3 < _EPS):
        raise DegenerateGeometryError("dihedral: consecutive points coincide")
    n1 = np.cross(b1, b2)
    n2 = np.cross(b2, b3)
    if np.any(np.linalg.norm(n1, axis=-1) < _EPS * nb1 * nb2) or np.any(
        np.linalg.norm(n2, axis=-1) < _EPS * nb2 * nb3
    ):
        raise DegenerateGeometryError("dihedral: collinear frame")
    y = np.sum(np.cross(n1, n2) * (b2 / nb2[..., None]), axis=-1)
    x = np.sum(n1 * n2, axis=-1)
    return np.asarray(wrap_angle(np.arctan2(y, x)))


def _bond_angles(p1: np.ndarray, p2: np.ndarray, p3: np.ndarray) -> np.ndarray:
    v1 = p1 - p2
    v2 = p3 - p2
    if np.any(np.linalg.norm(v1, axis=-1) < _EPS) or np.any(np.linalg.norm(v2, axis=-1) < _EPS):
        raise DegenerateGeometryError("bond_angle: coincident points")
    return np.arctan2(np.linalg.norm(np.cross(v1, v2), axis=-1), np.sum(v1 * v2, axis=-1))


def dihedral(p1: Vec3, p2: Vec3, p3: Vec3, p4: Vec3) -> float:
    """Signed torsion of p1-p2-p3-p4 about the p2->p3 axis, in [-pi, pi)."""
    a, b, c, d = _as_points(p1, p2, p3, p4)
    return float(_dihedrals(a, b, c, d))


def bond_angle(p1: Vec3, p2: Vec3, p3: Vec3) -> float:
    """Interior angle at vertex p2."""
    a, b, c = _as_points(p1, p2, p3)
    return float(_bond_angles(a, b, c))


def angle_rows(prev: np.ndarray, cur: np.ndarray) -> np.ndarray:
    """
    Eight angles of residues `cur` relative to their predecessors `prev`.
    prev, cur: (k, 4, 3) backbone atoms (N, CA, C, O). Returns (k, 8).
    """
    pn, pca, pc = prev[:, 0], prev[:, 1], prev[:, 2]
    n, ca, c, o = cur[:, 0], cur[:, 1], cur[:, 2], cur[:, 3]
    return np.stack(
        [
            _dihedrals(pn, pca, pc, n),
            _dihedrals(pca, pc, n, ca),
            _dihedrals(pc, n, ca, c),
            _dihedrals(n, ca, c, o),
            _bond_angles(pca, pc, n),
            _bond_angles(pc, n, ca),
            _bond_angles(n, ca, c),
            _bond_angles(ca, c, o),
        ],
        axis=-1,
    )


def extract_internal(b: Backbone) -> InternalCoords:
    """Internal coordinates of residues 1..L-2 of a backbone."""
    if len(b) < 3:
        raise TooShortError(f"extract_internal needs at least 3 residues, got {len(b)}")
    b.check_invariants()
    rows = angle_rows(b.coords[:-2], b.coords[1:-1])
    return InternalCoords(rows, source_length=len(b))


def measure_bond_lengths(b: Backbone) -> list[BondLengthSet]:
    """Measured bond lengths for every interior residue (aligned with extract_internal rows)."""
    if len(b) < 3:
        raise TooShortError(f"measure_bond_lengths needs at least 3 residues, got {len(b)}")
    c = b.coords
    out: list[BondLengthSet] = []
    for i in range(1, len(b) - 1):
        out.append(
            BondLengthSet(
                n_ca=float(np.linalg.norm(c[i, 1] - c[i, 0])),
                ca_c=float(np.linalg.norm(c[i, 2] - c[i, 1])),
                c_n=float(np.linalg.norm(c[i, 0] - c[i - 1, 2])),
                c_o=float(np.linalg.norm(c[i, 3] - c[i, 2])),
            )
        )
    return out


# -----------------
# Reconstruction
# -----------------
def place_atom(a: Vec3, b: Vec3, c: Vec3, bond_len: float, bond_ang: float, dihedral: float) -> np.ndarray:
    """
    Place d such that |d - c| = bond_len, angle(b, c, d) = bond_ang and
    dihedral(a, b, c, d) = dihedral.
    """
    pa, pb, pc = _as_points(a, b, c)
    if not (math.isfinite(bond_len) and bond_len > 0.0):
        raise InvalidValueError(f"bond_len must be > 0, got {bond_len}")
    if not (math.isfinite(bond_ang) and 0.0 < bond_ang < math.pi):
        raise InvalidValueError(f"bond_ang must lie in (0, pi), got {bond_ang}")
    if not math.isfinite(dihedral):
        raise InvalidValueError("dihedral must be finite")
    bc = pc - pb
    nbc = np.linalg.norm(bc)
    if nbc < _EPS:
        raise DegenerateGeometryError("place_atom: b and c coincide")
    bcn = bc / nbc
    ab = pa - pb
    u = ab - np.dot(ab, bcn) * bcn
    nu = np.linalg.norm(u)
    if nu < _EPS * max(1.0, float(np.linalg.norm(ab))):
        raise DegenerateGeometryError("place_atom: collinear reference frame")
    u = u / nu
    v = np.cross(bcn, u)
    direction = (
        -math.cos(bond_ang) * bcn
        + math.sin(bond_ang) * (math.cos(dihedral) * u + math.sin(dihedral) * v)
    )
    return pc + bond_len * direction


def default_seed() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """De novo seed frame: N at the origin, CA on +x, C in the xy-plane."""
    n = np.zeros(3)
    ca = np.array([FIXED_BOND_LENGTHS.n_ca, 0.0, 0.0])
    c = ca + FIXED_BOND_LENGTHS.ca_c * np.array(
        [-math.cos(SEED_N_CA_C_ANGLE), math.sin(SEED_N_CA_C_ANGLE), 0.0]
    )
    return n, ca, c


def reconstruct(
    ic: InternalCoords,
    lens: BondLengthSet | Sequence[BondLengthSet] = FIXED_BOND_LENGTHS,
    seed: Sequence[Vec3] | None = None,
    sequence: str | None = None,
) -> Backbone:
    """
    Rebuild a backbone of len(ic) + 1 residues: the seed residue plus one residue per row.

    lens is either one BondLengthSet for every row or one per row (measured lengths).
    The seed residue's O uses delta/theta4 of the first row; the true first-residue angles
    are not part of the representation.
    """
    n_rows = len(ic)
    if n_rows == 0:
        raise TooShortError("reconstruct needs at least one angle row")
    if isinstance(lens, BondLengthSet):
        per_row = [lens] * n_rows
    else:
        per_row = list(lens)
        if len(per_row) != n_rows:
            raise ShapeError(f"{len(per_row)} bond-length sets for {n_rows} rows")
    if seed is None:
        seed = default_seed()
    s_n, s_ca, s_c = _as_points(*seed)
    if sequence is None:
        sequence = "G" * (n_rows + 1)
    if len(sequence) != n_rows + 1:
        raise ShapeError(f"sequence length {len(sequence)} != residue count {n_rows + 1}")

    a = ic.angles
    coords = np.zeros((n_rows + 1, 4, 3))
    coords[0, 0], coords[0, 1], coords[0, 2] = s_n, s_ca, s_c
    coords[0, 3] = place_atom(s_n, s_ca, s_c, per_row[0].c_o, a[0, 7], a[0, 3])

    for k in range(n_rows):
        psi, omega, phi, delta, t1, t2, t3, t4 = a[k]
        bl = per_row[k]
        pn, pca, pc = coords[k, 0], coords[k, 1], coords[k, 2]
        n = place_atom(pn, pca, pc, bl.c_n, t1, psi)
        ca = place_atom(pca, pc, n, bl.n_ca, t2, omega)
        c = place_atom(pc, n, ca, bl.ca_c, t3, phi)
        o = place_atom(n, ca, c, bl.c_o, t4, delta)
        coords[k + 1] = (n, ca, c, o)
    return Backbone(coords, sequence)


def ideal_backbone(
    length: int,
    phi: float,
    psi: float,
    omega: float = math.pi,
    sequence: str | None = None,
    lens: BondLengthSet = FIXED_BOND_LENGTHS,
) -> Backbone:
    """Backbone with uniform (phi, psi, omega) and canonical bond angles, e.g. an ideal helix."""
    if length < 2:
        raise TooShortError("ideal_backbone needs at least 2 residues")
    delta = wrap_angle(psi + math.pi)
    row = [
        wrap_angle(psi), wrap_angle(omega), wrap_angle(phi), delta,
        IDEAL_THETA1, IDEAL_THETA2, IDEAL_THETA3, IDEAL_THETA4,
    ]
    rows = np.tile(np.asarray(row, dtype=np.float64), (length - 1, 1))
    ic = InternalCoords(rows, source_length=length + 1)
    return reconstruct(ic, lens, sequence=sequence)


__all__ = [
    "Vec3",
    "ANGLE_NAMES",
    "DIHEDRAL_COLUMNS",
    "BOND_ANGLE_COLUMNS",
    "BACKBONE_ATOMS",
    "AngleRow",
    "BondLengthSet",
    "FIXED_BOND_LENGTHS",
    "InternalCoords",
    "Backbone",
    "wrap_angle",
    "dihedral",
    "bond_angle",
    "angle_rows",
    "extract_internal",
    "measure_bond_lengths",
    "place_atom",
    "default_seed",
    "reconstruct",
    "ideal_backbone",
]
