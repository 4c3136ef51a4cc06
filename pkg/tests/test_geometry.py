import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pepforge.core.errors import InvariantError, ShapeError, TooShortError
from pepforge.core.pipeline import roundtrip_backbone
from pepforge.utils.geometry import (
    FIXED_BOND_LENGTHS,
    BondLengthSet,
    InternalCoords,
    Backbone,
    bond_angle,
    dihedral,
    extract_internal,
    ideal_backbone,
    measure_bond_lengths,
    place_atom,
    reconstruct,
    wrap_angle,
)


def _random_ic(n: int, seed: int) -> InternalCoords:
    rng = np.random.default_rng(seed)
    rows = np.empty((n, 8))
    rows[:, 0] = rng.uniform(-math.pi, math.pi, n)  # psi
    rows[:, 1] = wrap_angle(math.pi + rng.normal(0.0, 0.05, n))  # omega
    rows[:, 2] = rng.uniform(-math.pi, 0.0, n)  # phi
    rows[:, 3] = rng.uniform(-math.pi, math.pi, n)  # delta
    rows[:, 4:] = rng.uniform(1.85, 2.15, (n, 4))
    return InternalCoords(rows, source_length=n + 2)


def _random_backbone(n_rows: int, seed: int, jitter: float = 0.01) -> Backbone:
    rng = np.random.default_rng(seed + 1)
    base = FIXED_BOND_LENGTHS
    lens = [
        BondLengthSet(
            n_ca=base.n_ca + rng.uniform(-jitter, jitter),
            ca_c=base.ca_c + rng.uniform(-jitter, jitter),
            c_n=base.c_n + rng.uniform(-jitter, jitter),
            c_o=base.c_o + rng.uniform(-jitter, jitter),
        )
        for _ in range(n_rows)
    ]
    return reconstruct(_random_ic(n_rows, seed), lens)


def _rotation(q) -> np.ndarray:
    w, x, y, z = np.asarray(q) / np.linalg.norm(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def _angle_gap(a, b) -> float:
    d = np.mod(np.asarray(a) - np.asarray(b) + math.pi, 2 * math.pi) - math.pi
    return float(np.abs(d).max())


def test_wrap_angle_examples():
    assert wrap_angle(0.5) == 0.5
    assert wrap_angle(-math.pi) == -math.pi
    assert wrap_angle(math.pi) == -math.pi
    assert wrap_angle(2 * math.pi + 0.5) == pytest.approx(0.5)
    assert wrap_angle(-math.pi - 0.5) == pytest.approx(math.pi - 0.5)


@given(st.floats(min_value=-1e3, max_value=1e3, allow_nan=False))
def test_wrap_angle_range_and_direction(x):
    w = wrap_angle(x)
    assert -math.pi <= w < math.pi
    assert math.sin(w) == pytest.approx(math.sin(x), abs=1e-9)
    assert math.cos(w) == pytest.approx(math.cos(x), abs=1e-9)


def test_dihedral_reference_values():
    p1, p2, p3 = np.array([1.0, 0, 0]), np.zeros(3), np.array([0, 0, 1.0])
    assert dihedral(p1, p2, p3, np.array([0, 1.0, 1.0])) == pytest.approx(math.pi / 2)
    assert dihedral(p1, p2, p3, np.array([1.0, 0, 1.0])) == pytest.approx(0.0)
    assert dihedral(p1, p2, p3, np.array([-1.0, 0, 1.0])) == pytest.approx(-math.pi)
    assert dihedral(p1, p2, p3, np.array([0, -1.0, 1.0])) == pytest.approx(-math.pi / 2)


def test_bond_angle_reference_values():
    assert bond_angle([1, 0, 0], [0, 0, 0], [0, 1, 0]) == pytest.approx(math.pi / 2)
    assert bond_angle([1, 0, 0], [0, 0, 0], [-1, 0, 0]) == pytest.approx(math.pi)
    assert bond_angle([1, 0, 0], [0, 0, 0], [1, 1, 0]) == pytest.approx(math.pi / 4)


def test_ideal_helix_has_requested_torsions():
    bb = ideal_backbone(10, math.radians(-57.0), math.radians(-47.0))
    ic = extract_internal(bb)
    assert len(bb) == 10
    assert len(ic) == 8
    assert np.degrees(ic.column("phi")) == pytest.approx(np.full(8, -57.0), abs=1e-6)
    assert np.degrees(ic.column("psi")) == pytest.approx(np.full(8, -47.0), abs=1e-6)
    assert _angle_gap(ic.column("omega"), np.full(8, math.pi)) < 1e-6


def test_extract_of_reconstruct_recovers_angles():
    ic = _random_ic(12, seed=3)
    bb = reconstruct(ic)
    assert len(bb) == 13
    again = extract_internal(bb)
    # residue k + 1 is built from row k; the last row's residue is a chain end
    assert _angle_gap(again.angles, ic.angles[:-1]) < 1e-9


def test_roundtrip_with_measured_lengths_is_exact():
    bb = _random_backbone(14, seed=5)
    report = roundtrip_backbone(bb)
    assert report["length"] == 15
    assert report["rmsd_measured"] < 1e-6
    assert report["rmsd_fixed"] < 1.0


def test_roundtrip_on_ideal_strand():
    bb = ideal_backbone(9, math.radians(-120.0), math.radians(130.0))
    report = roundtrip_backbone(bb)
    assert report["rmsd_measured"] < 1e-6
    assert report["rmsd_fixed"] < 1e-6


@settings(max_examples=25, deadline=None)
@given(
    q=st.lists(st.floats(min_value=-1.0, max_value=1.0), min_size=4, max_size=4).filter(
        lambda q: np.linalg.norm(q) > 0.1
    ),
    shift=st.lists(st.floats(min_value=-50.0, max_value=50.0), min_size=3, max_size=3),
)
def test_internal_coordinates_ignore_rigid_motion(q, shift):
    bb = _random_backbone(8, seed=11)
    moved = bb.transformed(_rotation(q), np.asarray(shift))
    assert _angle_gap(extract_internal(moved).angles, extract_internal(bb).angles) < 1e-9


def test_short_chains_are_rejected():
    bb = ideal_backbone(2, -1.0, 2.0)
    with pytest.raises(TooShortError):
        extract_internal(bb)


def test_internal_coords_row_count_must_match_length():
    with pytest.raises(ShapeError):
        InternalCoords(np.full((3, 8), 1.0), source_length=4)


def test_chain_break_is_an_invariant_violation():
    bb = ideal_backbone(6, -1.0, 2.0)
    coords = np.array(bb.coords)
    coords[3:] += np.array([5.0, 0.0, 0.0])
    with pytest.raises(InvariantError):
        extract_internal(Backbone(coords, bb.sequence))


def test_roundtrip_rebuilds_original_coordinates():
    bb = _random_backbone(14, seed=5, jitter=0.03)
    ic = extract_internal(bb)
    seed = (bb.coords[0, 0], bb.coords[0, 1], bb.coords[0, 2])
    rebuilt = reconstruct(ic, measure_bond_lengths(bb), seed=seed)
    # residue 0 keeps its seed atoms but its O comes from row 0; the last residue has no row
    assert np.abs(rebuilt.coords[1:] - bb.coords[1:-1]).max() < 1e-6
    assert np.abs(rebuilt.coords[0, :3] - bb.coords[0, :3]).max() == 0.0


@settings(max_examples=40, deadline=None)
@given(
    frame=st.integers(min_value=0, max_value=10_000),
    length=st.floats(min_value=0.8, max_value=3.0),
    angle=st.floats(min_value=0.2, max_value=math.pi - 0.2),
    torsion=st.floats(min_value=-math.pi, max_value=math.pi, exclude_max=True),
)
def test_place_atom_inverts_measured_geometry(frame, length, angle, torsion):
    rng = np.random.default_rng(frame)
    a = rng.normal(0.0, 2.0, 3)
    b = a + np.array([1.5, 0.0, 0.0]) + rng.normal(0.0, 0.2, 3)
    c = b + np.array([0.0, 1.5, 0.0]) + rng.normal(0.0, 0.2, 3)
    d = place_atom(a, b, c, length, angle, torsion)
    assert np.linalg.norm(d - c) == pytest.approx(length, abs=1e-9)
    assert bond_angle(b, c, d) == pytest.approx(angle, abs=1e-8)
    assert _angle_gap(dihedral(a, b, c, d), torsion) < 1e-8


def test_mirror_image_negates_every_dihedral():
    bb = _random_backbone(10, seed=9)
    mirrored = Backbone(bb.coords * np.array([-1.0, 1.0, 1.0]), bb.sequence)
    ic, im = extract_internal(bb), extract_internal(mirrored)
    assert _angle_gap(im.angles[:, :4], -ic.angles[:, :4]) < 1e-9
    assert np.abs(im.angles[:, 4:] - ic.angles[:, 4:]).max() < 1e-12
