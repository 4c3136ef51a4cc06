import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import HELIX, STRAND, dock_peptide

from pepforge.core.errors import DegenerateNormalizerError, EmptyDataError, ShapeError
from pepforge.evaluation.contact import contact_rate, in_contact, place_on_reference
from pepforge.evaluation.distributions import (
    angle_divergence,
    angle_histogram,
    ramachandran_bins,
    ramachandran_region,
    region_shares,
)
from pepforge.evaluation.ensemble import (
    COMPLEX_COLUMNS,
    SUMMARY_LABEL,
    MetricRow,
    per_complex,
    select_ensemble,
    summarize,
    trimmed_mean,
)
from pepforge.evaluation.sequence import (
    AlignmentConfig,
    nw_score,
    recovery_rate,
    seq_diversity,
    seq_similarity,
)
from pepforge.evaluation.structure import kabsch_rmsd, superpose, tm_d0, tm_score
from pepforge.utils.geometry import Backbone, extract_internal, ideal_backbone

DNA = AlignmentConfig(
    substitution=np.array([[5, -4, -2, -4], [-4, 5, -4, -2], [-2, -4, 5, -4], [-4, -2, -4, 5]], dtype=float),
    gap_penalty=3.0,
    alphabet="ACGT",
)


def _brute_alignment(a: str, b: str, cfg: AlignmentConfig) -> float:
    """Best score over every alignment path (exhaustive, no table)."""
    S, g = cfg.substitution, cfg.gap_penalty
    idx = cfg.alphabet.index
    if not a:
        return -g * len(b)
    if not b:
        return -g * len(a)
    return max(
        S[idx(a[0]), idx(b[0])] + _brute_alignment(a[1:], b[1:], cfg),
        -g + _brute_alignment(a[1:], b, cfg),
        -g + _brute_alignment(a, b[1:], cfg),
    )


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]]) @ np.array(
        [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]]
    )


def _row(pdb_id, sample_id, ext_k, tm, similarity, rmsd=2.0, sequence="ACD", contact=True):
    return MetricRow(
        pdb_id=pdb_id,
        sample_id=sample_id,
        ext_k=ext_k,
        length=len(sequence),
        rmsd=rmsd,
        tm=tm,
        recovery=10.0 * ext_k,
        similarity=similarity,
        contact=contact,
        sequence=sequence,
    )


# -----------------
# sequence metrics
# -----------------
@settings(max_examples=60, deadline=None)
@given(st.text(alphabet="ACGT", min_size=1, max_size=4), st.text(alphabet="ACGT", min_size=1, max_size=4))
def test_alignment_matches_exhaustive_search(a, b):
    assert nw_score(a, b, DNA) == pytest.approx(_brute_alignment(a, b, DNA))


def test_alignment_reference_values():
    assert nw_score("A", "G") == 0
    assert nw_score("W", "W") == 11
    assert nw_score("AW", "W") == 11 - 4
    assert isinstance(nw_score("ACD", "ACD"), int)
    with pytest.raises(EmptyDataError):
        nw_score("", "A")


def test_recovery_rate():
    assert recovery_rate("ACDE", "ACDF") == 75.0
    with pytest.raises(ShapeError):
        recovery_rate("ACD", "ACDF")


def test_similarity_is_one_for_identical_sequences():
    assert seq_similarity("KLVF", "KLVF") == pytest.approx(1.0)
    assert seq_similarity("GGGG", "KLVF") < 0.5


def test_similarity_needs_positive_self_score():
    flat = AlignmentConfig(substitution=np.zeros((2, 2)), gap_penalty=1.0, alphabet="AC")
    with pytest.raises(DegenerateNormalizerError):
        seq_similarity("AC", "CA", flat)


def test_diversity():
    assert seq_diversity(["ACDE", "ACDE"]) == pytest.approx(0.0)
    # W/W = 11, G/G = 6, W/G = -2; the pair is normalised by the larger self score
    assert seq_diversity(["WWWW", "GGGG"]) == pytest.approx(1.0 - (2.0 - 2 * 8 / 44) / 4)
    assert seq_diversity(["WWWW", "GGGG"]) > 0.5
    with pytest.raises(EmptyDataError):
        seq_diversity(["ACDE"])


# -----------------
# structure metrics
# -----------------
def test_rmsd_and_tm_ignore_rigid_motion():
    bb = ideal_backbone(10, *STRAND)
    moved = bb.transformed(_rotation(0.8), np.array([3.0, -7.0, 11.0]))
    assert kabsch_rmsd(bb, moved) == pytest.approx(0.0, abs=1e-9)
    assert tm_score(bb, moved) == pytest.approx(1.0)
    R, t = superpose(bb, moved)
    assert R == pytest.approx(_rotation(0.8), abs=1e-9)
    assert bb.coords.reshape(-1, 3) @ R.T + t == pytest.approx(moved.coords.reshape(-1, 3), abs=1e-9)


def test_rmsd_and_tm_separate_different_folds():
    helix = ideal_backbone(12, *HELIX)
    strand = ideal_backbone(12, *STRAND)
    assert kabsch_rmsd(helix, strand) > 2.0
    assert 0.0 < tm_score(helix, strand) < 0.5
    with pytest.raises(ShapeError):
        kabsch_rmsd(helix, strand.slice(0, 11))


def test_tm_d0():
    assert tm_d0(10) == 0.5
    assert tm_d0(100) == pytest.approx(1.24 * 85 ** (1 / 3) - 1.8)


# -----------------
# distributions
# -----------------
def test_divergence_identities():
    rng = np.random.default_rng(0)
    values = rng.uniform(-math.pi, math.pi, 500)
    h = angle_histogram(values, "phi")
    assert h.total == 500
    same = angle_divergence(h, angle_histogram(values.copy(), "phi"))
    assert same["js_distance"] == pytest.approx(0.0, abs=1e-6)
    assert same["kl_divergence"] == pytest.approx(0.0, abs=1e-9)


def test_divergence_of_disjoint_histograms():
    d = angle_divergence(angle_histogram(np.full(50, -3.0), "psi"), angle_histogram(np.full(50, 3.0), "psi"))
    assert d["js_distance"] == pytest.approx(1.0, abs=1e-4)
    assert d["kl_divergence"] > 10.0


def test_divergence_needs_matching_bins_and_data():
    with pytest.raises(ShapeError):
        angle_divergence(angle_histogram([0.1], "phi", bins=10), angle_histogram([0.1], "phi", bins=20))
    with pytest.raises(EmptyDataError):
        angle_histogram([], "phi").probabilities()


@pytest.mark.parametrize(
    "phi,psi,region",
    [
        (-60.0, -45.0, "rh_helix"),
        (-120.0, 130.0, "beta_sheet"),
        (60.0, 45.0, "lh_helix"),
        (60.0, -150.0, "other"),
        (-100.0, 100.0, "beta_sheet"),
    ],
)
def test_ramachandran_regions(phi, psi, region):
    assert ramachandran_region(math.radians(phi), math.radians(psi)) == region


def test_ramachandran_bins_of_ideal_peptides():
    helix = extract_internal(ideal_backbone(10, *HELIX))
    strand = extract_internal(ideal_backbone(6, *STRAND))
    counts = ramachandran_bins([helix, strand])
    assert counts == {"beta_sheet": 4, "rh_helix": 8, "lh_helix": 0, "other": 0}
    assert region_shares(counts)["rh_helix"] == pytest.approx(8 / 12)


# -----------------
# contact
# -----------------
def test_contact_cutoff_is_strict():
    residue = Backbone(np.array([[[0.0, 0, 0], [1.0, 0, 0], [2.0, 0, 0], [3.0, 0, 0]]]), "G")
    assert not in_contact(residue, np.array([[8.0, 0.0, 0.0]]))
    assert in_contact(residue, np.array([[7.99, 0.0, 0.0]]))
    assert not in_contact(residue, np.zeros((0, 3)))


def test_contact_rate_counts_touching_peptides():
    receptor = ideal_backbone(20, *HELIX)
    peptide = ideal_backbone(8, *STRAND)
    near = [dock_peptide(receptor, peptide, turn=t) for t in (0.0, 1.5, 3.0)]
    far = near[0].transformed(np.eye(3), np.array([100.0, 0.0, 0.0]))
    assert contact_rate(near + [far], receptor) == pytest.approx(75.0)
    with pytest.raises(EmptyDataError):
        contact_rate([], receptor)


def test_place_on_reference_undoes_a_rigid_motion():
    ref = ideal_backbone(9, *STRAND)
    generated = ref.slice(0, 8).transformed(_rotation(2.0), np.array([-20.0, 5.0, 1.0]))
    placed = place_on_reference(generated, ref)
    assert placed.coords == pytest.approx(ref.coords[:8], abs=1e-9)


# -----------------
# aggregation
# -----------------
def test_trimmed_mean_drops_the_largest_values():
    assert trimmed_mean(range(1, 101)) == pytest.approx(50.0)
    assert trimmed_mean([1.0, 2.0, 3.0]) == pytest.approx(2.0)
    assert trimmed_mean([1.0, 2.0, 1000.0], drop=0.34) == pytest.approx(1.5)
    with pytest.raises(EmptyDataError):
        trimmed_mean([])


def test_select_ensemble_keeps_best_structure_and_best_sequence():
    run0 = [_row("1abc", "1abc_s000", 0, tm=0.30, similarity=0.9, sequence="KLV"),
            _row("2xyz", "2xyz_s000", 0, tm=0.50, similarity=0.1, sequence="AAA")]
    run1 = [_row("1abc", "1abc_s000", 1, tm=0.60, similarity=0.2, rmsd=1.0, sequence="GGG"),
            _row("2xyz", "2xyz_s000", 1, tm=0.50, similarity=0.4, sequence="CCC")]
    merged = select_ensemble([run0, run1])
    assert [r.pdb_id for r in merged] == ["1abc", "2xyz"]
    first, second = merged
    assert (first.ext_k, first.tm, first.rmsd) == (1, 0.60, 1.0)
    assert (first.similarity, first.recovery, first.sequence) == (0.9, 0.0, "KLV")
    # equal TM: the earlier run wins
    assert second.ext_k == 0
    assert (second.similarity, second.sequence) == (0.4, "CCC")


def test_summarize():
    rows = [
        _row("1abc", "a", 0, tm=0.6, similarity=0.5, rmsd=1.0),
        _row("1abc", "b", 0, tm=0.3, similarity=0.3, rmsd=4.0, contact=False),
        _row("2xyz", "c", 0, tm=0.1, similarity=0.1, rmsd=9.0),
        _row("2xyz", "d", 0, tm=0.25, similarity=0.2, rmsd=6.0),
    ]
    s = summarize(rows, diversity=0.4)
    assert s["count"] == 4
    assert s["complexes"] == 2
    assert s["rmsd_mean"] == pytest.approx(5.0)
    assert s["contact_rate"] == pytest.approx(75.0)
    assert s["frac_rmsd_lt_5"] == pytest.approx(0.5)
    assert s["frac_tm_gt_0.2"] == pytest.approx(0.75)
    assert s["frac_tm_gt_0.5"] == pytest.approx(0.25)
    assert s["diversity"] == 0.4
    with pytest.raises(EmptyDataError):
        summarize([])


def test_per_complex_table_has_one_row_per_complex_and_a_summary():
    rows = [
        _row("1abc", "1abc_s000", 0, tm=0.6, similarity=0.5, rmsd=2.0),
        _row("1abc", "1abc_s001", 2, tm=0.2, similarity=0.3, rmsd=6.0, contact=False),
        _row("2xyz", "2xyz_s000", 0, tm=0.1, similarity=0.9, rmsd=8.0, sequence="ACDEF"),
    ]
    table = per_complex(rows)
    assert [c.pdb_id for c in table] == ["1abc", "2xyz", SUMMARY_LABEL]
    first, second, total = table
    assert first.samples == 2 and first.ext_k == "0|2" and first.length == 3
    assert first.rmsd == pytest.approx(4.0)
    assert first.tm == pytest.approx(0.4)
    assert first.contact == pytest.approx(50.0)
    assert first.frac_rmsd == pytest.approx(0.5)
    assert first.frac_tm == pytest.approx((0.5, 0.5))
    assert second.samples == 1 and second.length == 5
    # the summary row agrees with summarize over the same samples
    summary = summarize(rows)
    assert total.samples == summary["count"] == 3
    assert total.length is None
    assert total.tm == pytest.approx(summary["tm_mean"])
    assert total.contact == pytest.approx(summary["contact_rate"])
    assert total.frac_tm == pytest.approx((summary["frac_tm_gt_0.2"], summary["frac_tm_gt_0.5"]))
    assert len(total.csv_row()) == len(COMPLEX_COLUMNS)
    assert total.csv_row()[3] == ""
    with pytest.raises(EmptyDataError):
        per_complex([])
