import csv
import json

import pytest

from conftest import read_bytes, write_pdb_dir

from pepforge.cli import build_parser, main
from pepforge.core.pipeline import record_seed
from pepforge.utils.seqio import parse_fasta

TINY = [
    "--seed", "7",
    "--set", "split_ratios=[0.6, 0.2, 0.2]",
    "--set", "schedule.T=20",
    "--set", "model.blocks=1",
    "--set", "model.hidden=16",
    "--set", "model.heads=2",
    "--set", "model.ff=32",
    "--set", "optimizer.epochs=2",
    "--set", "optimizer.max_steps=2",
    "--set", "optimizer.batch_size=2",
]


def _run(argv, capsys):
    capsys.readouterr()
    code = main([str(a) for a in argv])
    return code, capsys.readouterr().out


def _pipeline(root, capsys, count=2):
    """prepare -> train both models -> sample the test partition -> evaluate; returns the directories."""
    root.mkdir(parents=True, exist_ok=True)
    pdb = write_pdb_dir(root)
    data, ckpt, samples, ev = root / "data", root / "ckpt", root / "samples", root / "eval"
    code, out = _run(["prepare", "--pdb-dir", pdb, "--out", data, *TINY], capsys)
    assert code == 0
    report = json.loads(out)
    for kind in ("structure", "sequence"):
        assert _run(["train", kind, "--data", data, "--checkpoints", ckpt, *TINY], capsys)[0] == 0
    code, _ = _run(
        ["sample", "--checkpoints", ckpt, "--split", "test", "--data", data, "--count", count, "--out", samples, *TINY],
        capsys,
    )
    assert code == 0
    code, out = _run(["evaluate", "--generated", samples, "--reference", data, "--out", ev, *TINY], capsys)
    assert code == 0
    return {"report": report, "summary": json.loads(out), "data": data, "ckpt": ckpt, "samples": samples, "eval": ev}


def test_full_pipeline(tmp_path, capsys):
    run = _pipeline(tmp_path / "run", capsys)

    report = run["report"]
    assert (report["total"], report["accepted"]) == (6, 5)
    assert report["rejected"] == [{"pdb_id": "9low", "reasons": ["resolution"]}]
    split = json.loads((run["data"] / "split.json").read_text())
    assert [len(split[k]) for k in ("train", "val", "test")] == [3, 1, 1]
    assert (run["data"] / "config.effective.json").exists()

    for kind in ("structure", "sequence"):
        assert (run["ckpt"] / f"{kind}-ext0.ckpt.json").exists()
        losses = (run["ckpt"] / f"{kind}-ext0.losses.csv").read_text().splitlines()
        assert losses[0] == "epoch,train_loss,val_loss"
        assert len(losses) >= 2

    manifest = json.loads((run["samples"] / "samples.json").read_text())
    (test_id,) = split["test"]
    assert [s["sample_id"] for s in manifest] == [f"{test_id}_s000", f"{test_id}_s001"]
    for s in manifest:
        assert (run["samples"] / f"{s['sample_id']}.pdb").exists()
        text = (run["samples"] / f"{s['sample_id']}.fasta").read_text()
        (record,) = parse_fasta(text)
        assert record.sequence == s["sequence"]
        assert len(s["sequence"]) == s["length"] == len(s["angles"])
        # header is pdb_id|length|seed with the record's own seed; the sample id stays in the manifest
        assert text.startswith(f">{record.header}\n")
        pdb_id, length, seed = record.header.split("|")
        assert (pdb_id, int(length), int(seed)) == (test_id, s["length"], s["seed"])
        assert int(seed) == record_seed(7, test_id, s["index"])
        assert s["sample_id"] not in record.header
    assert manifest[0]["seed"] != manifest[1]["seed"]

    metrics = list(csv.reader((run["eval"] / "metrics.csv").read_text().splitlines()))
    assert metrics[0][0].startswith("# alignment")
    assert metrics[1][:3] == ["pdb_id", "samples", "ext_k"]
    complexes = {s["pdb_id"] for s in manifest}
    # header, one row per complex, summary row
    assert len(metrics) == 2 + len(complexes) + 1
    assert [row[0] for row in metrics[2:]] == sorted(complexes) + ["summary"]
    assert metrics[2][1] == metrics[-1][1] == str(len(manifest))
    per_sample = (run["eval"] / "samples.csv").read_text().splitlines()
    assert len(per_sample) == 2 + len(manifest)
    summary = run["summary"]
    assert summary["count"] == 2 and summary["complexes"] == 1
    assert 0.0 <= summary["tm_mean"] <= 1.0
    assert summary["rmsd_mean"] >= 0.0
    assert 0.0 <= summary["contact_rate"] <= 100.0
    assert "divergence" not in summary and "ramachandran" not in summary
    full = json.loads((run["eval"] / "summary.json").read_text())
    assert set(full["ramachandran"]) == {"generated", "reference"}
    assert (run["eval"] / "distributions.csv").exists()


def test_pipeline_is_reproducible(tmp_path, capsys):
    a = _pipeline(tmp_path / "a", capsys, count=1)
    b = _pipeline(tmp_path / "b", capsys, count=1)
    assert read_bytes(a["samples"] / "samples.json") == read_bytes(b["samples"] / "samples.json")
    assert read_bytes(a["eval"] / "metrics.csv") == read_bytes(b["eval"] / "metrics.csv")
    assert read_bytes(a["eval"] / "summary.json") == read_bytes(b["eval"] / "summary.json")


def test_ensemble_and_svg_outputs(tmp_path, capsys):
    run = _pipeline(tmp_path / "run", capsys)
    single = run["summary"]
    out_dir = tmp_path / "ensemble"
    code, out = _run(
        ["evaluate", "--generated", run["samples"], "--generated", run["samples"], "--reference", run["data"],
         "--out", out_dir, "--ensemble", "--svg", *TINY],
        capsys,
    )
    assert code == 0
    merged = json.loads(out)
    assert merged["ensemble"] is True and merged["runs"] == 2
    assert merged["count"] == single["count"]
    assert merged["tm_mean"] == pytest.approx(single["tm_mean"])
    assert (out_dir / "ramachandran.svg").exists()
    assert list(out_dir.glob("hist_*.svg"))


def test_shuffle_seq_keeps_composition(tmp_path, capsys):
    src = tmp_path / "in.fasta"
    src.write_text(">a\nKLVFAEDV\n>b\nGSWTRQ\n")
    dest = tmp_path / "out.fasta"
    assert _run(["shuffle-seq", "--in", src, "--out", dest, "--seed", "3"], capsys)[0] == 0
    before = parse_fasta(src.read_text())
    after = parse_fasta(dest.read_text())
    assert [r.header for r in after] == [r.header for r in before]
    for x, y in zip(before, after):
        assert sorted(x.sequence) == sorted(y.sequence)
    again = tmp_path / "again.fasta"
    _run(["shuffle-seq", "--in", src, "--out", again, "--seed", "3"], capsys)
    assert read_bytes(again) == read_bytes(dest)


def test_roundtrip_command(tmp_path, capsys):
    pdb = write_pdb_dir(tmp_path, rejected=False)
    report_path = tmp_path / "roundtrip.json"
    code, out = _run(["roundtrip", pdb / "1abc.pdb", "--chain", "P", "--out", report_path], capsys)
    assert code == 0
    report = json.loads(out)
    assert report == json.loads(report_path.read_text())
    (chain,) = report["chains"]
    assert chain["chain"] == "P" and chain["length"] == 8
    assert chain["rmsd_measured"] < 1e-3
    assert chain["rmsd_fixed"] < 1.0


def test_exit_codes(tmp_path, capsys):
    pdb = write_pdb_dir(tmp_path)
    # configuration problems exit with 2
    assert _run(["prepare", "--pdb-dir", pdb, "--out", tmp_path / "d", "--set", "model.heads=3"], capsys)[0] == 2
    assert _run(["sample", "--checkpoints", tmp_path / "none"], capsys)[0] == 2
    # missing data exits with 3
    assert _run(["train", "structure", "--data", tmp_path / "missing", "--checkpoints", tmp_path / "c"], capsys)[0] == 3
    assert not (tmp_path / "c").exists()


def test_prepare_rejects_missing_and_unreadable_files(tmp_path, capsys):
    pdb = write_pdb_dir(tmp_path, rejected=False)
    (pdb / "7bad.pdb").write_text("HEADER    NOTHING HERE\nEND\n")
    with open(pdb / "complexes.tsv", "a") as f:
        f.write("7bad\tA\tP\n8gon\tA\tP\n")
    code, out = _run(["prepare", "--pdb-dir", pdb, "--out", tmp_path / "data", *TINY], capsys)
    assert code == 0
    report = json.loads(out)
    assert report["accepted"] == 5
    assert report["rejected"] == [
        {"pdb_id": "7bad", "reasons": ["parse"]},
        {"pdb_id": "8gon", "reasons": ["missing"]},
    ]


def test_ensemble_flag_and_ext_range_parse_independently():
    parser = build_parser()
    args = parser.parse_args(["evaluate", "--ensemble", "--generated", "a", "--ext-range", "1..3", "--svg"])
    assert args.ensemble is True and args.ext_range == (1, 3) and args.generated == ["a"]
    args = parser.parse_args(["evaluate", "--generated", "a", "--ext-range", "2"])
    assert args.ensemble is False and args.ext_range == (2, 2)
    assert parser.parse_args(["evaluate", "--generated", "a"]).ext_range is None
    with pytest.raises(SystemExit):
        parser.parse_args(["evaluate", "--generated", "a", "--ext-range", "3..1"])


def test_ext_range_filters_samples(tmp_path, capsys):
    run = _pipeline(tmp_path / "run", capsys, count=1)
    base = ["evaluate", "--generated", run["samples"], "--reference", run["data"], *TINY]
    code, out = _run([*base, "--out", tmp_path / "kept", "--ext-range", "0..4"], capsys)
    assert code == 0 and json.loads(out)["count"] == 1
    # every sample is ext-0, so a 1..4 window leaves nothing to score
    assert _run([*base, "--out", tmp_path / "none", "--ext-range", "1..4"], capsys)[0] == 3
    assert not (tmp_path / "none").exists()
