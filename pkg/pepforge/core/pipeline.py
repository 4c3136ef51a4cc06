# pepforge pipeline: the commands behind the CLI verbs
#
# Every command:
# - takes an effective RunConfig and a request id used as the log prefix
# - stages its outputs in a temporary sibling directory and commits them only on success
# - echoes the effective configuration as config.effective.json into its output directory
# - appends one record to the run history (outside every output directory)
#
# Outputs are deterministic given (inputs, config, seed): files are written in sorted order,
# JSON has fixed key order, and per-sample generators are derived from (seed, pdb id, index).

from __future__ import annotations

import json
import logging
import os
import time
import zlib
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import Any

import numpy as np

from ..data.dataset import (
    ComplexEntry,
    ComplexExample,
    RejectionReport,
    build_example,
    dedupe_entries,
    example_path,
    filter_complex,
    load_example,
    load_split,
    read_complex_table,
    save_example,
    save_split,
    split_dataset,
)
from ..evaluation.contact import in_contact, place_on_reference
from ..evaluation.distributions import column_histograms, ramachandran_bins
from ..evaluation.ensemble import MetricRow, select_ensemble, summarize
from ..evaluation.report import (
    divergences,
    write_distributions,
    write_histogram_svgs,
    write_metrics,
    write_ramachandran_svg,
    write_samples,
    write_summary,
)
from ..evaluation.sequence import default_alignment, recovery_rate, seq_diversity, seq_similarity
from ..evaluation.structure import kabsch_rmsd, paired_interior, tm_score
from ..generation.sequence_diffusion import config_transitions, sample_sequence
from ..generation.structure_diffusion import sample_structure
from ..generation.training import TrainResult, train_sequence, train_structure
from ..utils.atomic_io import staged_dir, write_csv, write_json, write_text
from ..utils.config import RunConfig, append_history
from ..utils.geometry import (
    FIXED_BOND_LENGTHS,
    Backbone,
    InternalCoords,
    extract_internal,
    measure_bond_lengths,
    reconstruct,
)
from ..utils.pdb_io import Structure, format_backbone_pdb, read_pdb
from ..utils.residues import UNKNOWN_AA
from ..utils.seqio import FastaRecord, format_fasta, parse_fasta, sample_header, shuffle_records
from .checkpoint import check_compatible, load_checkpoint
from .errors import (
    ChainLookupError,
    ConfigError,
    DataError,
    EmptyDataError,
    EmptyPocketError,
    NumericError,
    PepforgeError,
    ShapeError,
)

logger = logging.getLogger(__name__)

EFFECTIVE_CONFIG = "config.effective.json"
SAMPLES_MANIFEST = "samples.json"
PDB_SUFFIXES = (".pdb", ".ent", ".PDB")


def _friendly_error(err: BaseException) -> str:
    """First line of the error plus a short, actionable tip for the error family."""
    try:
        s = str(err) if err is not None else ""
    except Exception:
        s = ""
    first = s.splitlines()[0] if s else type(err).__name__
    if isinstance(err, ConfigError):
        return f"{first} (check the TOML file, --set overrides and checkpoint pairing)"
    if isinstance(err, DataError):
        return f"{first} (check input files; run `pepforge prepare` before train/sample/evaluate)"
    if isinstance(err, NumericError):
        return f"{first} (try a lower learning rate or inspect inputs for degenerate geometry)"
    return first


def _echo_config(out_dir: str, cfg: RunConfig) -> None:
    write_json(os.path.join(out_dir, EFFECTIVE_CONFIG), cfg.to_dict())


def _record(command: str, request_id: str, start: float, **fields: Any) -> None:
    append_history(
        {
            "command": command,
            "request_id": request_id,
            "duration_s": round(time.perf_counter() - start, 3),
            **fields,
        }
    )


def record_seed(seed: int, pdb_id: str, index: int) -> int:
    """Seed of one sample's generator; independent of which other complexes are sampled."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(pdb_id.encode("utf-8")), index])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sample_rng(seed: int, pdb_id: str, index: int) -> np.random.Generator:
    """Generator for one sample, reproducible from record_seed alone."""
    return np.random.default_rng(record_seed(seed, pdb_id, index))


# -----------------
# prepare
# -----------------
def _find_pdb(pdb_dir: str, pdb_id: str) -> str:
    for stem in (pdb_id, pdb_id.upper()):
        for suffix in PDB_SUFFIXES:
            path = os.path.join(pdb_dir, stem + suffix)
            if os.path.isfile(path):
                return path
    raise DataError(f"no PDB file for {pdb_id} in {pdb_dir}")


def _process_entry(
    pdb_dir: str, entry: ComplexEntry, cfg: RunConfig
) -> tuple[ComplexEntry, ComplexExample | None, list[str]]:
    try:
        path = _find_pdb(pdb_dir, entry.pdb_id)
    except DataError as ex:
        logger.warning(f"[{entry.pdb_id}] {ex}")
        return entry, None, ["missing"]
    try:
        s: Structure = read_pdb(path)
    except DataError as ex:
        logger.warning(f"[{entry.pdb_id}] unreadable: {ex}")
        return entry, None, ["parse"]
    try:
        verdict = filter_complex(s, entry.peptide_chain)
    except ChainLookupError:
        return entry, None, ["chain"]
    if not verdict.accepted:
        return entry, None, list(verdict.reasons)
    try:
        ex = build_example(s, entry.peptide_chain, cfg.ext_k, cfg.pocket_cutoff, entry.receptor_chains or None)
    except EmptyPocketError:
        return entry, None, ["pocket"]
    except ChainLookupError:
        return entry, None, ["chain"]
    return entry, ex, []


def cmd_prepare(
    pdb_dir: str,
    out_dir: str,
    cfg: RunConfig,
    table: str | None = None,
    workers: int = 1,
    request_id: str = "prepare",
) -> dict[str, Any]:
    """Parse, filter and convert every listed complex; write examples, split.json and report.json."""
    start = time.perf_counter()
    table = table or os.path.join(pdb_dir, "complexes.tsv")
    entries = dedupe_entries(read_complex_table(table))
    if not entries:
        raise EmptyDataError(f"[{request_id}] {table} lists no complexes")
    logger.info(f"[{request_id}] Preparing {len(entries)} complexes from {pdb_dir} (ext-{cfg.ext_k})")

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda e: _process_entry(pdb_dir, e, cfg), entries))
    else:
        results = [_process_entry(pdb_dir, e, cfg) for e in entries]

    report = RejectionReport(total=len(entries))
    examples: list[ComplexExample] = []
    for entry, ex, reasons in results:
        if ex is None:
            report.reject(entry.pdb_id, reasons)
            logger.warning(f"[{request_id}] {entry.pdb_id} rejected: {','.join(reasons)}")
            continue
        examples.append(ex)
    report.accepted = len(examples)
    if not examples:
        raise EmptyDataError(f"[{request_id}] every complex was rejected: {dict(report.counts)}")
    split = split_dataset([ex.pdb_id for ex in examples], cfg.split_ratios, cfg.seed)

    with staged_dir(out_dir, request_id) as tmp:
        for ex in examples:
            save_example(example_path(tmp, ex.pdb_id), ex)
        save_split(os.path.join(tmp, "split.json"), split)
        write_json(os.path.join(tmp, "report.json"), report.to_dict())
        _echo_config(tmp, cfg)

    logger.info(
        f"[{request_id}] {report.accepted}/{report.total} accepted; split "
        f"{len(split.train)}/{len(split.val)}/{len(split.test)}"
    )
    _record("prepare", request_id, start, out_dir=out_dir, accepted=report.accepted, total=report.total)
    return {"report": report.to_dict(), "split": split.to_dict()}


# -----------------
# train
# -----------------
def checkpoint_name(kind: str, ext_k: int) -> str:
    return f"{kind}-ext{ext_k}.ckpt.json"


def _load_partition(data_dir: str, name: str, split: dict[str, Any]) -> list[ComplexExample]:
    return [load_example(example_path(data_dir, pid)) for pid in split[name]]


def cmd_train(
    kind: str,
    cfg: RunConfig,
    data_dir: str | None = None,
    checkpoint_dir: str | None = None,
    request_id: str | None = None,
) -> TrainResult:
    """Train one denoiser on the prepared split; writes the checkpoint and a per-epoch loss CSV."""
    if kind not in ("structure", "sequence"):
        raise ConfigError(f"unknown model kind {kind!r}; expected structure or sequence")
    start = time.perf_counter()
    request_id = request_id or f"train-{kind}"
    data_dir = data_dir or cfg.paths.data_dir
    checkpoint_dir = checkpoint_dir or cfg.paths.checkpoint_dir
    split = load_split(os.path.join(data_dir, "split.json")).to_dict()
    train = _load_partition(data_dir, "train", split)
    val = _load_partition(data_dir, "val", split)
    for ex in train + val:
        if ex.ext_k != cfg.ext_k:
            raise ConfigError(
                f"[{request_id}] {ex.pdb_id} was prepared with ext-{ex.ext_k}, config asks for ext-{cfg.ext_k}"
            )
    logger.info(f"[{request_id}] Training on {len(train)} examples ({len(val)} validation)")

    name = checkpoint_name(kind, cfg.ext_k)
    with staged_dir(checkpoint_dir, request_id) as tmp:
        ckpt_path = os.path.join(tmp, name)
        trainer = train_structure if kind == "structure" else train_sequence
        result = trainer(train, val, cfg, checkpoint_path=ckpt_path, request_id=request_id)
        write_csv(
            os.path.join(tmp, f"{kind}-ext{cfg.ext_k}.losses.csv"),
            ("epoch", "train_loss", "val_loss"),
            ([h["epoch"], h["train_loss"], h["val_loss"]] for h in result.history),
        )
        _echo_config(tmp, cfg)

    _record(
        "train",
        request_id,
        start,
        kind=kind,
        checkpoint=os.path.join(checkpoint_dir, name),
        steps=result.steps,
        best_val_loss=result.best_val_loss,
    )
    return result


# -----------------
# sample
# -----------------
def cmd_sample(
    structure_ckpt: str,
    sequence_ckpt: str,
    examples: Sequence[ComplexExample],
    out_dir: str,
    cfg: RunConfig,
    count: int = 1,
    length: int | None = None,
    request_id: str = "sample",
) -> list[dict[str, Any]]:
    """
    For every pocket and sample index: angles from the structure model, a backbone rebuilt with
    fixed bond lengths, then residue types from the sequence model conditioned on those angles.
    Each record carries its own generator seed: FASTA header "pdb_id|n|seed", sample id in the manifest.
    """
    if count < 1:
        raise ConfigError(f"count must be >= 1, got {count}")
    if not examples:
        raise EmptyDataError(f"[{request_id}] no pockets to sample for")
    start = time.perf_counter()
    struct = load_checkpoint(structure_ckpt, expect_kind="structure")
    seq = load_checkpoint(sequence_ckpt, expect_kind="sequence")
    check_compatible(struct, seq)
    M = config_transitions(seq.config.sequence, seq.schedule)

    manifest: list[dict[str, Any]] = []
    with staged_dir(out_dir, request_id) as tmp:
        for ex in sorted(examples, key=lambda e: e.pdb_id):
            if ex.ext_k != struct.ext_k:
                raise ConfigError(
                    f"[{request_id}] pocket {ex.pdb_id} is ext-{ex.ext_k}, checkpoints are ext-{struct.ext_k}"
                )
            n = int(length) if length else len(ex.peptide_angles)
            for j in range(count):
                sid = f"{ex.pdb_id}_s{j:03d}"
                rid = f"{request_id}-{sid}"
                seed = record_seed(cfg.seed, ex.pdb_id, j)
                rng = np.random.default_rng(seed)
                ic = sample_structure(struct.model, ex.pocket, n, struct.schedule, rng, struct.calibration, rid)
                letters = sample_sequence(seq.model, ic, ex.pocket, M, rng, request_id=rid)
                bb = reconstruct(ic, FIXED_BOND_LENGTHS, sequence=UNKNOWN_AA + letters)
                header = sample_header(ex.pdb_id, n, seed)
                write_text(
                    os.path.join(tmp, f"{sid}.pdb"),
                    format_backbone_pdb(bb, chain_id="P", remarks=[header, f"sample {sid}", f"ext_k {struct.ext_k}"]),
                )
                write_text(os.path.join(tmp, f"{sid}.fasta"), format_fasta([FastaRecord(header, letters)]))
                manifest.append(
                    {
                        "sample_id": sid,
                        "pdb_id": ex.pdb_id,
                        "index": j,
                        "seed": seed,
                        "ext_k": struct.ext_k,
                        "length": n,
                        "sequence": letters,
                        "angles": ic.angles.tolist(),
                    }
                )
                logger.info(f"[{rid}] {n} residues: {letters}")
        write_json(os.path.join(tmp, SAMPLES_MANIFEST), manifest)
        _echo_config(tmp, cfg)

    _record("sample", request_id, start, out_dir=out_dir, samples=len(manifest))
    return manifest


# -----------------
# evaluate
# -----------------
def _read_manifest(gen_dir: str) -> list[dict[str, Any]]:
    path = os.path.join(gen_dir, SAMPLES_MANIFEST)
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as ex:
        raise DataError(f"cannot read {path}: {ex}") from ex
    except ValueError as ex:
        raise DataError(f"{path} is not valid JSON: {ex}") from ex
    if not isinstance(doc, list):
        raise DataError(f"{path}: expected a list of samples")
    return doc


def _sample_backbone(sample: dict[str, Any]) -> tuple[InternalCoords, Backbone]:
    n = int(sample["length"])
    ic = InternalCoords(np.asarray(sample["angles"], dtype=np.float64), source_length=n + 2)
    return ic, reconstruct(ic, FIXED_BOND_LENGTHS, sequence=UNKNOWN_AA + str(sample["sequence"]))


def evaluate_sample(sample: dict[str, Any], ref: ComplexExample) -> tuple[MetricRow, InternalCoords]:
    ic, bb = _sample_backbone(sample)
    n_ref = len(ref.peptide_angles)
    if len(ic) != n_ref:
        raise ShapeError(
            f"{sample['sample_id']}: {len(ic)} generated rows vs {n_ref} reference rows; "
            "evaluation pairs residues by index"
        )
    gen_part, ref_part = paired_interior(bb, ref.peptide)
    placed = place_on_reference(bb, ref.peptide)
    letters = str(sample["sequence"])
    truth = ref.interior_sequence
    row = MetricRow(
        pdb_id=ref.pdb_id,
        sample_id=str(sample["sample_id"]),
        ext_k=int(sample.get("ext_k", ref.ext_k)),
        length=len(letters),
        rmsd=kabsch_rmsd(gen_part, ref_part),
        tm=tm_score(gen_part, ref_part),
        recovery=recovery_rate(letters, truth),
        similarity=seq_similarity(letters, truth),
        contact=in_contact(placed, ref.contact_backbone),
        sequence=letters,
    )
    return row, ic


def _diversity(rows: Sequence[MetricRow]) -> float | None:
    by_complex: dict[str, list[str]] = {}
    for r in rows:
        by_complex.setdefault(r.pdb_id, []).append(r.sequence)
    values = [seq_diversity(seqs) for _pid, seqs in sorted(by_complex.items()) if len(seqs) >= 2]
    return float(np.mean(values)) if values else None


def cmd_evaluate(
    generated_dirs: Sequence[str],
    reference_dir: str,
    out_dir: str,
    cfg: RunConfig,
    ensemble: bool = False,
    svg: bool = False,
    ext_range: tuple[int, int] | None = None,
    request_id: str = "evaluate",
) -> dict[str, Any]:
    """
    Metrics for generated samples against their reference complexes. With `ensemble`, runs from
    several ext-k checkpoint pairs are merged per complex; `ext_range` keeps only runs whose ext_k
    lies in the inclusive range.
    """
    if not generated_dirs:
        raise ConfigError("evaluate needs at least one generated directory")
    start = time.perf_counter()
    refs: dict[str, ComplexExample] = {}
    runs: list[list[MetricRow]] = []
    gen_ics: dict[tuple[str, str, int], InternalCoords] = {}
    for d in generated_dirs:
        rows: list[MetricRow] = []
        for sample in _read_manifest(d):
            if ext_range is not None and not ext_range[0] <= int(sample.get("ext_k", 0)) <= ext_range[1]:
                continue
            pid = str(sample["pdb_id"])
            if pid not in refs:
                refs[pid] = load_example(example_path(reference_dir, pid))
            row, ic = evaluate_sample(sample, refs[pid])
            rows.append(row)
            gen_ics.setdefault((row.pdb_id, row.sample_id, row.ext_k), ic)
        if rows:
            runs.append(rows)
        logger.info(f"[{request_id}] {d}: {len(rows)} samples evaluated")

    if ensemble and len(runs) > 1:
        rows = select_ensemble(runs)
    else:
        rows = sorted((r for run in runs for r in run), key=lambda r: (r.pdb_id, r.sample_id, r.ext_k))
    if not rows:
        raise EmptyDataError(f"[{request_id}] no generated samples found")

    generated = [gen_ics[(r.pdb_id, r.sample_id, r.ext_k)] for r in rows]
    reference = [refs[pid].peptide_angles for pid in sorted(refs)]
    gen_hist, ref_hist = column_histograms(generated), column_histograms(reference)
    alignment = default_alignment().describe()

    summary = summarize(rows, _diversity(rows))
    summary["alignment"] = alignment
    summary["ensemble"] = bool(ensemble and len(runs) > 1)
    summary["runs"] = len(runs)
    summary["divergence"] = divergences(gen_hist, ref_hist)
    summary["ramachandran"] = {"generated": ramachandran_bins(generated), "reference": ramachandran_bins(reference)}

    with staged_dir(out_dir, request_id) as tmp:
        write_metrics(os.path.join(tmp, "metrics.csv"), rows, alignment)
        write_samples(os.path.join(tmp, "samples.csv"), rows, alignment)
        write_distributions(os.path.join(tmp, "distributions.csv"), gen_hist, ref_hist)
        write_summary(os.path.join(tmp, "summary.json"), summary)
        _echo_config(tmp, cfg)
        if svg:
            write_histogram_svgs(tmp, gen_hist, ref_hist)
            write_ramachandran_svg(os.path.join(tmp, "ramachandran.svg"), generated, reference)

    logger.info(
        f"[{request_id}] rmsd {summary['rmsd_mean']:.3f} tm {summary['tm_mean']:.3f} "
        f"recovery {summary['recovery_mean']:.1f}% contact {summary['contact_rate']:.1f}%"
    )
    _record("evaluate", request_id, start, out_dir=out_dir, samples=len(rows))
    return summary


# -----------------
# shuffle-seq and roundtrip
# -----------------
def cmd_shuffle_seq(fasta_in: str, fasta_out: str, seed: int, request_id: str = "shuffle-seq") -> int:
    start = time.perf_counter()
    try:
        with open(fasta_in, encoding="utf-8") as f:
            records = parse_fasta(f.read())
    except OSError as ex:
        raise DataError(f"cannot read {fasta_in}: {ex}") from ex
    write_text(fasta_out, format_fasta(shuffle_records(records, seed)))
    logger.info(f"[{request_id}] shuffled {len(records)} record(s) into {fasta_out}")
    _record("shuffle-seq", request_id, start, fasta_out=fasta_out, records=len(records))
    return len(records)


def roundtrip_backbone(b: Backbone) -> dict[str, Any]:
    """Interior RMSD of extract -> reconstruct, with measured and with fixed bond lengths."""
    ic = extract_internal(b)
    L = len(b)
    seed = (b.coords[0, 0], b.coords[0, 1], b.coords[0, 2])
    ref = b.slice(1, L - 1)
    out: dict[str, Any] = {"length": L}
    for label, lens in (("measured", measure_bond_lengths(b)), ("fixed", FIXED_BOND_LENGTHS)):
        rebuilt = reconstruct(ic, lens, seed=seed, sequence=b.sequence[: L - 1])
        out[f"rmsd_{label}"] = kabsch_rmsd(rebuilt.slice(1, L - 1), ref)
    return out


def cmd_roundtrip(pdb_in: str, chain_id: str | None = None, request_id: str = "roundtrip") -> dict[str, Any]:
    start = time.perf_counter()
    s = read_pdb(pdb_in)
    chains = [s.chain(chain_id)] if chain_id else s.chains
    report: dict[str, Any] = {"pdb_id": s.pdb_id, "chains": []}
    for chain in chains:
        if len(chain.residues) < 3:
            logger.warning(f"[{request_id}] chain {chain.chain_id} skipped ({len(chain.residues)} residues)")
            continue
        try:
            entry = roundtrip_backbone(chain.backbone())
        except PepforgeError as ex:
            logger.warning(f"[{request_id}] chain {chain.chain_id} skipped: {ex}")
            continue
        report["chains"].append({"chain": chain.chain_id, **entry})
        logger.info(
            f"[{request_id}] {s.pdb_id}:{chain.chain_id} L={entry['length']} "
            f"measured {entry['rmsd_measured']:.2e} A, fixed {entry['rmsd_fixed']:.3f} A"
        )
    if not report["chains"]:
        raise EmptyDataError(f"[{request_id}] no chain of {pdb_in} could be round-tripped")
    _record("roundtrip", request_id, start, pdb=pdb_in, chains=len(report["chains"]))
    return report


__all__ = [
    "EFFECTIVE_CONFIG",
    "SAMPLES_MANIFEST",
    "_friendly_error",
    "record_seed",
    "sample_rng",
    "checkpoint_name",
    "cmd_prepare",
    "cmd_train",
    "cmd_sample",
    "evaluate_sample",
    "cmd_evaluate",
    "cmd_shuffle_seq",
    "roundtrip_backbone",
    "cmd_roundtrip",
]
