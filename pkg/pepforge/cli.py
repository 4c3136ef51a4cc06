# pepforge command line
#
# Verbs: prepare, train, sample, evaluate, shuffle-seq, roundtrip
# Global options (accepted before or after the verb): --config, --preset, --seed, --ext-k,
# --set section.key=value (repeatable), -v/--verbose, -q/--quiet
#
# Exit codes: 0 success, 2 configuration error, 3 data error, 4 numeric failure, 1 anything else.

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections.abc import Sequence

from . import __version__, set_verbosity
from .core.errors import ConfigError, PepforgeError
from .core.pipeline import (
    _friendly_error,
    checkpoint_name,
    cmd_evaluate,
    cmd_prepare,
    cmd_roundtrip,
    cmd_sample,
    cmd_shuffle_seq,
    cmd_train,
)
from .data.dataset import load_example, load_partition
from .utils.atomic_io import dumps_json, write_json
from .utils.config import RunConfig, load_run_config

logger = logging.getLogger(__name__)


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("configuration")
    g.add_argument("--config", default=argparse.SUPPRESS, help="TOML config file")
    g.add_argument("--preset", choices=("miniature", "full"), default=argparse.SUPPRESS)
    g.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="Overrides config and PEPFORGE_SEED")
    g.add_argument("--ext-k", dest="ext_k", type=int, default=argparse.SUPPRESS, help="Pocket neighbour expansion 0..4")
    g.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=argparse.SUPPRESS,
        metavar="SECTION.KEY=VALUE",
        help="Override one config value (repeatable)",
    )
    g.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    g.add_argument("-q", "--quiet", action="store_true", default=argparse.SUPPRESS)
    return p


def _ext_range(text: str) -> tuple[int, int]:
    lo, sep, hi = text.partition("..")
    try:
        a, b = (int(lo), int(hi)) if sep else (int(lo), int(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected K or LO..HI, got {text!r}") from None
    if a > b:
        raise argparse.ArgumentTypeError(f"empty ext-k range {text!r}")
    return a, b


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    ap = argparse.ArgumentParser(
        prog="pepforge",
        description="Pocket-aware peptide generation with twin diffusion models",
        parents=[common],
    )
    ap.add_argument("--version", action="version", version=f"pepforge {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="Build examples and a split from PDB complexes")
    p.add_argument("--pdb-dir", required=True, help="Directory with PDB files and complexes.tsv")
    p.add_argument("--table", help="Complex table (default: <pdb-dir>/complexes.tsv)")
    p.add_argument("--out", help="Output data directory (default: paths.data_dir)")
    p.add_argument("--workers", type=int, default=1, help="Parallel parsers; output order is unchanged")

    p = sub.add_parser("train", parents=[common], help="Train the structure or the sequence model")
    p.add_argument("kind", choices=("structure", "sequence"))
    p.add_argument("--data", help="Prepared data directory (default: paths.data_dir)")
    p.add_argument("--checkpoints", help="Checkpoint directory (default: paths.checkpoint_dir)")

    p = sub.add_parser("sample", parents=[common], help="Generate peptides for one or more pockets")
    p.add_argument("--structure-ckpt", help="Default: <checkpoints>/structure-ext<k>.ckpt.json")
    p.add_argument("--sequence-ckpt", help="Default: <checkpoints>/sequence-ext<k>.ckpt.json")
    p.add_argument("--checkpoints", help="Checkpoint directory (default: paths.checkpoint_dir)")
    p.add_argument("--pocket", action="append", help="Example JSON to take the pocket from (repeatable)")
    p.add_argument("--split", choices=("train", "val", "test"), help="Sample for every complex of a partition")
    p.add_argument("--data", help="Prepared data directory for --split (default: paths.data_dir)")
    p.add_argument("--length", type=int, help="Interior residues to generate (default: reference length)")
    p.add_argument("--count", type=int, default=1, help="Samples per pocket")
    p.add_argument("--out", help="Output directory (default: paths.output_dir/samples)")

    p = sub.add_parser("evaluate", parents=[common], help="Score generated peptides against references")
    p.add_argument("--generated", action="append", required=True, help="Sample directory (repeatable)")
    p.add_argument("--reference", help="Prepared data directory (default: paths.data_dir)")
    p.add_argument("--out", help="Output directory (default: paths.output_dir/eval)")
    p.add_argument(
        "--ensemble",
        action="store_true",
        help=(
            "Merge runs from several ext-k checkpoint pairs. Per complex and sample id, the candidate "
            "with the best TM-score supplies the structure columns and the one with the best "
            "similarity supplies the sequence columns; earlier --generated runs win ties"
        ),
    )
    p.add_argument(
        "--ext-range",
        dest="ext_range",
        type=_ext_range,
        metavar="LO..HI",
        help="Only evaluate samples whose ext_k lies in LO..HI (or equals K)",
    )
    p.add_argument("--svg", action="store_true", help="Also write histogram and Ramachandran SVGs")

    p = sub.add_parser("shuffle-seq", parents=[common], help="Shuffle every FASTA record (same length)")
    p.add_argument("--in", dest="fasta_in", required=True)
    p.add_argument("--out", dest="fasta_out", required=True)

    p = sub.add_parser("roundtrip", parents=[common], help="extract -> reconstruct RMSD for a PDB file")
    p.add_argument("pdb")
    p.add_argument("--chain", help="Only this chain")
    p.add_argument("--out", help="Also write the JSON report here")
    return ap


def _config(args: argparse.Namespace) -> RunConfig:
    return load_run_config(
        path=getattr(args, "config", None),
        preset=getattr(args, "preset", None),
        overrides=getattr(args, "overrides", None),
        seed=getattr(args, "seed", None),
        ext_k=getattr(args, "ext_k", None),
    )


def _run(args: argparse.Namespace) -> int:
    if args.command == "roundtrip":
        report = cmd_roundtrip(args.pdb, chain_id=args.chain)
        if args.out:
            write_json(args.out, report)
        sys.stdout.write(dumps_json(report))
        return 0

    cfg = _config(args)
    paths = cfg.paths
    if args.command == "prepare":
        result = cmd_prepare(
            args.pdb_dir, args.out or paths.data_dir, cfg, table=args.table, workers=max(1, args.workers)
        )
        sys.stdout.write(dumps_json(result["report"]))
    elif args.command == "train":
        cmd_train(args.kind, cfg, data_dir=args.data, checkpoint_dir=args.checkpoints)
    elif args.command == "sample":
        ckpt_dir = args.checkpoints or paths.checkpoint_dir
        if args.pocket and args.split:
            raise ConfigError("use either --pocket or --split, not both")
        if args.pocket:
            examples = [load_example(p) for p in args.pocket]
        elif args.split:
            examples = load_partition(args.data or paths.data_dir, args.split)
        else:
            raise ConfigError("sample needs --pocket <example.json> or --split <partition>")
        cmd_sample(
            args.structure_ckpt or os.path.join(ckpt_dir, checkpoint_name("structure", cfg.ext_k)),
            args.sequence_ckpt or os.path.join(ckpt_dir, checkpoint_name("sequence", cfg.ext_k)),
            examples,
            args.out or os.path.join(paths.output_dir, "samples"),
            cfg,
            count=args.count,
            length=args.length,
        )
    elif args.command == "evaluate":
        summary = cmd_evaluate(
            args.generated,
            args.reference or paths.data_dir,
            args.out or os.path.join(paths.output_dir, "eval"),
            cfg,
            ensemble=args.ensemble,
            svg=args.svg,
            ext_range=args.ext_range,
        )
        sys.stdout.write(dumps_json({k: v for k, v in summary.items() if k not in ("divergence", "ramachandran")}))
    elif args.command == "shuffle-seq":
        cmd_shuffle_seq(args.fasta_in, args.fasta_out, cfg.seed)
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    set_verbosity(verbose=getattr(args, "verbose", False), quiet=getattr(args, "quiet", False))
    try:
        return _run(args)
    except PepforgeError as e:
        logger.error(_friendly_error(e))
        logger.debug("details", exc_info=True)
        return int(e.exit_code)
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
