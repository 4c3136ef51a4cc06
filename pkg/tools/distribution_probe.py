#!/usr/bin/env python3
"""
pepforge distribution probe

Purpose:
- Train the structure model on a subset of a prepared data directory
- Sample one peptide per held-out complex at the reference length
- Report per-dihedral JS distance against the held-out angles and Ramachandran region shares
  as a JSON report, with pass/fail flags for the two checks below

Checks:
- every dihedral column (psi, omega, phi, delta) has JS distance < --js-threshold (default 0.35)
- more than half of the generated residues fall inside the three named Ramachandran regions,
  and rh_helix is the largest single region

Usage:
  pepforge prepare --pdb-dir data/biolip --out data/prepared
  python tools/distribution_probe.py --data data/prepared --train-limit 200 --save_report
  python tools/distribution_probe.py --data data/prepared --preset full --set optimizer.epochs=20
"""
from __future__ import annotations

import argparse
import datetime
import os
import sys
import time
from typing import Any

import numpy as np

# Import within repo context
sys.path.append(os.path.dirname(os.path.dirname(__file__)))

from pepforge import set_verbosity  # noqa: E402
from pepforge.core.errors import PepforgeError  # noqa: E402
from pepforge.core.pipeline import sample_rng  # noqa: E402
from pepforge.data.dataset import load_partition  # noqa: E402
from pepforge.evaluation.distributions import (  # noqa: E402
    RAMACHANDRAN_REGIONS,
    column_histograms,
    ramachandran_bins,
    region_shares,
)
from pepforge.evaluation.report import divergences  # noqa: E402
from pepforge.generation.structure_diffusion import sample_structure  # noqa: E402
from pepforge.generation.training import train_structure  # noqa: E402
from pepforge.utils.atomic_io import dumps_json, write_json  # noqa: E402
from pepforge.utils.config import get_config_dir, load_run_config  # noqa: E402

DIHEDRALS = ("psi", "omega", "phi", "delta")


def run_probe(args: argparse.Namespace) -> dict[str, Any]:
    cfg = load_run_config(path=args.config, preset=args.preset, overrides=args.overrides, seed=args.seed)
    train = load_partition(args.data, "train")[: args.train_limit or None]
    val = load_partition(args.data, "val")
    held_out = load_partition(args.data, args.held_out)

    t0 = time.perf_counter()
    result = train_structure(train, val, cfg, request_id="probe-train")
    train_s = time.perf_counter() - t0

    t0 = time.perf_counter()
    generated = []
    for ex in held_out:
        rng = sample_rng(cfg.seed, ex.pdb_id, 0)
        generated.append(
            sample_structure(
                result.model,
                ex.pocket,
                len(ex.peptide_angles),
                result.schedule,
                rng,
                result.calibration,
                request_id=f"probe-{ex.pdb_id}",
            )
        )
    sample_s = time.perf_counter() - t0
    reference = [ex.peptide_angles for ex in held_out]

    div = divergences(column_histograms(generated), column_histograms(reference))
    js = {name: (div[name] or {}).get("js_distance") for name in DIHEDRALS}
    gen_counts = ramachandran_bins(generated)
    shares = region_shares(gen_counts)
    named = sum(shares[r] for r in RAMACHANDRAN_REGIONS if r != "other")
    largest = max((r for r in RAMACHANDRAN_REGIONS if r != "other"), key=lambda r: shares[r])

    return {
        "timestamp": datetime.datetime.now().isoformat(),
        "data": os.path.abspath(args.data),
        "seed": cfg.seed,
        "train_examples": len(train),
        "held_out": {"partition": args.held_out, "examples": len(held_out)},
        "training": {
            "steps": result.steps,
            "best_val_loss": result.best_val_loss,
            "best_epoch": result.best_epoch,
            "seconds": round(train_s, 2),
        },
        "sampling_seconds": round(sample_s, 2),
        "js_distance": js,
        "divergence": div,
        "ramachandran": {
            "generated": gen_counts,
            "reference": ramachandran_bins(reference),
            "generated_shares": shares,
        },
        "checks": {
            "js_below_threshold": all(v is not None and v < args.js_threshold for v in js.values()),
            "js_threshold": args.js_threshold,
            "named_regions_over_half": named > 0.5,
            "rh_helix_largest": largest == "rh_helix",
        },
    }


def main() -> int:
    ap = argparse.ArgumentParser(description="pepforge distribution probe")
    ap.add_argument("--data", required=True, help="Prepared data directory (output of `pepforge prepare`)")
    ap.add_argument("--train-limit", type=int, default=200, help="Use at most this many training complexes (0: all)")
    ap.add_argument("--held-out", choices=("val", "test"), default="test", help="Partition to compare against")
    ap.add_argument("--js-threshold", type=float, default=0.35)
    ap.add_argument("--config", default=None, help="TOML config file")
    ap.add_argument("--preset", choices=("miniature", "full"), default=None)
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--save_report", action="store_true", help="Save the JSON report under the pepforge config directory")
    ap.add_argument("--out", default="", help="Explicit report path (implies saving)")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    set_verbosity(verbose=args.verbose)

    try:
        report = run_probe(args)
    except PepforgeError as ex:
        print(f"Probe failed: {ex}", file=sys.stderr)
        return int(ex.exit_code)

    sys.stdout.write(dumps_json(report))
    if args.out or args.save_report:
        out_fp = args.out or os.path.join(
            get_config_dir(), "reports", f"distribution_probe_{datetime.datetime.now():%Y%m%d_%H%M%S}.json"
        )
        try:
            write_json(out_fp, report)
            print(f"Saved report: {out_fp}", file=sys.stderr)
        except OSError as ex:
            print(f"Warning: failed to save report: {ex}", file=sys.stderr)

    checks = report["checks"]
    passed = checks["js_below_threshold"] and checks["named_regions_over_half"] and checks["rh_helix_largest"]
    print(f"Probe {'passed' if passed else 'failed'}: " + ", ".join(f"{k}={v}" for k, v in checks.items()), file=sys.stderr)
    return 0 if passed else 1


if __name__ == "__main__":
    sys.exit(main())
