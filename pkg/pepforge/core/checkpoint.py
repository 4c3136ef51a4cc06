# pepforge checkpoints: one versioned JSON document per trained denoiser
#
# Layout (key order fixed):
#   schema, kind, aa_order, ext_k, schedule {T, kind, noise_scale}, config, rng_state,
#   calibration (structure only, else null), training {epoch, step, best_val_loss}, params
# Parameters are stored as name -> {shape, data}; floats keep their shortest round-trip repr.

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..generation.schedule import NoiseSchedule, build_schedule
from ..generation.structure_diffusion import AngleCalibration
from ..utils.atomic_io import write_json
from ..utils.config import RunConfig, run_config_from_dict
from ..utils.residues import AA_ORDER
from .denoiser import KINDS, Denoiser
from .errors import ConfigError, DataError, PepforgeError

logger = logging.getLogger(__name__)

SCHEMA = "pepforge.checkpoint/1"


@dataclass
class Checkpoint:
    kind: str
    model: Denoiser
    schedule: NoiseSchedule
    config: RunConfig
    calibration: AngleCalibration | None = None
    training: dict[str, Any] = field(default_factory=dict)
    rng_state: dict[str, Any] | None = None

    @property
    def ext_k(self) -> int:
        return int(self.config.ext_k)


def checkpoint_to_doc(ckpt: Checkpoint) -> dict[str, Any]:
    return {
        "schema": SCHEMA,
        "kind": ckpt.kind,
        "aa_order": AA_ORDER,
        "ext_k": ckpt.ext_k,
        "schedule": ckpt.schedule.to_dict(),
        "config": ckpt.config.to_dict(),
        "rng_state": ckpt.rng_state,
        "calibration": ckpt.calibration.to_dict() if ckpt.calibration is not None else None,
        "training": dict(ckpt.training),
        "params": ckpt.model.params.to_state(),
    }


def save_checkpoint(path: str, ckpt: Checkpoint) -> None:
    write_json(path, checkpoint_to_doc(ckpt))
    logger.debug(f"[{ckpt.kind}] checkpoint written to {path}")


def rng_state(rng: np.random.Generator) -> dict[str, Any]:
    return dict(rng.bit_generator.state)


def load_checkpoint(path: str, expect_kind: str | None = None) -> Checkpoint:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as ex:
        raise DataError(f"cannot read checkpoint {path}: {ex}") from ex
    except ValueError as ex:
        raise DataError(f"checkpoint {path} is not valid JSON: {ex}") from ex
    if not isinstance(doc, dict) or doc.get("schema") != SCHEMA:
        raise ConfigError(f"{path}: not a {SCHEMA} document")
    kind = doc.get("kind")
    if kind not in KINDS:
        raise ConfigError(f"{path}: unknown model kind {kind!r}")
    if expect_kind is not None and kind != expect_kind:
        raise ConfigError(f"{path}: expected a {expect_kind} checkpoint, got {kind}")
    if doc.get("aa_order") != AA_ORDER:
        raise ConfigError(f"{path}: amino-acid order {doc.get('aa_order')!r} != {AA_ORDER}")
    try:
        cfg = run_config_from_dict(doc["config"])
        sched = doc["schedule"]
        schedule = build_schedule(sched["kind"], int(sched["T"]), float(sched["noise_scale"]))
        model = Denoiser(kind, cfg.model, schedule.T, seed=cfg.seed)
        model.params.load_state(doc["params"])
        calibration = AngleCalibration.from_dict(doc["calibration"]) if doc.get("calibration") else None
    except PepforgeError:
        raise
    except (KeyError, TypeError, ValueError) as ex:
        raise DataError(f"{path}: malformed checkpoint ({ex})") from ex
    if int(doc.get("ext_k", cfg.ext_k)) != cfg.ext_k:
        raise ConfigError(f"{path}: ext_k field disagrees with the stored config")
    return Checkpoint(
        kind=kind,
        model=model,
        schedule=schedule,
        config=cfg,
        calibration=calibration,
        training=dict(doc.get("training") or {}),
        rng_state=doc.get("rng_state"),
    )


def check_compatible(structure: Checkpoint, sequence: Checkpoint) -> None:
    """The twin models must see the same pocket representation."""
    if structure.ext_k != sequence.ext_k:
        raise ConfigError(
            f"ext_k mismatch: structure checkpoint uses ext-{structure.ext_k}, "
            f"sequence checkpoint uses ext-{sequence.ext_k}"
        )


__all__ = [
    "SCHEMA",
    "Checkpoint",
    "checkpoint_to_doc",
    "save_checkpoint",
    "load_checkpoint",
    "check_compatible",
    "rng_state",
]
