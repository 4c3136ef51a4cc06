# pepforge training loop shared by the twin models
#
# Deterministic given (examples, config, seed): one Generator seeded from config.seed drives the
# shuffles, steps, noise and dropout; validation uses a fresh Generator (seed + 1) every epoch so
# validation losses are comparable across epochs.
#
# Per epoch: shuffle -> batches -> zero_grad -> loss -> finiteness check -> backward -> Adam step.
# The best validation snapshot is kept (and checkpointed when a path is given); training stops
# after `patience` epochs without improvement (0 disables early stopping) or at max_steps.

from __future__ import annotations

import logging
import math
import time
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from ..core.checkpoint import Checkpoint, rng_state, save_checkpoint
from ..core.denoiser import Denoiser
from ..core.errors import EmptyDataError, TrainingDivergenceError
from ..core.optim import Adam
from ..core.tensor import Tensor, no_grad
from ..data.dataset import ComplexExample
from ..utils.config import RunConfig
from .batching import Batch, collate
from .schedule import NoiseSchedule, build_schedule
from .sequence_diffusion import TransitionMatrices, config_transitions, sequence_loss
from .structure_diffusion import AngleCalibration, structure_loss

logger = logging.getLogger(__name__)

LossFn = Callable[[Batch, np.random.Generator, bool], Tensor]


@dataclass
class TrainResult:
    kind: str
    model: Denoiser
    schedule: NoiseSchedule
    history: list[dict[str, Any]] = field(default_factory=list)
    best_val_loss: float = math.inf
    best_epoch: int = 0
    steps: int = 0
    calibration: AngleCalibration | None = None
    transitions: TransitionMatrices | None = None

    @property
    def train_losses(self) -> list[float]:
        return [h["train_loss"] for h in self.history]


def _batches(examples: Sequence[ComplexExample], order: np.ndarray, size: int) -> list[list[ComplexExample]]:
    return [[examples[i] for i in order[s : s + size]] for s in range(0, len(order), size)]


def _evaluate(
    loss_fn: LossFn,
    examples: Sequence[ComplexExample],
    size: int,
    calibration: AngleCalibration | None,
    seed: int,
) -> float:
    rng = np.random.default_rng(seed)
    total, count = 0.0, 0
    with no_grad():
        for chunk in _batches(examples, np.arange(len(examples)), size):
            loss = loss_fn(collate(chunk, calibration), rng, False).item()
            total += loss * len(chunk)
            count += len(chunk)
    return total / count


def _fit(
    kind: str,
    model: Denoiser,
    schedule: NoiseSchedule,
    loss_fn: LossFn,
    train: Sequence[ComplexExample],
    val: Sequence[ComplexExample],
    cfg: RunConfig,
    calibration: AngleCalibration | None,
    checkpoint_path: str | None,
    request_id: str,
    result: TrainResult,
) -> TrainResult:
    if not train:
        raise EmptyDataError(f"[{request_id}] training set is empty")
    opt_cfg = cfg.optimizer
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.params, lr=opt_cfg.lr, betas=opt_cfg.betas, eps=opt_cfg.eps)
    best_state: dict[str, Any] | None = None
    stale = 0
    start = time.perf_counter()

    for epoch in range(1, opt_cfg.epochs + 1):
        order = rng.permutation(len(train))
        epoch_loss, seen = 0.0, 0
        for chunk in _batches(train, order, opt_cfg.batch_size):
            if opt_cfg.max_steps and result.steps >= opt_cfg.max_steps:
                break
            batch = collate(chunk, calibration)
            model.params.zero_grad()
            loss = loss_fn(batch, rng, True)
            value = loss.item()
            if not math.isfinite(value):
                raise TrainingDivergenceError(f"[{request_id}] non-finite loss at step {result.steps + 1}")
            loss.backward()
            opt.step()
            result.steps += 1
            epoch_loss += value * len(chunk)
            seen += len(chunk)
            logger.debug(f"[{request_id}] step {result.steps} loss {value:.6f}")
        if seen == 0:
            break

        train_loss = epoch_loss / seen
        val_loss = (
            _evaluate(loss_fn, val, opt_cfg.batch_size, calibration, cfg.seed + 1) if val else train_loss
        )
        if not math.isfinite(val_loss):
            raise TrainingDivergenceError(f"[{request_id}] non-finite validation loss in epoch {epoch}")
        result.history.append({"epoch": epoch, "train_loss": train_loss, "val_loss": val_loss})
        logger.info(f"[{request_id}] epoch {epoch}: train {train_loss:.5f} val {val_loss:.5f}")

        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            result.best_epoch = epoch
            best_state = model.params.to_state()
            stale = 0
            if checkpoint_path:
                save_checkpoint(
                    checkpoint_path,
                    Checkpoint(
                        kind=kind,
                        model=model,
                        schedule=schedule,
                        config=cfg,
                        calibration=calibration,
                        training={"epoch": epoch, "step": result.steps, "best_val_loss": val_loss},
                        rng_state=rng_state(rng),
                    ),
                )
        else:
            stale += 1
            if opt_cfg.patience and stale >= opt_cfg.patience:
                logger.info(f"[{request_id}] early stop after {epoch} epochs ({stale} without improvement)")
                break

    if best_state is not None:
        model.params.load_state(best_state)
    dur = time.perf_counter() - start
    logger.info(
        f"[{request_id}] {kind} training finished: {result.steps} steps, "
        f"best val {result.best_val_loss:.5f} at epoch {result.best_epoch} ({dur:.1f}s)"
    )
    return result


def train_structure(
    train: Sequence[ComplexExample],
    val: Sequence[ComplexExample],
    cfg: RunConfig,
    checkpoint_path: str | None = None,
    request_id: str = "train-structure",
) -> TrainResult:
    schedule = build_schedule(cfg.schedule.kind, cfg.schedule.T, cfg.schedule.noise_scale)
    model = Denoiser("structure", cfg.model, schedule.T, seed=cfg.seed)
    calibration = AngleCalibration.fit(ex.peptide_angles.angles for ex in train) if train else None
    beta = cfg.optimizer.loss_beta

    def loss_fn(batch: Batch, rng: np.random.Generator, training: bool) -> Tensor:
        return structure_loss(model, batch, schedule, rng, beta, training)

    result = TrainResult(kind="structure", model=model, schedule=schedule, calibration=calibration)
    return _fit("structure", model, schedule, loss_fn, train, val, cfg, calibration, checkpoint_path, request_id, result)


def train_sequence(
    train: Sequence[ComplexExample],
    val: Sequence[ComplexExample],
    cfg: RunConfig,
    checkpoint_path: str | None = None,
    request_id: str = "train-sequence",
) -> TrainResult:
    schedule = build_schedule(cfg.schedule.kind, cfg.schedule.T, cfg.schedule.noise_scale)
    model = Denoiser("sequence", cfg.model, schedule.T, seed=cfg.seed)
    M = config_transitions(cfg.sequence, schedule)

    def loss_fn(batch: Batch, rng: np.random.Generator, training: bool) -> Tensor:
        return sequence_loss(model, batch, M, rng, training)

    result = TrainResult(kind="sequence", model=model, schedule=schedule, transitions=M)
    return _fit("sequence", model, schedule, loss_fn, train, val, cfg, None, checkpoint_path, request_id, result)


__all__ = ["TrainResult", "train_structure", "train_sequence"]
