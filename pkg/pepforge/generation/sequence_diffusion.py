# pepforge sequence diffusion: discrete noising of residue types
#
# Responsibilities:
# - BLOSUM62-seeded base kernel (1 - lam) * softmax(B / tau) + lam * U and per-step kernels
#   Q_t = alpha_t * I + (1 - alpha_t) * base, with cumulative products Qbar_t = Qbar_{t-1} Q_t
# - Qbar_T must sit within MIXING_TOLERANCE (TV) of the stationary row, else ConfigError
# - Row-vector convention throughout: q(a_t | a_{t-1}) = a_{t-1} Q_t
# - Posterior q(a_{t-1} | a_t, a0), the CE + ELBO objective, and ancestral sampling conditioned
#   on peptide angles and the pocket
#
# Public API:
# - blosum_to_stochastic(B, temperature) -> (20, 20)
# - build_transitions(base, schedule, uniform_mix=0.0) -> TransitionMatrices
# - config_transitions(seq_cfg, schedule) -> TransitionMatrices
# - stationary_distribution(base) / mixing_tv(M)
# - q_forward(a0, t, M) / q_sample_sequence(a0_idx, t, M, rng)
# - posterior(a_t, a0_probs, t, M)
# - seq_loss(logits, a0, a_t, t, M, mask=None, return_parts=False)
# - sample_sequence(model, pep_angles, pocket, M, rng) -> str

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, cast

import numpy as np

from ..core.errors import ConfigError, DegeneratePosteriorError, EmptyDataError, RangeError, ShapeError
from ..core.tensor import Tensor, no_grad, softmax
from ..utils.blosum import blosum62_matrix
from ..utils.residues import decode
from .schedule import NoiseSchedule

if TYPE_CHECKING:
    from ..core.denoiser import Denoiser
    from ..data.dataset import PocketRepr
    from ..utils.config import SequenceConfig
    from ..utils.geometry import InternalCoords
    from .batching import Batch

logger = logging.getLogger(__name__)

LOG_EPS = 1e-10
MIXING_TOLERANCE = 0.05


@dataclass(frozen=True, eq=False)
class TransitionMatrices:
    """Q[t-1] is the step-t kernel (t = 1..T); Qbar[t] is the product up to t, Qbar[0] = I."""
    Q: np.ndarray
    Qbar: np.ndarray
    stationary: np.ndarray

    @property
    def T(self) -> int:
        return int(self.Q.shape[0])

    @property
    def K(self) -> int:
        return int(self.Q.shape[1])

    def step(self, t: int) -> np.ndarray:
        if not 1 <= t <= self.T:
            raise RangeError(f"transition step {t} outside [1, {self.T}]")
        return self.Q[t - 1]

    def cumulative(self, t: int) -> np.ndarray:
        if not 0 <= t <= self.T:
            raise RangeError(f"cumulative step {t} outside [0, {self.T}]")
        return self.Qbar[t]


def blosum_to_stochastic(B: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    if not (temperature > 0 and math.isfinite(temperature)):
        raise ConfigError(f"BLOSUM temperature must be > 0, got {temperature}")
    s = np.asarray(B, dtype=np.float64) / temperature
    s = s - s.max(axis=1, keepdims=True)
    e = np.exp(s)
    return e / e.sum(axis=1, keepdims=True)


def _check_stochastic(base: np.ndarray) -> None:
    if base.ndim != 2 or base.shape[0] != base.shape[1]:
        raise ConfigError(f"base kernel must be square, got {base.shape}")
    if np.any(base < 0) or not np.allclose(base.sum(axis=1), 1.0, atol=1e-9):
        raise ConfigError("base kernel must be row-stochastic")


def stationary_distribution(base: np.ndarray, squarings: int = 64) -> np.ndarray:
    """Stationary row of a row-stochastic kernel by repeated squaring (power iteration)."""
    P = np.asarray(base, dtype=np.float64)
    _check_stochastic(P)
    for _ in range(squarings):
        P = P @ P
        P /= P.sum(axis=1, keepdims=True)
    pi = P.mean(axis=0)
    return pi / pi.sum()


def mixing_tv(M: TransitionMatrices) -> float:
    """Largest total-variation distance between a row of Qbar_T and the stationary distribution."""
    return float(0.5 * np.abs(M.Qbar[-1] - M.stationary[None, :]).sum(axis=1).max())


def build_transitions(
    base: np.ndarray,
    schedule: NoiseSchedule,
    uniform_mix: float = 0.0,
    tolerance: float | None = MIXING_TOLERANCE,
) -> TransitionMatrices:
    """
    Per-step and cumulative kernels over the base (1 - uniform_mix) * base + uniform_mix * U.
    Raises ConfigError when Qbar_T ends more than tolerance (TV) from the stationary row;
    tolerance=None skips the check.
    """
    if not 0.0 <= uniform_mix <= 1.0:
        raise ConfigError(f"uniform_mix must lie in [0, 1], got {uniform_mix}")
    base = np.asarray(base, dtype=np.float64)
    _check_stochastic(base)
    K = base.shape[0]
    eye = np.eye(K)
    base = (1.0 - uniform_mix) * base + uniform_mix / K
    Q = np.empty((schedule.T, K, K))
    Qbar = np.empty((schedule.T + 1, K, K))
    Qbar[0] = eye
    for t in range(1, schedule.T + 1):
        a = schedule.alpha(t)
        Q[t - 1] = a * eye + (1.0 - a) * base
        Qbar[t] = Qbar[t - 1] @ Q[t - 1]
    for arr in (Q, Qbar):
        arr.setflags(write=False)
    M = TransitionMatrices(Q=Q, Qbar=Qbar, stationary=stationary_distribution(base))
    tv = mixing_tv(M)
    logger.debug(f"transition kernel: T={schedule.T} uniform_mix={uniform_mix} mixing_tv={tv:.4f}")
    if tolerance is not None and tv > tolerance:
        raise ConfigError(
            f"Qbar_T is {tv:.3f} (TV) from the stationary distribution, above {tolerance}; "
            f"raise sequence.uniform_mix, the BLOSUM temperature or schedule.T"
        )
    return M


def config_transitions(seq: SequenceConfig, schedule: NoiseSchedule) -> TransitionMatrices:
    """Transition matrices for a run's [sequence] table on the given schedule."""
    base = blosum_to_stochastic(blosum62_matrix(), seq.blosum_temperature)
    return build_transitions(base, schedule, uniform_mix=seq.uniform_mix)


# -----------------
# Forward process and posterior
# -----------------
def q_forward(a0: np.ndarray, t: int, M: TransitionMatrices) -> np.ndarray:
    """Distribution of a_t given a0 (one-hot rows): a0 @ Qbar_t."""
    a0 = np.asarray(a0, dtype=np.float64)
    if a0.shape[-1] != M.K:
        raise ShapeError(f"expected {M.K} categories, got {a0.shape[-1]}")
    return a0 @ M.cumulative(t)


def _categorical(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One draw per row of a (..., K) probability array."""
    cdf = np.cumsum(probs, axis=-1)
    u = rng.random(probs.shape[:-1] + (1,)) * cdf[..., -1:]
    idx = (cdf <= u).sum(axis=-1)
    return np.minimum(idx, probs.shape[-1] - 1).astype(np.int64)


def q_sample_sequence(
    a0_idx: np.ndarray,
    t: int | np.ndarray,
    M: TransitionMatrices,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw a_t for index array a0_idx, one step per leading-axis example when t is an array."""
    a0_idx = np.asarray(a0_idx, dtype=np.int64)
    steps = np.asarray(t, dtype=np.int64)
    if np.any(steps < 0) or np.any(steps > M.T):
        raise RangeError(f"cumulative step outside [0, {M.T}]")
    if steps.ndim == 0:
        probs = M.Qbar[int(steps)][a0_idx]
    else:
        probs = np.stack([M.Qbar[int(s)][a0_idx[b]] for b, s in enumerate(steps)])
    return _categorical(probs, rng)


def _likelihood(a_t: np.ndarray, Qt: np.ndarray) -> np.ndarray:
    """q(a_t | a_{t-1} = j) for every j; a_t as indices (...,) -> (..., K)."""
    return np.moveaxis(Qt[:, a_t], 0, -1)


def posterior(a_t: np.ndarray, a0_probs: np.ndarray, t: int, M: TransitionMatrices) -> np.ndarray:
    """
    q(a_{t-1} | a_t, a0) proportional to q(a_t | a_{t-1}) * (a0_probs @ Qbar_{t-1}).
    a_t: indices (...,) or one-hot rows (..., K); a0_probs: (..., K).
    """
    Qt = M.step(t)
    idx = np.asarray(a_t)
    if np.issubdtype(idx.dtype, np.floating):
        idx = np.argmax(idx, axis=-1)
    idx = idx.astype(np.int64)
    prior = np.asarray(a0_probs, dtype=np.float64) @ M.cumulative(t - 1)
    unnorm = _likelihood(idx, Qt) * prior
    z = unnorm.sum(axis=-1, keepdims=True)
    if np.any(z <= 0):
        raise DegeneratePosteriorError(f"posterior normaliser is zero at step {t}")
    return unnorm / z


# -----------------
# Objective
# -----------------
def seq_loss(
    logits: Tensor,
    a0: np.ndarray,
    a_t: np.ndarray,
    t: np.ndarray | int,
    M: TransitionMatrices,
    mask: np.ndarray | None = None,
    return_parts: bool = False,
) -> Tensor | tuple[Tensor, dict[str, float]]:
    """
    CE(a0, softmax(logits)) + ELBO term, averaged over unmasked residues. The ELBO term is
    KL(q(a_{t-1} | a_t, a0) || p(a_{t-1} | a_t)) for t >= 2 and -log p(a0) for t = 1.
    logits: (B, n, K); a0, a_t: (B, n) indices; t: (B,) or a scalar.
    """
    if logits.ndim != 3:
        raise ShapeError(f"logits must be (B, n, K), got {logits.shape}")
    B, n, K = logits.shape
    a0 = np.asarray(a0, dtype=np.int64).reshape(B, n)
    a_t = np.asarray(a_t, dtype=np.int64).reshape(B, n)
    steps = np.broadcast_to(np.asarray(t, dtype=np.int64).reshape(-1), (B,))
    if np.any(steps < 1) or np.any(steps > M.T):
        raise RangeError(f"diffusion step outside [1, {M.T}]")
    w = np.ones((B, n)) if mask is None else np.asarray(mask, dtype=np.float64).reshape(B, n)
    total = float(w.sum())
    if total == 0:
        raise EmptyDataError("loss over an empty mask")

    onehot = np.eye(K)[a0]
    p0 = softmax(logits, axis=-1)
    nll = -((p0 * onehot).sum(axis=-1) + LOG_EPS).log()
    ce = (nll * w).sum() / total

    like = np.stack([_likelihood(a_t[b], M.step(int(s))) for b, s in enumerate(steps)])
    prev = np.stack([M.cumulative(int(s) - 1) for s in steps])
    post_true = np.stack([posterior(a_t[b], onehot[b], int(s), M) for b, s in enumerate(steps)])
    unnorm = (p0 @ prev) * like
    post_pred = unnorm / unnorm.sum(axis=-1, keepdims=True)
    const = (post_true * np.log(post_true + LOG_EPS)).sum(axis=-1)
    kl = Tensor(const) - (Tensor(post_true) * (post_pred + LOG_EPS).log()).sum(axis=-1)

    is_first = (steps == 1).astype(np.float64)[:, None]
    elbo_per = kl * (1.0 - is_first) + nll * is_first
    elbo = (elbo_per * w).sum() / total
    loss = elbo + ce
    if return_parts:
        return loss, {"ce": ce.item(), "elbo": elbo.item()}
    return loss


def sequence_loss(
    model: Denoiser,
    batch: Batch,
    M: TransitionMatrices,
    rng: np.random.Generator,
    training: bool = True,
) -> Tensor:
    """One uniformly drawn step per example; noisy types conditioned on the true angles."""
    B = len(batch)
    t = rng.integers(1, M.T + 1, size=B)
    a_t = q_sample_sequence(batch.residues, t, M, rng)
    logits = model(
        np.eye(M.K)[a_t],
        t,
        batch.pocket_angles,
        batch.pocket_aa,
        pep_cond=batch.angles,
        pep_mask=batch.pep_mask,
        pocket_mask=batch.pocket_mask,
        training=training,
        rng=rng,
    )
    return cast(Tensor, seq_loss(logits, batch.residues, a_t, t, M, batch.pep_mask))


# -----------------
# Sampling
# -----------------
def _softmax_np(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def sample_sequence(
    model: Denoiser,
    pep_angles: InternalCoords,
    pocket: PocketRepr,
    M: TransitionMatrices,
    rng: np.random.Generator,
    stationary: np.ndarray | None = None,
    request_id: str = "sample",
) -> str:
    """Residue types for the rows of pep_angles, from a stationary draw at T down to t = 1."""
    n = len(pep_angles)
    if n < 1:
        raise RangeError("sample_sequence needs at least one angle row")
    pi = stationary if stationary is not None else M.stationary
    a = _categorical(np.broadcast_to(pi, (n, M.K)), rng)
    cond = pep_angles.angles[None]
    poc_a = pocket.angles[None]
    poc_aa = pocket.aa_onehot[None]
    eye = np.eye(M.K)
    with no_grad():
        for t in range(M.T, 0, -1):
            logits = model(eye[a][None], [t], poc_a, poc_aa, pep_cond=cond).data[0]
            p0 = _softmax_np(logits)
            if t > 1:
                a = _categorical(posterior(a, p0, t, M), rng)
            else:
                a = _categorical(p0, rng)
    seq = decode(a)
    logger.debug(f"[{request_id}] sampled sequence {seq}")
    return seq


__all__ = [
    "TransitionMatrices",
    "blosum_to_stochastic",
    "build_transitions",
    "config_transitions",
    "stationary_distribution",
    "mixing_tv",
    "q_forward",
    "q_sample_sequence",
    "posterior",
    "seq_loss",
    "sequence_loss",
    "sample_sequence",
]
