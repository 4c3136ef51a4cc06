# pepforge structure diffusion: wrapped-Gaussian noising of peptide angles
#
# Responsibilities:
# - Forward draw x_t = wrap(sqrt(ab_t) * x0 + sqrt(1 - ab_t) * sigma * eps) over (n, 8) angles
# - Wrapped smooth-L1 objective on the predicted noise (numpy reference and autodiff form)
# - Angle calibration: dihedrals centred on their circular mean, bond angles mapped affinely
#   from their training range onto most of the circle and back into (0, pi) at sampling time
# - Ancestral sampling conditioned on a pocket
#
# Public API:
# - q_sample(x0, t, schedule, noise) -> (x_t, noise)
# - wrapped_difference(a, b) / wrapped_smooth_l1(eps_true, eps_pred, beta, mask=None)
# - AngleCalibration.fit(...) / .normalize / .denormalize
# - structure_loss(model, batch, schedule, rng, beta, training=True) -> Tensor
# - p_sample_step(...) / sample_structure(model, pocket, n, schedule, rng, calibration) -> InternalCoords

from __future__ import annotations

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass
from typing import TYPE_CHECKING, Any

import numpy as np

from ..core.errors import EmptyDataError, InvariantError, RangeError, SamplingDivergenceError, ShapeError
from ..core.tensor import Tensor, no_grad, smooth_l1, wrap
from ..utils.geometry import BOND_ANGLE_COLUMNS, DIHEDRAL_COLUMNS, InternalCoords, wrap_angle
from .schedule import NoiseSchedule

if TYPE_CHECKING:
    from ..core.denoiser import Denoiser
    from ..data.dataset import PocketRepr
    from .batching import Batch

logger = logging.getLogger(__name__)

DEFAULT_LOSS_BETA = 0.1 * math.pi
# calibrated bond angles occupy [-CAL_SPAN, CAL_SPAN]
CAL_SPAN = 0.9 * math.pi
BOND_FLOOR = 1e-3


def _check_wrapped(x: np.ndarray) -> None:
    if not np.all(np.isfinite(x)):
        raise InvariantError("angles contain non-finite values")
    if np.any(x < -math.pi) or np.any(x >= math.pi):
        raise InvariantError("angles must be wrapped into [-pi, pi)")


def _per_example(values: np.ndarray, ndim: int) -> np.ndarray:
    """Reshape per-example coefficients (B,) so they broadcast over (B, ...)."""
    return values.reshape(values.shape + (1,) * (ndim - values.ndim))


def q_sample(
    x0: np.ndarray,
    t: int | np.ndarray,
    schedule: NoiseSchedule,
    noise: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Forward draw at step t (scalar, or one step per leading-axis example). Returns x_t and the
    standard-normal noise used, which is the regression target.
    """
    x0 = np.asarray(x0, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != x0.shape:
        raise ShapeError(f"noise shape {noise.shape} != angle shape {x0.shape}")
    _check_wrapped(x0)
    steps = np.asarray(t, dtype=np.int64)
    if np.any(steps < 1) or np.any(steps > schedule.T):
        raise RangeError(f"diffusion step outside [1, {schedule.T}]")
    ab = schedule.alphabars[steps - 1]
    if steps.ndim:
        ab = _per_example(ab, x0.ndim)
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * schedule.noise_scale * noise
    return np.asarray(wrap_angle(x_t)), noise


# -----------------
# Objective
# -----------------
def wrapped_difference(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """((a - b + pi) mod 2pi) - pi, elementwise."""
    d = np.mod(np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64) + math.pi, 2.0 * math.pi) - math.pi
    return np.where(d >= math.pi, d - 2.0 * math.pi, d)


def _element_mask(mask: np.ndarray | None, shape: tuple[int, ...]) -> np.ndarray:
    if mask is None:
        return np.ones(shape)
    m = np.asarray(mask, dtype=np.float64)
    while m.ndim < len(shape):
        m = m[..., None]
    return np.broadcast_to(m, shape)


def wrapped_smooth_l1(
    eps_true: np.ndarray,
    eps_pred: np.ndarray,
    beta: float = DEFAULT_LOSS_BETA,
    mask: np.ndarray | None = None,
) -> float:
    """Mean smooth-L1 of the wrapped difference over unmasked elements."""
    if beta <= 0:
        raise RangeError(f"loss beta must be > 0, got {beta}")
    a = np.asarray(eps_true, dtype=np.float64)
    b = np.asarray(eps_pred, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"shape mismatch: {a.shape} vs {b.shape}")
    d = wrapped_difference(a, b)
    ad = np.abs(d)
    per = np.where(ad < beta, 0.5 * d * d / beta, ad - 0.5 * beta)
    w = _element_mask(mask, a.shape)
    total = float(w.sum())
    if total == 0:
        raise EmptyDataError("loss over an empty mask")
    return float((per * w).sum() / total)


def wrapped_smooth_l1_tensor(
    eps_true: np.ndarray,
    eps_pred: Tensor,
    beta: float = DEFAULT_LOSS_BETA,
    mask: np.ndarray | None = None,
) -> Tensor:
    if eps_pred.shape != np.shape(eps_true):
        raise ShapeError(f"shape mismatch: {np.shape(eps_true)} vs {eps_pred.shape}")
    per = smooth_l1(wrap(Tensor(eps_true) - eps_pred), beta)
    w = _element_mask(mask, eps_pred.shape)
    total = float(w.sum())
    if total == 0:
        raise EmptyDataError("loss over an empty mask")
    return (per * w).sum() / total


# -----------------
# Calibration
# -----------------
@dataclass(frozen=True)
class AngleCalibration:
    dihedral_means: tuple[float, float, float, float]
    bond_lo: tuple[float, float, float, float]
    bond_hi: tuple[float, float, float, float]

    @classmethod
    def fit(cls, angle_sets: Iterable[np.ndarray], margin: float = 0.05) -> AngleCalibration:
        """Circular means of the dihedral columns and padded min/max of the bond-angle columns."""
        rows = [np.asarray(a, dtype=np.float64).reshape(-1, 8) for a in angle_sets]
        if not rows or sum(len(r) for r in rows) == 0:
            raise EmptyDataError("calibration needs at least one angle row")
        a = np.concatenate(rows)
        dih = a[:, DIHEDRAL_COLUMNS]
        means = np.arctan2(np.sin(dih).mean(axis=0), np.cos(dih).mean(axis=0))
        bond = a[:, BOND_ANGLE_COLUMNS]
        lo = np.maximum(bond.min(axis=0) - margin, BOND_FLOOR)
        hi = np.minimum(bond.max(axis=0) + margin, math.pi - BOND_FLOOR)
        return cls(
            dihedral_means=tuple(float(wrap_angle(x)) for x in means),  # type: ignore[arg-type]
            bond_lo=tuple(float(x) for x in lo),  # type: ignore[arg-type]
            bond_hi=tuple(float(x) for x in hi),  # type: ignore[arg-type]
        )

    @classmethod
    def default(cls) -> AngleCalibration:
        """Uncentred dihedrals and a bond-angle band covering real backbones."""
        return cls((0.0, 0.0, 0.0, 0.0), (1.75,) * 4, (2.25,) * 4)  # type: ignore[arg-type]

    def normalize(self, angles: np.ndarray) -> np.ndarray:
        a = np.asarray(angles, dtype=np.float64)
        out = np.empty_like(a)
        out[..., DIHEDRAL_COLUMNS] = wrap_angle(a[..., DIHEDRAL_COLUMNS] - np.asarray(self.dihedral_means))
        lo, hi = np.asarray(self.bond_lo), np.asarray(self.bond_hi)
        z = -CAL_SPAN + (a[..., BOND_ANGLE_COLUMNS] - lo) / (hi - lo) * (2.0 * CAL_SPAN)
        out[..., BOND_ANGLE_COLUMNS] = np.clip(z, -math.pi, np.nextafter(math.pi, 0.0))
        return out

    def denormalize(self, z: np.ndarray) -> np.ndarray:
        """Diffusion-space angles back to dihedrals in [-pi, pi) and bond angles in (0, pi)."""
        z = np.asarray(z, dtype=np.float64)
        out = np.empty_like(z)
        out[..., DIHEDRAL_COLUMNS] = wrap_angle(z[..., DIHEDRAL_COLUMNS] + np.asarray(self.dihedral_means))
        lo, hi = np.asarray(self.bond_lo), np.asarray(self.bond_hi)
        x = lo + (z[..., BOND_ANGLE_COLUMNS] + CAL_SPAN) / (2.0 * CAL_SPAN) * (hi - lo)
        out[..., BOND_ANGLE_COLUMNS] = np.clip(x, BOND_FLOOR, math.pi - BOND_FLOOR)
        return out

    def to_dict(self) -> dict[str, Any]:
        return {
            "dihedral_means": list(self.dihedral_means),
            "bond_lo": list(self.bond_lo),
            "bond_hi": list(self.bond_hi),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> AngleCalibration:
        return cls(
            dihedral_means=tuple(float(x) for x in d["dihedral_means"]),  # type: ignore[arg-type]
            bond_lo=tuple(float(x) for x in d["bond_lo"]),  # type: ignore[arg-type]
            bond_hi=tuple(float(x) for x in d["bond_hi"]),  # type: ignore[arg-type]
        )


# -----------------
# Training loss
# -----------------
def structure_loss(
    model: Denoiser,
    batch: Batch,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    beta: float = DEFAULT_LOSS_BETA,
    training: bool = True,
) -> Tensor:
    """One uniformly drawn step per example; loss on the predicted noise over real residues."""
    B = len(batch)
    t = rng.integers(1, schedule.T + 1, size=B)
    noise = rng.standard_normal(batch.x0.shape)
    x_t, target = q_sample(batch.x0, t, schedule, noise)
    pred = model(
        x_t,
        t,
        batch.pocket_angles,
        batch.pocket_aa,
        pep_mask=batch.pep_mask,
        pocket_mask=batch.pocket_mask,
        training=training,
        rng=rng,
    )
    return wrapped_smooth_l1_tensor(target, pred, beta, batch.pep_mask)


# -----------------
# Sampling
# -----------------
def p_sample_step(
    x_t: np.ndarray,
    eps_pred: np.ndarray,
    t: int,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
) -> np.ndarray:
    """One ancestral step x_t -> x_{t-1}, wrapping after every arithmetic step."""
    if not np.all(np.isfinite(eps_pred)):
        raise SamplingDivergenceError(f"non-finite noise prediction at step {t}")
    beta = schedule.beta(t)
    alpha = schedule.alpha(t)
    ab = schedule.alphabar(t)
    sigma = schedule.noise_scale
    x = wrap_angle(np.asarray(x_t) - beta / math.sqrt(1.0 - ab) * sigma * np.asarray(eps_pred))
    x = wrap_angle(np.asarray(x) / math.sqrt(alpha))
    if t > 1:
        x = wrap_angle(np.asarray(x) + sigma * math.sqrt(beta) * rng.standard_normal(np.shape(x_t)))
    out = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise SamplingDivergenceError(f"non-finite angles at step {t}")
    return out


def sample_structure(
    model: Denoiser,
    pocket: PocketRepr,
    n: int,
    schedule: NoiseSchedule,
    rng: np.random.Generator,
    calibration: AngleCalibration | None = None,
    request_id: str = "sample",
) -> InternalCoords:
    """n angle rows for a peptide of n + 2 residues, starting from uniform noise at t = T."""
    if n < 1:
        raise RangeError(f"peptide needs at least one angle row, got n={n}")
    cal = calibration or AngleCalibration.default()
    x = rng.uniform(-math.pi, math.pi, size=(1, n, 8))
    x = np.asarray(wrap_angle(x))
    poc_a = pocket.angles[None]
    poc_aa = pocket.aa_onehot[None]
    with no_grad():
        for t in range(schedule.T, 0, -1):
            eps = model(x, [t], poc_a, poc_aa).data
            x = p_sample_step(x, eps, t, schedule, rng)
    logger.debug(f"[{request_id}] sampled {n} angle rows over {schedule.T} steps")
    return InternalCoords(cal.denormalize(x[0]), source_length=n + 2)


__all__ = [
    "DEFAULT_LOSS_BETA",
    "q_sample",
    "wrapped_difference",
    "wrapped_smooth_l1",
    "wrapped_smooth_l1_tensor",
    "AngleCalibration",
    "structure_loss",
    "p_sample_step",
    "sample_structure",
]
