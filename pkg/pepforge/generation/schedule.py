# Noise schedule shared by the structure and sequence diffusion models.
#
# Steps are indexed t = 1..T; beta(t), alpha(t), alphabar(t) accept that range only.

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np

from ..core.errors import ConfigError, RangeError

BETA_MIN = 1e-5
BETA_MAX = 0.999
COSINE_OFFSET = 0.008


@dataclass(frozen=True, eq=False)
class NoiseSchedule:
    T: int
    betas: np.ndarray
    alphas: np.ndarray
    alphabars: np.ndarray
    kind: str = "cosine"
    noise_scale: float = math.pi

    def _check(self, t: int) -> int:
        if not (1 <= int(t) <= self.T):
            raise RangeError(f"diffusion step {t} outside [1, {self.T}]")
        return int(t) - 1

    def beta(self, t: int) -> float:
        return float(self.betas[self._check(t)])

    def alpha(self, t: int) -> float:
        return float(self.alphas[self._check(t)])

    def alphabar(self, t: int) -> float:
        return float(self.alphabars[self._check(t)])

    def to_dict(self) -> dict[str, Any]:
        return {"T": self.T, "kind": self.kind, "noise_scale": self.noise_scale}


def cosine_schedule(T: int, noise_scale: float = math.pi, s: float = COSINE_OFFSET) -> NoiseSchedule:
    """Cosine alphabar schedule with per-step betas clipped to [1e-5, 0.999]."""
    if not isinstance(T, (int, np.integer)) or T < 2:
        raise ConfigError(f"schedule needs T >= 2, got {T!r}")
    if not (noise_scale > 0 and math.isfinite(noise_scale)):
        raise ConfigError(f"noise_scale must be > 0, got {noise_scale}")
    steps = np.arange(T + 1, dtype=np.float64)
    f = np.cos(((steps / T) + s) / (1.0 + s) * math.pi / 2.0) ** 2
    ab = f / f[0]
    betas = np.clip(1.0 - ab[1:] / ab[:-1], BETA_MIN, BETA_MAX)
    alphas = 1.0 - betas
    alphabars = np.cumprod(alphas)
    for arr in (betas, alphas, alphabars):
        arr.setflags(write=False)
    return NoiseSchedule(
        T=int(T),
        betas=betas,
        alphas=alphas,
        alphabars=alphabars,
        kind="cosine",
        noise_scale=float(noise_scale),
    )


def build_schedule(kind: str, T: int, noise_scale: float = math.pi) -> NoiseSchedule:
    if kind != "cosine":
        raise ConfigError(f"unknown schedule kind {kind!r}")
    return cosine_schedule(T, noise_scale=noise_scale)


__all__ = ["NoiseSchedule", "cosine_schedule", "build_schedule", "BETA_MIN", "BETA_MAX"]
