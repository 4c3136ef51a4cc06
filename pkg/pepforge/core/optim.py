# Bias-corrected Adam for ModelParams.

from __future__ import annotations

import numpy as np

from .errors import RangeError, TrainingDivergenceError
from .layers import ModelParams


def adam_step(
    param: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    lr: float,
    betas: tuple[float, float],
    eps: float,
    step: int,
) -> None:
    """One in-place Adam update of `param` (and its moment buffers m, v). step counts from 1."""
    if step < 1:
        raise RangeError(f"adam step must be >= 1, got {step}")
    if not np.all(np.isfinite(grad)):
        raise TrainingDivergenceError("non-finite gradient")
    b1, b2 = betas
    m *= b1
    m += (1.0 - b1) * grad
    v *= b2
    v += (1.0 - b2) * grad * grad
    m_hat = m / (1.0 - b1**step)
    v_hat = v / (1.0 - b2**step)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


class Adam:
    def __init__(
        self,
        params: ModelParams,
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.lr = lr
        self.betas = (float(betas[0]), float(betas[1]))
        self.eps = eps
        self.step_count = 0
        self.m = {k: np.zeros_like(t.data) for k, t in params.items()}
        self.v = {k: np.zeros_like(t.data) for k, t in params.items()}

    def step(self) -> None:
        grads = self.params.grads()
        # check everything first so a divergent step leaves parameters untouched
        for k, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise TrainingDivergenceError(f"non-finite gradient for parameter {k}")
        self.step_count += 1
        for k, t in self.params.items():
            adam_step(t.data, grads[k], self.m[k], self.v[k], self.lr, self.betas, self.eps, self.step_count)


__all__ = ["adam_step", "Adam"]
