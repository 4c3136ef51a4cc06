# pepforge layers: parameter store and the conditioning blocks
#
# Responsibilities:
# - ModelParams: named parameter tree with gradient slots and (de)serialisation
# - layer_norm, gated adaptive layer norm (residue encoder block), multi-head attention
# - Sinusoidal timestep and position embeddings, feed-forward and dropout helpers
#
# Public API:
# - ModelParams, REBlockParams, AttentionParams, FeedForwardParams, LinearParams
# - layer_norm(h, eps) / gated_adaln(h, cond, p) / re_block(h, cond, p, ...)
# - attention(q_src, kv_src, key_mask, p, return_weights=False)
# - timestep_embed(t, dim, T) / positional_encoding(n, dim)

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass
from typing import Any

import numpy as np

from .errors import InvariantError, RangeError, ShapeError
from .tensor import Tensor, softmax

LN_EPS = 1e-5


class ModelParams:
    """Named float64 parameters, each with a same-shape gradient slot."""

    def __init__(self) -> None:
        self._params: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise InvariantError(f"duplicate parameter name: {name}")
        t = Tensor(value, requires_grad=True, name=name)
        self._params[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self) -> int:
        return len(self._params)

    def items(self) -> list[tuple[str, Tensor]]:
        return list(self._params.items())

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def grads(self) -> dict[str, np.ndarray]:
        """Gradient per parameter; parameters untouched by the last backward read as zeros."""
        return {
            k: (t.grad if t.grad is not None else np.zeros_like(t.data))
            for k, t in self._params.items()
        }

    def num_parameters(self) -> int:
        return int(sum(t.size for t in self._params.values()))

    def to_state(self) -> dict[str, dict[str, Any]]:
        return {
            k: {"shape": list(t.shape), "data": t.data.reshape(-1).tolist()}
            for k, t in self._params.items()
        }

    def load_state(self, state: dict[str, dict[str, Any]]) -> None:
        """Copy values into existing parameters; names and shapes must match exactly."""
        missing = sorted(set(self._params) - set(state))
        extra = sorted(set(state) - set(self._params))
        if missing or extra:
            raise ShapeError(f"parameter names differ (missing={missing[:3]}, unexpected={extra[:3]})")
        for k, t in self._params.items():
            shape = tuple(int(s) for s in state[k]["shape"])
            if shape != t.shape:
                raise ShapeError(f"parameter {k}: shape {shape} != {t.shape}")
            t.data[...] = np.asarray(state[k]["data"], dtype=np.float64).reshape(shape)

    @classmethod
    def from_state(cls, state: dict[str, dict[str, Any]]) -> ModelParams:
        out = cls()
        for k, entry in state.items():
            shape = tuple(int(s) for s in entry["shape"])
            out.add(k, np.asarray(entry["data"], dtype=np.float64).reshape(shape))
        return out


# -----------------
# Parameter groups
# -----------------
@dataclass
class LinearParams:
    w: Tensor
    b: Tensor | None

    @classmethod
    def create(
        cls,
        params: ModelParams,
        prefix: str,
        n_in: int,
        n_out: int,
        rng: np.random.Generator,
        bias: bool = True,
        zero: bool = False,
    ) -> LinearParams:
        bound = 1.0 / math.sqrt(n_in)
        w = np.zeros((n_in, n_out)) if zero else rng.uniform(-bound, bound, size=(n_in, n_out))
        return cls(
            w=params.add(f"{prefix}.w", w),
            b=params.add(f"{prefix}.b", np.zeros(n_out)) if bias else None,
        )

    def __call__(self, x: Tensor | np.ndarray) -> Tensor:
        y = (x if isinstance(x, Tensor) else Tensor(x)) @ self.w
        return y + self.b if self.b is not None else y


@dataclass
class FeedForwardParams:
    up: LinearParams
    down: LinearParams

    @classmethod
    def create(
        cls, params: ModelParams, prefix: str, hidden: int, ff: int, rng: np.random.Generator
    ) -> FeedForwardParams:
        return cls(
            up=LinearParams.create(params, f"{prefix}.up", hidden, ff, rng),
            down=LinearParams.create(params, f"{prefix}.down", ff, hidden, rng),
        )


@dataclass
class REBlockParams:
    """Residue-encoder block: condition -> (Gate, Scale, Shift), then a feed-forward body."""
    cond_proj: LinearParams
    body: FeedForwardParams
    hidden: int
    residual: bool = True

    @classmethod
    def create(
        cls,
        params: ModelParams,
        prefix: str,
        hidden: int,
        cond_dim: int,
        ff: int,
        rng: np.random.Generator,
        residual: bool = True,
    ) -> REBlockParams:
        # small weights and (1, 1, 0) bias: the block starts out as plain layer norm
        w = rng.normal(0.0, 0.02, size=(cond_dim, 3 * hidden))
        b = np.concatenate([np.ones(hidden), np.ones(hidden), np.zeros(hidden)])
        cond_proj = LinearParams(
            w=params.add(f"{prefix}.cond_proj.w", w),
            b=params.add(f"{prefix}.cond_proj.b", b),
        )
        return cls(
            cond_proj=cond_proj,
            body=FeedForwardParams.create(params, f"{prefix}.body", hidden, ff, rng),
            hidden=hidden,
            residual=residual,
        )


@dataclass
class AttentionParams:
    w_q: Tensor
    w_k: Tensor
    w_v: Tensor
    w_o: Tensor
    heads: int

    def __post_init__(self) -> None:
        hidden = self.w_q.shape[1]
        if self.heads < 1 or hidden % self.heads != 0:
            raise ShapeError(f"head count {self.heads} must divide hidden width {hidden}")

    @classmethod
    def create(
        cls,
        params: ModelParams,
        prefix: str,
        hidden: int,
        heads: int,
        rng: np.random.Generator,
        kv_dim: int | None = None,
    ) -> AttentionParams:
        kv_dim = hidden if kv_dim is None else kv_dim
        if heads < 1 or hidden % heads != 0:
            raise ShapeError(f"head count {heads} must divide hidden width {hidden}")

        def _w(n_in: int, n_out: int) -> np.ndarray:
            bound = 1.0 / math.sqrt(n_in)
            return rng.uniform(-bound, bound, size=(n_in, n_out))

        return cls(
            w_q=params.add(f"{prefix}.w_q", _w(hidden, hidden)),
            w_k=params.add(f"{prefix}.w_k", _w(kv_dim, hidden)),
            w_v=params.add(f"{prefix}.w_v", _w(kv_dim, hidden)),
            w_o=params.add(f"{prefix}.w_o", _w(hidden, hidden)),
            heads=heads,
        )


# -----------------
# Normalisation and conditioning
# -----------------
def layer_norm(h: Tensor, eps: float = LN_EPS) -> Tensor:
    """(h - mean) / sqrt(population variance + eps) over the last axis."""
    if h.shape[-1] < 2:
        raise ShapeError(f"layer_norm needs last-axis width >= 2, got {h.shape[-1]}")
    centred = h - h.mean(axis=-1, keepdims=True)
    var = (centred * centred).mean(axis=-1, keepdims=True)
    return centred / (var + eps).sqrt()


def gated_adaln(h: Tensor, cond: Tensor, p: REBlockParams) -> Tensor:
    """Gate * (Scale * LN(h) + Shift), with (Gate, Scale, Shift) projected from cond."""
    if h.shape[:-1] != cond.shape[:-1]:
        raise ShapeError(f"gated_adaln row mismatch: h {h.shape} vs cond {cond.shape}")
    if h.shape[-1] != p.hidden:
        raise ShapeError(f"gated_adaln width {h.shape[-1]} != block width {p.hidden}")
    gss = p.cond_proj(cond)
    H = p.hidden
    gate = gss[..., :H]
    scale = gss[..., H : 2 * H]
    shift = gss[..., 2 * H :]
    return gate * (scale * layer_norm(h) + shift)


def feed_forward(
    x: Tensor,
    p: FeedForwardParams,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Tensor:
    hidden = p.up(x).silu()
    hidden = apply_dropout(hidden, dropout, rng, training)
    return p.down(hidden)


def re_block(
    h: Tensor,
    cond: Tensor,
    p: REBlockParams,
    dropout: float = 0.0,
    rng: np.random.Generator | None = None,
    training: bool = False,
) -> Tensor:
    out = feed_forward(gated_adaln(h, cond, p), p.body, dropout, rng, training)
    return h + out if p.residual else out


def apply_dropout(
    x: Tensor, rate: float, rng: np.random.Generator | None, training: bool
) -> Tensor:
    if not training or rate <= 0.0:
        return x
    if rng is None:
        raise InvariantError("dropout during training needs an rng")
    keep = (rng.random(x.shape) >= rate).astype(np.float64) / (1.0 - rate)
    return x * keep


# -----------------
# Attention
# -----------------
def attention(
    q_src: Tensor,
    kv_src: Tensor,
    key_mask: np.ndarray | None,
    p: AttentionParams,
    return_weights: bool = False,
) -> Tensor | tuple[Tensor, np.ndarray]:
    """
    Multi-head scaled dot-product attention.

    q_src: (n, H) or (B, n, H); kv_src: (m, D) or (B, m, D); key_mask: (m,) or (B, m),
    True where a key may be attended. Self-attention is q_src is kv_src.
    """
    unbatched = q_src.ndim == 2
    if unbatched:
        q_src = q_src.reshape(1, *q_src.shape)
        kv_src = kv_src.reshape(1, *kv_src.shape)
        if key_mask is not None:
            key_mask = np.asarray(key_mask, dtype=bool)[None, :]
    if q_src.ndim != 3 or kv_src.ndim != 3 or q_src.shape[0] != kv_src.shape[0]:
        raise ShapeError(f"attention shapes incompatible: {q_src.shape} vs {kv_src.shape}")
    B, n, _ = q_src.shape
    m = kv_src.shape[1]
    heads = p.heads
    hidden = p.w_q.shape[1]
    dh = hidden // heads

    def _split(x: Tensor, length: int) -> Tensor:
        return x.reshape(B, length, heads, dh).transpose(0, 2, 1, 3)

    q = _split(q_src @ p.w_q, n)
    k = _split(kv_src @ p.w_k, m)
    v = _split(kv_src @ p.w_v, m)
    scores = (q @ k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
    mask = None
    if key_mask is not None:
        km = np.asarray(key_mask, dtype=bool)
        if km.shape != (B, m):
            raise ShapeError(f"key_mask shape {km.shape} != {(B, m)}")
        mask = km[:, None, None, :]
    weights = softmax(scores, axis=-1, mask=mask)
    ctx = (weights @ v).transpose(0, 2, 1, 3).reshape(B, n, hidden)
    out = ctx @ p.w_o
    if unbatched:
        out = out.reshape(n, hidden)
    if return_weights:
        w = weights.data[0] if unbatched else weights.data
        return out, w.copy()
    return out


# -----------------
# Embeddings
# -----------------
def _sinusoid(positions: np.ndarray, dim: int) -> np.ndarray:
    if dim < 2 or dim % 2 != 0:
        raise ShapeError(f"sinusoidal embedding width must be even and >= 2, got {dim}")
    k = np.arange(dim // 2, dtype=np.float64)
    freqs = 1.0 / np.power(10000.0, 2.0 * k / dim)
    phase = positions[:, None] * freqs[None, :]
    out = np.empty((len(positions), dim))
    out[:, 0::2] = np.sin(phase)
    out[:, 1::2] = np.cos(phase)
    return out


def timestep_embed(t: int, dim: int, T: int) -> np.ndarray:
    """Interleaved [sin, cos] embedding of a step index 0 <= t < T."""
    if not (0 <= int(t) < int(T)):
        raise RangeError(f"timestep {t} outside [0, {T})")
    return _sinusoid(np.array([float(t)]), dim)[0]


def positional_encoding(n: int, dim: int) -> np.ndarray:
    """(n, dim) sinusoidal encodings of residue positions 0..n-1."""
    return _sinusoid(np.arange(n, dtype=np.float64), dim)


__all__ = [
    "LN_EPS",
    "ModelParams",
    "LinearParams",
    "FeedForwardParams",
    "REBlockParams",
    "AttentionParams",
    "layer_norm",
    "gated_adaln",
    "feed_forward",
    "re_block",
    "apply_dropout",
    "attention",
    "timestep_embed",
    "positional_encoding",
]
