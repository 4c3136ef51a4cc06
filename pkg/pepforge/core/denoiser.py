# pepforge denoiser: the twin pocket-conditioned networks
#
# One class serves both models:
# - kind="structure": noisy peptide angles (n x 8) -> predicted noise (n x 8)
# - kind="sequence":  noisy peptide residue types (n x 20) + peptide angles -> a0 logits (n x 20)
#
# Pipeline: residue-encoder (gated adaptive LN) for peptide and pocket, then per block
# pre-LN self-attention over the peptide, cross-attention into the encoded pocket and a
# feed-forward layer, each residual; final LN and linear output projection.
#
# Structure: the peptide path encodes noisy angles conditioned on the timestep only, the pocket
# path encodes pocket angles conditioned on pocket residue types. Sequence: the peptide path
# encodes noisy types conditioned on the timestep plus peptide angles, the pocket path encodes
# pocket types conditioned on pocket angles. Peptide residues get sinusoidal positions, pocket
# residues none, so pocket conditioning is order-free.

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from ..utils.config import ModelConfig
from ..utils.residues import NUM_AA
from .errors import ConfigError, ShapeError
from .layers import (
    AttentionParams,
    FeedForwardParams,
    LinearParams,
    ModelParams,
    REBlockParams,
    attention,
    feed_forward,
    layer_norm,
    positional_encoding,
    re_block,
    timestep_embed,
)
from .tensor import Tensor

logger = logging.getLogger(__name__)

KINDS = ("structure", "sequence")
NUM_ANGLES = 8


def angle_features(angles: np.ndarray, mode: str = "sincos") -> np.ndarray:
    """(..., 8) radians -> (..., 16) [sin | cos] features, or the raw angles."""
    if mode == "raw":
        return np.asarray(angles, dtype=np.float64)
    if mode != "sincos":
        raise ConfigError(f"unknown angle feature mode {mode!r}")
    a = np.asarray(angles, dtype=np.float64)
    return np.concatenate([np.sin(a), np.cos(a)], axis=-1)


@dataclass
class _Block:
    self_attn: AttentionParams
    cross_attn: AttentionParams
    ffn: FeedForwardParams


class Denoiser:
    """Pocket-conditioned transformer denoiser; parameters live in self.params."""

    def __init__(self, kind: str, cfg: ModelConfig, T: int, seed: int = 0) -> None:
        if kind not in KINDS:
            raise ConfigError(f"denoiser kind must be one of {KINDS}, got {kind!r}")
        if cfg.hidden % cfg.heads != 0:
            raise ConfigError(f"heads ({cfg.heads}) must divide hidden ({cfg.hidden})")
        self.kind = kind
        self.cfg = cfg
        self.T = int(T)
        self.params = ModelParams()
        rng = np.random.default_rng(seed)
        H = cfg.hidden
        feat = 2 * NUM_ANGLES if cfg.angle_features == "sincos" else NUM_ANGLES
        self.feat_dim = feat
        self.out_dim = NUM_ANGLES if kind == "structure" else NUM_AA
        P = self.params

        pep_in = feat if kind == "structure" else NUM_AA
        poc_in = feat if kind == "structure" else NUM_AA
        poc_cond = NUM_AA if kind == "structure" else feat

        self.pep_in = LinearParams.create(P, "pep.in", pep_in, H, rng)
        self.time_proj = LinearParams.create(P, "pep.time", H, H, rng)
        self.pep_cond = LinearParams.create(P, "pep.cond", feat, H, rng) if kind == "sequence" else None
        self.pep_re = REBlockParams.create(P, "pep.re", H, H, cfg.ff, rng, residual=cfg.residual)

        self.poc_in = LinearParams.create(P, "poc.in", poc_in, H, rng)
        self.poc_cond = LinearParams.create(P, "poc.cond", poc_cond, H, rng)
        self.poc_re = REBlockParams.create(P, "poc.re", H, H, cfg.ff, rng, residual=cfg.residual)

        self.blocks: list[_Block] = []
        for b in range(cfg.blocks):
            self.blocks.append(
                _Block(
                    self_attn=AttentionParams.create(P, f"block{b}.self", H, cfg.heads, rng),
                    cross_attn=AttentionParams.create(P, f"block{b}.cross", H, cfg.heads, rng),
                    ffn=FeedForwardParams.create(P, f"block{b}.ffn", H, cfg.ff, rng),
                )
            )
        self.out = LinearParams.create(P, "out", H, self.out_dim, rng, zero=cfg.zero_init_output)
        logger.debug(f"[{kind}] denoiser built: {P.num_parameters()} parameters")

    # -----------------
    # Forward
    # -----------------
    def forward(
        self,
        noisy: np.ndarray,
        t: int | Sequence[int] | np.ndarray,
        pocket_angles: np.ndarray,
        pocket_aa: np.ndarray,
        pep_cond: np.ndarray | None = None,
        pep_mask: np.ndarray | None = None,
        pocket_mask: np.ndarray | None = None,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        """
        Batched forward. noisy: (B, n, 8|20); t: diffusion steps in [1, T], one per example;
        pocket_angles: (B, m, 8); pocket_aa: (B, m, 20); pep_cond: (B, n, 8) peptide angles
        for the sequence model. Masks are boolean (B, n) / (B, m), True for real residues.
        Returns (B, n, 8|20).
        """
        noisy = np.asarray(noisy, dtype=np.float64)
        if noisy.ndim != 3:
            raise ShapeError(f"noisy input must be (B, n, F), got {noisy.shape}")
        B, n, F = noisy.shape
        expect = NUM_ANGLES if self.kind == "structure" else NUM_AA
        if F != expect:
            raise ShapeError(f"{self.kind} denoiser expects {expect} input features, got {F}")
        pocket_angles = np.asarray(pocket_angles, dtype=np.float64)
        pocket_aa = np.asarray(pocket_aa, dtype=np.float64)
        if pocket_angles.ndim != 3 or pocket_angles.shape[0] != B or pocket_angles.shape[2] != NUM_ANGLES:
            raise ShapeError(f"pocket angles must be (B, m, 8), got {pocket_angles.shape}")
        if pocket_aa.shape != pocket_angles.shape[:2] + (NUM_AA,):
            raise ShapeError(f"pocket residue types must be (B, m, 20), got {pocket_aa.shape}")
        if self.kind == "sequence":
            if pep_cond is None:
                raise ShapeError("sequence denoiser needs peptide angles as conditioning")
            pep_cond = np.asarray(pep_cond, dtype=np.float64)
            if pep_cond.shape != (B, n, NUM_ANGLES):
                raise ShapeError(f"peptide conditioning must be (B, n, 8), got {pep_cond.shape}")
        m = pocket_angles.shape[1]
        if pep_mask is None:
            pep_mask = np.ones((B, n), dtype=bool)
        if pocket_mask is None:
            pocket_mask = np.ones((B, m), dtype=bool)

        steps = np.broadcast_to(np.asarray(t, dtype=np.int64).reshape(-1), (B,))
        H = self.cfg.hidden
        temb = np.stack([timestep_embed(int(s) - 1, H, self.T) for s in steps])[:, None, :]
        ones_n = np.ones((1, n, 1))
        mode = self.cfg.angle_features
        drop = self.cfg.dropout

        # peptide residue encoding
        if self.kind == "structure":
            h = self.pep_in(angle_features(noisy, mode))
            cond = self.time_proj(temb) * ones_n
        else:
            if self.pep_cond is None:
                raise ConfigError("sequence denoiser built without a peptide-conditioning layer")
            h = self.pep_in(noisy)
            cond = self.pep_cond(angle_features(pep_cond, mode)) + self.time_proj(temb)
        h = h + positional_encoding(n, H)[None, :, :]
        h = re_block(h, cond, self.pep_re, drop, rng, training)

        # pocket residue encoding
        if self.kind == "structure":
            ph = self.poc_in(angle_features(pocket_angles, mode))
            pc = self.poc_cond(pocket_aa)
        else:
            ph = self.poc_in(pocket_aa)
            pc = self.poc_cond(angle_features(pocket_angles, mode))
        poc = re_block(ph, pc, self.poc_re, drop, rng, training)

        for blk in self.blocks:
            x = layer_norm(h)
            h = h + attention(x, x, pep_mask, blk.self_attn)
            h = h + attention(layer_norm(h), poc, pocket_mask, blk.cross_attn)
            h = h + feed_forward(layer_norm(h), blk.ffn, drop, rng, training)
        return self.out(layer_norm(h))

    __call__ = forward


__all__ = ["KINDS", "NUM_ANGLES", "angle_features", "Denoiser"]
