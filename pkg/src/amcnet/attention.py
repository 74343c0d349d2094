"""Multi-head self-attention with baseline, causal, and sparse window masks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ShapeError

VARIANTS = ("baseline", "causal", "sparse")

# Additive sentinel for forbidden positions. Large enough that exp() underflows
# to exactly 0 after max-subtraction, finite so gradients stay NaN-free.
MASK_SENTINEL = -1e9

_mask_cache: dict = {}


@dataclass(frozen=True)
class AttentionConfig:
    variant: str = "baseline"
    d_model: int = 64
    n_heads: int = 4
    window: int = 8  # sparse only: position i attends to |i-j| <= window/2
    attn_dropout: float = 0.1

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ConfigError(f"unknown attention variant {self.variant!r}; expected one of {VARIANTS}")
        if self.d_model <= 0 or self.n_heads <= 0:
            raise ConfigError("d_model and n_heads must be positive")
        if self.d_model % self.n_heads != 0:
            raise ConfigError(f"d_model={self.d_model} not divisible by n_heads={self.n_heads}")
        if self.window < 2 or self.window % 2 != 0:
            raise ConfigError(f"window must be even and >= 2, got {self.window}")
        if not 0.0 <= self.attn_dropout < 1.0:
            raise ConfigError(f"attn_dropout must lie in [0, 1), got {self.attn_dropout}")

    @property
    def d_head(self) -> int:
        return self.d_model // self.n_heads


def build_mask(variant: str, length: int, window: Optional[int] = None) -> np.ndarray:
    """Additive (L, L) mask: 0 where attention is allowed, MASK_SENTINEL elsewhere.

    Cached per (variant, length, window); the returned array is shared and
    must be treated as read-only.
    """
    if variant not in VARIANTS:
        raise ConfigError(f"unknown attention variant {variant!r}")
    if length < 1:
        raise ShapeError(f"mask length must be >= 1, got {length}")
    key = (variant, length, window if variant == "sparse" else None)
    cached = _mask_cache.get(key)
    if cached is not None:
        return cached

    if variant == "baseline":
        allowed = np.ones((length, length), dtype=bool)
    else:
        i = np.arange(length)[:, None]
        j = np.arange(length)[None, :]
        if variant == "causal":
            allowed = j <= i
        else:
            if window is None:
                raise ConfigError("sparse variant requires a window size")
            allowed = np.abs(i - j) <= window // 2
    mask = np.where(allowed, 0.0, MASK_SENTINEL)
    mask.flags.writeable = False
    _mask_cache[key] = mask
    return mask


@dataclass
class AttentionParams:
    """Per-head projection matrices plus the shared output projection."""

    wq: List[Tensor]
    bq: List[Tensor]
    wk: List[Tensor]
    bk: List[Tensor]
    wv: List[Tensor]
    bv: List[Tensor]
    wo: Tensor = field(default=None)
    bo: Tensor = field(default=None)


def _head_scores(h: Tensor, params: AttentionParams, cfg: AttentionConfig, i: int, mask: np.ndarray):
    q = ad.linear(h, params.wq[i], params.bq[i])
    k = ad.linear(h, params.wk[i], params.bk[i])
    scores = ad.mul(ad.matmul(q, ad.swap_last2(k)), 1.0 / math.sqrt(cfg.d_head))
    return ad.add(scores, mask)


def multi_head_attention(
    h: Tensor,
    params: AttentionParams,
    cfg: AttentionConfig,
    mode: str = "train",
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Project, score, mask, softmax, dropout, mix values, concat, project out."""
    h = ad.as_tensor(h)
    if h.data.ndim != 3 or h.data.shape[-1] != cfg.d_model:
        raise ShapeError(f"attention input must be (B, L, {cfg.d_model}), got {h.data.shape}")
    length = h.data.shape[1]
    mask = build_mask(cfg.variant, length, cfg.window)

    heads = []
    for i in range(cfg.n_heads):
        weights = ad.softmax_lastdim(_head_scores(h, params, cfg, i, mask))
        weights = ad.dropout(weights, cfg.attn_dropout, mode, rng)
        v = ad.linear(h, params.wv[i], params.bv[i])
        heads.append(ad.matmul(weights, v))
    return ad.linear(ad.concat(heads, axis=-1), params.wo, params.bo)


def attention_weights(h: Tensor, params: AttentionParams, cfg: AttentionConfig) -> Tensor:
    """Post-softmax, pre-dropout weights, shape (B, n_heads, L, L). Diagnostic only."""
    h = ad.as_tensor(h)
    if h.data.ndim != 3 or h.data.shape[-1] != cfg.d_model:
        raise ShapeError(f"attention input must be (B, L, {cfg.d_model}), got {h.data.shape}")
    length = h.data.shape[1]
    mask = build_mask(cfg.variant, length, cfg.window)
    with ad.no_grad():
        per_head = [
            ad.softmax_lastdim(_head_scores(h, params, cfg, i, mask)).data
            for i in range(cfg.n_heads)
        ]
    return Tensor(np.stack(per_head, axis=1))
