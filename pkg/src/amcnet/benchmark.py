"""Forward-only attention kernels and wall-clock latency measurement.

The training path always computes dense masked scores; the kernels here
skip the out-of-mask work entirely, which is where the windowed variant's
O(L*w) and the causal variant's ~50% score-stage savings actually appear.
Each kernel must agree with masked-dense attention to 1e-9.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from . import autodiff as ad
from .attention import build_mask
from .errors import ConfigError
from .model import ModelConfig, ModelParams, forward, init_params, with_variant

TIMER_RESOLUTION_S = time.get_clock_info("perf_counter").resolution


@dataclass(frozen=True)
class BenchConfig:
    lengths: tuple = (64, 128, 256, 512)
    warmup: int = 50
    iterations: int = 500
    batch_size: int = 1

    def __post_init__(self):
        if self.warmup < 1:
            raise ConfigError("warmup must be >= 1")
        if self.iterations < 100:
            raise ConfigError("iterations must be >= 100")


@dataclass
class LatencyRow:
    variant: str
    kernel: str
    length: int
    mean_us: float
    std_us: float
    timer_warning: bool = False


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    m = scores.max(axis=-1, keepdims=True)
    e = np.exp(scores - m)
    return e / e.sum(axis=-1, keepdims=True)


def dense_attention_forward(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                            mask: Optional[np.ndarray] = None) -> np.ndarray:
    """Reference O(L^2) path: full score matrix, additive mask, softmax, mix."""
    scores = q @ k.T / math.sqrt(q.shape[-1])
    if mask is not None:
        scores = scores + mask
    return _softmax_rows(scores) @ v


def banded_attention_forward(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                             window: int) -> np.ndarray:
    """Windowed attention computing only the <= window+1 in-band scores per row.

    Falls back to the dense masked path when the window covers the whole
    sequence (window >= 2L), where banding saves nothing.
    """
    length, d = q.shape
    if window >= 2 * length:
        return dense_attention_forward(q, k, v, build_mask("sparse", length, window))
    half = window // 2
    offsets = np.arange(-half, half + 1)
    idx = np.arange(length)[:, None] + offsets[None, :]
    valid = (idx >= 0) & (idx < length)
    idx = np.clip(idx, 0, length - 1)

    scores = np.einsum("ld,lwd->lw", q, k[idx], optimize=True) / math.sqrt(d)
    scores = np.where(valid, scores, -np.inf)
    weights = _softmax_rows(scores)
    return np.einsum("lw,lwd->ld", weights, v[idx], optimize=True)


def causal_attention_forward(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                             block: int = 64) -> np.ndarray:
    """Triangular attention computing only the j <= i scores, in row blocks."""
    length, d = q.shape
    scale = 1.0 / math.sqrt(d)
    out = np.empty_like(q)
    for lo in range(0, length, block):
        hi = min(lo + block, length)
        scores = (q[lo:hi] @ k[:hi].T) * scale
        rows = np.arange(lo, hi)[:, None]
        cols = np.arange(hi)[None, :]
        scores = np.where(cols <= rows, scores, -np.inf)
        out[lo:hi] = _softmax_rows(scores) @ v[:hi]
    return out


def specialized_forward(variant: str, q, k, v, window: int = 8) -> np.ndarray:
    if variant == "sparse":
        return banded_attention_forward(q, k, v, window)
    if variant == "causal":
        return causal_attention_forward(q, k, v)
    return dense_attention_forward(q, k, v)


def masked_dense_forward(variant: str, q, k, v, window: int = 8) -> np.ndarray:
    mask = None if variant == "baseline" else build_mask(variant, q.shape[0], window)
    return dense_attention_forward(q, k, v, mask)


def score_stage_flops(variant: str, length: int, d: int, window: int = 8) -> int:
    """Multiply counts of the QK^T stage (the complexity claims live here)."""
    if variant == "sparse" and window < 2 * length:
        return length * (window + 1) * d
    if variant == "causal":
        return length * (length + 1) // 2 * d
    return length * length * d


def time_callable(fn: Callable[[], object], warmup: int, iterations: int):
    """Mean/std wall time in microseconds on the monotonic clock.

    BLAS is pinned to one thread for the duration: multi-threaded kernels on a
    throttled box produce multi-millisecond sync stalls that swamp the signal.
    """
    with threadpool_limits(limits=1):
        for _ in range(warmup):
            fn()
        samples = np.empty(iterations)
        for i in range(iterations):
            start = time.perf_counter()
            fn()
            samples[i] = time.perf_counter() - start
    return float(samples.mean() * 1e6), float(samples.std() * 1e6)


def bench_attention(variant: str, kernel: str, lengths: Sequence[int],
                    d_head: int = 16, window: int = 8,
                    warmup: int = 5, iterations: int = 100,
                    seed: int = 0) -> List[LatencyRow]:
    """Latency of one attention head's forward at each sequence length."""
    rows = []
    rng = np.random.default_rng(seed)
    for length in lengths:
        q = rng.standard_normal((length, d_head))
        k = rng.standard_normal((length, d_head))
        v = rng.standard_normal((length, d_head))
        if kernel == "specialized":
            fn = lambda: specialized_forward(variant, q, k, v, window)
        elif kernel == "dense":
            fn = lambda: masked_dense_forward(variant, q, k, v, window)
        else:
            raise ConfigError(f"unknown kernel {kernel!r}; expected dense or specialized")
        mean_us, std_us = time_callable(fn, warmup, iterations)
        rows.append(LatencyRow(variant, kernel, length, mean_us, std_us,
                               timer_warning=TIMER_RESOLUTION_S > 1e-6))
    return rows


def bench_model(base_config: ModelConfig, cfg: BenchConfig, variant: str = "baseline",
                params: Optional[ModelParams] = None, seed: int = 0) -> List[LatencyRow]:
    """Full eval-mode forward latency per input length, batch 1, single thread."""
    rows = []
    for length in cfg.lengths:
        model_cfg = with_variant(base_config, variant)
        if params is not None and params.config.input_len == length:
            p = params
        else:
            from dataclasses import replace
            p = init_params(replace(model_cfg, input_len=length), seed=seed)
        x = np.random.default_rng(seed).standard_normal((cfg.batch_size, 2, length))
        with ad.no_grad():
            fn = lambda: forward(p, x, mode="eval")
            mean_us, std_us = time_callable(fn, cfg.warmup, cfg.iterations)
        rows.append(LatencyRow(variant, "dense", length, mean_us, std_us,
                               timer_warning=TIMER_RESOLUTION_S > 1e-6))
    return rows


def loglog_slope(lengths: Sequence[int], latencies_us: Sequence[float]) -> float:
    """Least-squares slope of log(latency) against log(length)."""
    return float(np.polyfit(np.log(np.asarray(lengths, dtype=float)),
                            np.log(np.asarray(latencies_us, dtype=float)), 1)[0])


def write_latency_csv(path, rows: Sequence[LatencyRow]):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("variant,kernel,length,mean_us,std_us\n")
        for r in rows:
            fh.write(f"{r.variant},{r.kernel},{r.length},{r.mean_us:.3f},{r.std_us:.3f}\n")
