"""AdamW training loop with cosine annealing and patience-based early stopping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import autodiff as ad
from .data import augment, frames_to_batch, normalize_instance
from .errors import ConfigError, DataError, DivergenceError, OptimizerStateError
from .model import ModelConfig, ModelParams, forward, init_params


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    weight_decay: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 128
    max_epochs: int = 100
    patience: int = 15
    seed: int = 0
    t_max: Optional[int] = None  # cosine period; defaults to max_epochs
    augment_prob: float = 0.3
    augment_std: float = 0.02

    def __post_init__(self):
        if self.patience < 1:
            raise ConfigError("patience must be >= 1")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be >= 2 (batchnorm needs statistics)")
        if self.max_epochs < 1:
            raise ConfigError("max_epochs must be >= 1")

    @property
    def cosine_t_max(self) -> int:
        return self.max_epochs if self.t_max is None else self.t_max


class AdamWState:
    """First/second moment buffers plus the shared step counter."""

    def __init__(self, params: ModelParams):
        self.m: Dict[str, np.ndarray] = {n: np.zeros_like(t.data) for n, t in params.named()}
        self.v: Dict[str, np.ndarray] = {n: np.zeros_like(t.data) for n, t in params.named()}
        self.step = 0


def adamw_step(params: ModelParams, state: AdamWState, lr: float, cfg: TrainConfig):
    """One decoupled-weight-decay Adam update over all trainable tensors.

    Decay touches only matrices/kernels (ndim >= 2); biases and norm scales
    follow the pure Adam update.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1 ** t
    bc2 = 1.0 - cfg.beta2 ** t
    for name, tensor in params.named():
        if tensor.grad is None:
            raise OptimizerStateError(f"parameter {name} has no gradient")
        g = tensor.grad
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * g * g
        if tensor.data.ndim >= 2 and cfg.weight_decay > 0.0:
            tensor.data -= lr * cfg.weight_decay * tensor.data
        tensor.data -= lr * (m / bc1) / (np.sqrt(v / bc2) + cfg.eps)


def cosine_lr(epoch: int, cfg: TrainConfig) -> float:
    """lr decays from lr0 at epoch 0 to 0 at t_max."""
    return 0.5 * cfg.lr * (1.0 + math.cos(math.pi * epoch / cfg.cosine_t_max))


@dataclass
class EpochStats:
    epoch: int
    train_loss: float
    val_acc: float
    lr: float


@dataclass
class TrainResult:
    params: ModelParams  # best-validation snapshot
    history: List[EpochStats] = field(default_factory=list)
    best_epoch: int = 0
    best_val_acc: float = 0.0
    last_params: Optional[ModelParams] = None  # state at the final epoch


def _accuracy(params: ModelParams, frames, batch_size: int) -> float:
    correct = 0
    with ad.no_grad():
        for lo in range(0, len(frames), batch_size):
            chunk = [normalize_instance(f) for f in frames[lo : lo + batch_size]]
            x, y = frames_to_batch(chunk)
            logits = forward(params, x, mode="eval")
            correct += int((logits.data.argmax(axis=1) == y).sum())
    return correct / len(frames)


def train(model_cfg: ModelConfig, train_cfg: TrainConfig,
          train_frames: Sequence, val_frames: Sequence) -> TrainResult:
    """Algorithm: shuffled mini-batches of normalize->augment->forward->CE->
    backward->AdamW, per-epoch validation, strict-improvement early stopping."""
    if not train_frames or not val_frames:
        raise DataError("train() requires non-empty train and validation splits")

    params = init_params(model_cfg, seed=train_cfg.seed)
    opt = AdamWState(params)
    result = TrainResult(params=params.copy())
    best_val = -1.0
    since_improve = 0

    for epoch in range(train_cfg.max_epochs):
        lr = cosine_lr(epoch, train_cfg)
        shuffle_rng = np.random.default_rng((train_cfg.seed, epoch))
        order = shuffle_rng.permutation(len(train_frames))
        losses = []
        for batch_idx, lo in enumerate(range(0, len(order), train_cfg.batch_size)):
            batch_rng = np.random.default_rng((train_cfg.seed, epoch, batch_idx))
            chunk = [
                augment(normalize_instance(train_frames[i]), batch_rng,
                        train_cfg.augment_prob, train_cfg.augment_std)
                for i in order[lo : lo + train_cfg.batch_size]
            ]
            x, y = frames_to_batch(chunk)
            logits = forward(params, x, mode="train", rng=batch_rng)
            loss = ad.cross_entropy(logits, y)
            if not np.isfinite(loss.data):
                raise DivergenceError(f"non-finite loss at epoch {epoch}, batch {batch_idx}")
            params.zero_grad()
            ad.backward(loss)
            adamw_step(params, opt, lr, train_cfg)
            losses.append(float(loss.data))

        val_acc = _accuracy(params, val_frames, train_cfg.batch_size)
        result.history.append(EpochStats(epoch, float(np.mean(losses)), val_acc, lr))

        if val_acc > best_val:
            best_val = val_acc
            since_improve = 0
            result.params = params.copy()
            result.best_epoch = epoch
            result.best_val_acc = val_acc
        else:
            since_improve += 1
            if since_improve >= train_cfg.patience:
                break
    result.last_params = params
    return result


def write_history(path, history: Sequence[EpochStats]):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,train_loss,val_acc,lr\n")
        for row in history:
            fh.write(f"{row.epoch},{row.train_loss:.12g},{row.val_acc:.12g},{row.lr:.12g}\n")
