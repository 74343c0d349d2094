"""CNN front-end, transformer encoder blocks, pooled MLP classifier.

Layout: two strided/same-padded Conv1d+BN+ReLU stages take the (B, 2, T)
I/Q input to (B, d_model, T/2), which is transposed to (B, L, d_model) and
run through post-norm residual blocks (attention, then feed-forward). The
sequence is mean-pooled and classified by a two-layer GELU MLP.
"""

from __future__ import annotations

import json
import math
import struct
from collections import OrderedDict
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .attention import AttentionConfig, AttentionParams, multi_head_attention
from .autodiff import BatchNormState, Tensor
from .errors import ConfigError, FormatError, ShapeError

CHECKPOINT_MAGIC = b"AMCK"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    input_len: int = 128
    d_model: int = 64
    conv1_filters: int = 32
    conv1_kernel: int = 7
    conv2_kernel: int = 5
    conv2_stride: int = 2
    n_layers: int = 2
    ffn_dim: int = 256
    n_classes: int = 11
    classifier_hidden: int = 128
    dropout: float = 0.1
    attention: AttentionConfig = field(default_factory=AttentionConfig)

    def __post_init__(self):
        for name in ("input_len", "d_model", "conv1_filters", "conv1_kernel",
                     "conv2_kernel", "conv2_stride", "n_layers", "ffn_dim",
                     "classifier_hidden"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.n_classes < 2:
            raise ConfigError("n_classes must be >= 2")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def seq_len(self) -> int:
        # same-padding on both convs, so only the second stride shortens
        return math.ceil(self.input_len / self.conv2_stride)


def _param_shapes(cfg: ModelConfig) -> "OrderedDict[str, tuple]":
    """Trainable parameter names and shapes in checkpoint order."""
    d, dk = cfg.d_model, cfg.attention.d_head
    shapes: "OrderedDict[str, tuple]" = OrderedDict()
    shapes["conv1.weight"] = (cfg.conv1_filters, 2, cfg.conv1_kernel)
    shapes["conv1.bias"] = (cfg.conv1_filters,)
    shapes["bn1.gamma"] = (cfg.conv1_filters,)
    shapes["bn1.beta"] = (cfg.conv1_filters,)
    shapes["conv2.weight"] = (d, cfg.conv1_filters, cfg.conv2_kernel)
    shapes["conv2.bias"] = (d,)
    shapes["bn2.gamma"] = (d,)
    shapes["bn2.beta"] = (d,)
    for layer in range(cfg.n_layers):
        base = f"layers.{layer}"
        for head in range(cfg.attention.n_heads):
            for proj in ("wq", "wk", "wv"):
                shapes[f"{base}.attn.head{head}.{proj}"] = (d, dk)
                shapes[f"{base}.attn.head{head}.{proj.replace('w', 'b')}"] = (dk,)
        shapes[f"{base}.attn.wo"] = (d, d)
        shapes[f"{base}.attn.bo"] = (d,)
        shapes[f"{base}.ln1.gamma"] = (d,)
        shapes[f"{base}.ln1.beta"] = (d,)
        shapes[f"{base}.ffn.w1"] = (d, cfg.ffn_dim)
        shapes[f"{base}.ffn.b1"] = (cfg.ffn_dim,)
        shapes[f"{base}.ffn.w2"] = (cfg.ffn_dim, d)
        shapes[f"{base}.ffn.b2"] = (d,)
        shapes[f"{base}.ln2.gamma"] = (d,)
        shapes[f"{base}.ln2.beta"] = (d,)
    shapes["classifier.w1"] = (d, cfg.classifier_hidden)
    shapes["classifier.b1"] = (cfg.classifier_hidden,)
    shapes["classifier.w2"] = (cfg.classifier_hidden, cfg.n_classes)
    shapes["classifier.b2"] = (cfg.n_classes,)
    return shapes


def param_count(cfg: ModelConfig) -> int:
    """Number of trainable scalars (BN running stats excluded)."""
    return sum(int(np.prod(s)) for s in _param_shapes(cfg).values())


class ModelParams:
    """Trainable tensors plus batch-norm running statistics."""

    def __init__(self, config: ModelConfig, tensors: "OrderedDict[str, Tensor]",
                 bn1: BatchNormState, bn2: BatchNormState):
        self.config = config
        self.tensors = tensors
        self.bn1 = bn1
        self.bn2 = bn2

    def named(self):
        return self.tensors.items()

    def zero_grad(self):
        for t in self.tensors.values():
            t.zero_grad()

    def copy(self) -> "ModelParams":
        dup = OrderedDict()
        for name, t in self.tensors.items():
            nt = Tensor(t.data.copy(), requires_grad=t.requires_grad)
            dup[name] = nt
        return ModelParams(self.config, dup, self.bn1.copy(), self.bn2.copy())

    def load_from(self, other: "ModelParams"):
        for name, t in self.tensors.items():
            t.data[...] = other.tensors[name].data
        self.bn1.running_mean[...] = other.bn1.running_mean
        self.bn1.running_var[...] = other.bn1.running_var
        self.bn2.running_mean[...] = other.bn2.running_mean
        self.bn2.running_var[...] = other.bn2.running_var

    def attention_view(self, layer: int) -> AttentionParams:
        t = self.tensors
        base = f"layers.{layer}.attn"
        heads = range(self.config.attention.n_heads)
        return AttentionParams(
            wq=[t[f"{base}.head{i}.wq"] for i in heads],
            bq=[t[f"{base}.head{i}.bq"] for i in heads],
            wk=[t[f"{base}.head{i}.wk"] for i in heads],
            bk=[t[f"{base}.head{i}.bk"] for i in heads],
            wv=[t[f"{base}.head{i}.wv"] for i in heads],
            bv=[t[f"{base}.head{i}.bv"] for i in heads],
            wo=t[f"{base}.wo"],
            bo=t[f"{base}.bo"],
        )


def _fan_in(name: str, shape: tuple) -> int:
    if name.startswith("conv"):
        return shape[1] * shape[2]  # C_in * kernel
    return shape[0]  # linear / projection: input features


def init_params(cfg: ModelConfig, seed: int = 0) -> ModelParams:
    """Fan-in-scaled uniform weights, zero biases, unit norm scales."""
    rng = np.random.default_rng(seed)
    tensors: "OrderedDict[str, Tensor]" = OrderedDict()
    for name, shape in _param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "gamma":
            data = np.ones(shape)
        elif leaf == "beta" or len(shape) == 1:
            data = np.zeros(shape)
        else:
            bound = 1.0 / math.sqrt(_fan_in(name, shape))
            data = rng.uniform(-bound, bound, shape)
        tensors[name] = Tensor(data, requires_grad=True)
    return ModelParams(cfg, tensors, BatchNormState(cfg.conv1_filters), BatchNormState(cfg.d_model))


def forward(params: ModelParams, x, mode: str = "train",
            rng: Optional[np.random.Generator] = None) -> Tensor:
    """Full model forward pass, (B, 2, T) -> (B, n_classes) logits."""
    cfg = params.config
    x = ad.as_tensor(x)
    if x.data.ndim != 3 or x.data.shape[1] != 2 or x.data.shape[2] != cfg.input_len:
        raise ShapeError(
            f"model input must be (B, 2, {cfg.input_len}), got {x.data.shape}"
        )
    t = params.tensors
    p = cfg.dropout

    h = ad.conv1d(x, t["conv1.weight"], t["conv1.bias"], stride=1, padding=cfg.conv1_kernel // 2)
    h = ad.relu(ad.batchnorm1d(h, t["bn1.gamma"], t["bn1.beta"], params.bn1, mode))
    h = ad.conv1d(h, t["conv2.weight"], t["conv2.bias"], stride=cfg.conv2_stride,
                  padding=cfg.conv2_kernel // 2)
    h = ad.relu(ad.batchnorm1d(h, t["bn2.gamma"], t["bn2.beta"], params.bn2, mode))
    if h.data.shape[2] != cfg.seq_len:
        raise ShapeError(f"post-CNN length {h.data.shape[2]} != expected {cfg.seq_len}")
    h = ad.transpose(h, (0, 2, 1))  # (B, L, d_model)

    for layer in range(cfg.n_layers):
        attn = multi_head_attention(h, params.attention_view(layer), cfg.attention, mode, rng)
        h = ad.layernorm(ad.add(h, ad.dropout(attn, p, mode, rng)),
                         t[f"layers.{layer}.ln1.gamma"], t[f"layers.{layer}.ln1.beta"])
        ff = ad.linear(h, t[f"layers.{layer}.ffn.w1"], t[f"layers.{layer}.ffn.b1"])
        ff = ad.dropout(ad.gelu(ff), p, mode, rng)
        ff = ad.linear(ff, t[f"layers.{layer}.ffn.w2"], t[f"layers.{layer}.ffn.b2"])
        h = ad.layernorm(ad.add(h, ad.dropout(ff, p, mode, rng)),
                         t[f"layers.{layer}.ln2.gamma"], t[f"layers.{layer}.ln2.beta"])

    pooled = ad.mean_axis(h, axis=1)
    hidden = ad.dropout(ad.gelu(ad.linear(pooled, t["classifier.w1"], t["classifier.b1"])), p, mode, rng)
    return ad.linear(hidden, t["classifier.w2"], t["classifier.b2"])


# ---------------------------------------------------------------------------
# AMCK checkpoint format
#
#   magic "AMCK" | u32 version | u32 config-JSON length | config JSON (UTF-8)
#   | trainable tensors, f64 LE, in _param_shapes order
#   | bn1.running_mean, bn1.running_var, bn2.running_mean, bn2.running_var (f64 LE)
# ---------------------------------------------------------------------------

def _config_to_json(cfg: ModelConfig) -> bytes:
    payload = asdict(cfg)
    return json.dumps(payload, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _config_from_json(raw: bytes) -> ModelConfig:
    payload = json.loads(raw.decode("utf-8"))
    attn = AttentionConfig(**payload.pop("attention"))
    return ModelConfig(attention=attn, **payload)


def save_checkpoint(path, params: ModelParams):
    cfg_json = _config_to_json(params.config)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(cfg_json)))
        fh.write(cfg_json)
        for name in _param_shapes(params.config):
            fh.write(params.tensors[name].data.astype("<f8").tobytes())
        for arr in (params.bn1.running_mean, params.bn1.running_var,
                    params.bn2.running_mean, params.bn2.running_var):
            fh.write(arr.astype("<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:4]!r}")
    version = struct.unpack_from("<I", blob, 4)[0]
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    cfg_len = struct.unpack_from("<I", blob, 8)[0]
    offset = 12 + cfg_len
    cfg = _config_from_json(blob[12:offset])

    tensors: "OrderedDict[str, Tensor]" = OrderedDict()
    for name, shape in _param_shapes(cfg).items():
        n = int(np.prod(shape))
        data = np.frombuffer(blob, dtype="<f8", count=n, offset=offset).reshape(shape)
        tensors[name] = Tensor(data.copy(), requires_grad=True)
        offset += n * 8
    stats = []
    for channels in (cfg.conv1_filters, cfg.conv1_filters, cfg.d_model, cfg.d_model):
        stats.append(np.frombuffer(blob, dtype="<f8", count=channels, offset=offset).copy())
        offset += channels * 8
    if offset != len(blob):
        raise FormatError(f"checkpoint length mismatch: consumed {offset} of {len(blob)} bytes")
    bn1 = BatchNormState(cfg.conv1_filters)
    bn1.running_mean, bn1.running_var = stats[0], stats[1]
    bn2 = BatchNormState(cfg.d_model)
    bn2.running_mean, bn2.running_var = stats[2], stats[3]
    return ModelParams(cfg, tensors, bn1, bn2)


def with_variant(cfg: ModelConfig, variant: str) -> ModelConfig:
    """Same architecture, different attention mask."""
    return replace(cfg, attention=replace(cfg.attention, variant=variant))
