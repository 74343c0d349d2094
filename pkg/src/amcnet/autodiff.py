"""Dense float64 tensors with reverse-mode automatic differentiation.

Every forward op that touches a grad-requiring tensor records a backward
closure on the output node; ``backward(loss)`` replays the closures in
reverse topological order. Leaf gradients accumulate across calls until
zeroed; interior nodes are single-use (a second traversal raises
GraphConsumedError).
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import GraphConsumedError, MaskedRowError, ShapeError

# Scores at or below this are treated as mask sentinels by softmax_lastdim.
# The attention mask sentinel is -1e9; anything past half of it cannot be a
# real (scaled) attention score.
MASK_THRESHOLD = -5e8

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (benchmark / eval paths)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """N-dimensional float64 array participating in reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_spent")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward_fn = None
        self._spent = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else _scalar_error(self)

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    # operator sugar over the functional ops below
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return add(self, mul(other, -1.0))

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def backward(self):
        backward(self)


def _scalar_error(t):
    raise ShapeError(f"item() requires a scalar tensor, got shape {t.data.shape}")


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(data: np.ndarray, parents: Sequence[Tensor], backward_fn) -> Tensor:
    """Wrap an ndarray, recording the backward closure when tracking is on."""
    out = Tensor(data)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward_fn = backward_fn
    return out


def _accumulate(t: Tensor, g: np.ndarray):
    if not t.requires_grad:
        return
    if t.grad is None:
        t.grad = np.array(g, dtype=np.float64)
    else:
        t.grad += g


def _reduce_to_shape(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum out axes that numpy broadcasting introduced or expanded."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def backward(loss: Tensor):
    """Populate .grad on every grad-requiring leaf reachable from ``loss``."""
    if loss.data.size != 1:
        raise ShapeError(f"backward() requires a scalar loss, got shape {loss.data.shape}")
    if loss._spent:
        raise GraphConsumedError("backward() called on an already-consumed graph")
    if not loss.requires_grad:
        raise GraphConsumedError("loss does not require grad; no graph was recorded")

    # iterative post-order DFS (graph depth can exceed recursion comfort)
    topo: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, processed = stack.pop()
        if processed:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in visited:
                stack.append((p, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(topo):
        if node._backward_fn is not None:
            node._backward_fn()
        if node._parents:
            # interior node: one-shot, free the closure
            node._spent = True
            node._backward_fn = None
            node._parents = ()


# ---------------------------------------------------------------------------
# elementwise / structural ops
# ---------------------------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data + b.data

    def _bw():
        _accumulate(a, _reduce_to_shape(out.grad, a.data.shape))
        _accumulate(b, _reduce_to_shape(out.grad, b.data.shape))

    out = _make(out_data, (a, b), _bw)
    return out


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out_data = a.data * b.data

    def _bw():
        _accumulate(a, _reduce_to_shape(out.grad * b.data, a.data.shape))
        _accumulate(b, _reduce_to_shape(out.grad * a.data, b.data.shape))

    out = _make(out_data, (a, b), _bw)
    return out


def reshape(x, shape) -> Tensor:
    x = as_tensor(x)
    out_data = x.data.reshape(shape)

    def _bw():
        _accumulate(x, out.grad.reshape(x.data.shape))

    out = _make(out_data, (x,), _bw)
    return out


def transpose(x, axes) -> Tensor:
    x = as_tensor(x)
    axes = tuple(axes)
    out_data = np.ascontiguousarray(x.data.transpose(axes))
    inverse = tuple(np.argsort(axes))

    def _bw():
        _accumulate(x, out.grad.transpose(inverse))

    out = _make(out_data, (x,), _bw)
    return out


def swap_last2(x) -> Tensor:
    x = as_tensor(x)
    axes = list(range(x.data.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def concat(tensors: Iterable, axis: int = -1) -> Tensor:
    ts = [as_tensor(t) for t in tensors]
    out_data = np.concatenate([t.data for t in ts], axis=axis)
    sizes = [t.data.shape[axis] for t in ts]
    offsets = np.cumsum([0] + sizes)

    def _bw():
        for t, lo, hi in zip(ts, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * out.grad.ndim
            idx[axis] = slice(lo, hi)
            _accumulate(t, out.grad[tuple(idx)])

    out = _make(out_data, ts, _bw)
    return out


def mean_axis(x, axis: int) -> Tensor:
    x = as_tensor(x)
    n = x.data.shape[axis]
    out_data = x.data.mean(axis=axis)

    def _bw():
        _accumulate(x, np.repeat(np.expand_dims(out.grad / n, axis), n, axis=axis))

    out = _make(out_data, (x,), _bw)
    return out


def sum_all(x) -> Tensor:
    x = as_tensor(x)
    out_data = np.asarray(x.data.sum())

    def _bw():
        _accumulate(x, np.broadcast_to(out.grad, x.data.shape))

    out = _make(out_data, (x,), _bw)
    return out


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise ShapeError(f"matmul requires >=2-d operands, got {a.data.shape} x {b.data.shape}")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise ShapeError(f"matmul inner-dimension mismatch: {a.data.shape} x {b.data.shape}")
    try:
        out_data = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul batch dimensions incompatible: {a.data.shape} x {b.data.shape}") from exc

    def _bw():
        ga = np.matmul(out.grad, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), out.grad)
        _accumulate(a, _reduce_to_shape(ga, a.data.shape))
        _accumulate(b, _reduce_to_shape(gb, b.data.shape))

    out = _make(out_data, (a, b), _bw)
    return out


def linear(x, w, b) -> Tensor:
    """x @ w + b with b broadcast over leading dims."""
    return add(matmul(x, w), b)


def conv1d(x, w, bias, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation along the last axis with zero padding.

    x: (B, C_in, L), w: (C_out, C_in, k), bias: (C_out,).
    """
    x, w, bias = as_tensor(x), as_tensor(w), as_tensor(bias)
    if x.data.ndim != 3 or w.data.ndim != 3:
        raise ShapeError(f"conv1d expects x (B,C,L) and w (O,C,k), got {x.data.shape} and {w.data.shape}")
    batch, c_in, length = x.data.shape
    c_out, c_in_w, k = w.data.shape
    if c_in != c_in_w:
        raise ShapeError(f"conv1d channel mismatch: input {x.data.shape} vs kernel {w.data.shape}")
    padded_len = length + 2 * padding
    if padded_len < k:
        raise ShapeError(f"conv1d kernel size {k} exceeds padded input length {padded_len}")
    l_out = (padded_len - k) // stride + 1

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding))) if padding else x.data
    windows = np.lib.stride_tricks.sliding_window_view(xp, k, axis=2)[:, :, ::stride, :]
    out_data = np.einsum("bclk,ock->bol", windows, w.data, optimize=True)
    out_data += bias.data[None, :, None]

    def _bw():
        gy = out.grad
        _accumulate(w, np.einsum("bol,bclk->ock", gy, windows, optimize=True))
        _accumulate(bias, gy.sum(axis=(0, 2)))
        if x.requires_grad:
            gxp = np.zeros((batch, c_in, padded_len))
            for j in range(k):
                gxp[:, :, j : j + stride * l_out : stride] += np.einsum(
                    "bol,oc->bcl", gy, w.data[:, :, j], optimize=True
                )
            _accumulate(x, gxp[:, :, padding : padding + length] if padding else gxp)

    out = _make(out_data, (x, w, bias), _bw)
    return out


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------

class BatchNormState:
    """Running statistics for one batchnorm layer (momentum 0.1, eps 1e-5)."""

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-5):
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self.momentum = momentum
        self.eps = eps

    def copy(self) -> "BatchNormState":
        dup = BatchNormState(len(self.running_mean), self.momentum, self.eps)
        dup.running_mean = self.running_mean.copy()
        dup.running_var = self.running_var.copy()
        return dup


def batchnorm1d(x, gamma, beta, state: BatchNormState, mode: str = "train") -> Tensor:
    """Per-channel normalization of (B, C, L) over the (B, L) axes."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    batch, channels, length = x.data.shape
    n = batch * length
    if mode == "train":
        if n <= 1:
            raise ShapeError(f"batchnorm1d needs B*L > 1 in train mode, got B={batch}, L={length}")
        mean = x.data.mean(axis=(0, 2))
        var = x.data.var(axis=(0, 2))
        # running_var keeps the unbiased estimate, normalization the biased one
        state.running_mean = (1 - state.momentum) * state.running_mean + state.momentum * mean
        state.running_var = (1 - state.momentum) * state.running_var + state.momentum * var * n / (n - 1)
    else:
        mean = state.running_mean
        var = state.running_var

    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (x.data - mean[None, :, None]) * inv[None, :, None]
    out_data = gamma.data[None, :, None] * xhat + beta.data[None, :, None]

    def _bw():
        gy = out.grad
        _accumulate(gamma, (gy * xhat).sum(axis=(0, 2)))
        _accumulate(beta, gy.sum(axis=(0, 2)))
        if x.requires_grad:
            gxhat = gy * gamma.data[None, :, None]
            if mode == "train":
                gx = inv[None, :, None] * (
                    gxhat
                    - gxhat.mean(axis=(0, 2), keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=(0, 2), keepdims=True)
                )
            else:
                gx = gxhat * inv[None, :, None]
            _accumulate(x, gx)

    out = _make(out_data, (x, gamma, beta), _bw)
    return out


def layernorm(x, gamma, beta, eps: float = 1e-5) -> Tensor:
    """Normalize over the last dimension."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mean = x.data.mean(axis=-1, keepdims=True)
    var = x.data.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (x.data - mean) * inv
    out_data = gamma.data * xhat + beta.data

    def _bw():
        gy = out.grad
        reduce_axes = tuple(range(gy.ndim - 1))
        _accumulate(gamma, (gy * xhat).sum(axis=reduce_axes))
        _accumulate(beta, gy.sum(axis=reduce_axes))
        if x.requires_grad:
            gxhat = gy * gamma.data
            gx = inv * (
                gxhat
                - gxhat.mean(axis=-1, keepdims=True)
                - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
            )
            _accumulate(x, gx)

    out = _make(out_data, (x, gamma, beta), _bw)
    return out


# ---------------------------------------------------------------------------
# activations / regularization
# ---------------------------------------------------------------------------

def relu(x) -> Tensor:
    x = as_tensor(x)
    keep = x.data > 0  # derivative at exactly 0 defined as 0
    out_data = np.where(keep, x.data, 0.0)

    def _bw():
        _accumulate(x, out.grad * keep)

    out = _make(out_data, (x,), _bw)
    return out


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(x) -> Tensor:
    """tanh-approximation GELU: 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715 x^3)))."""
    x = as_tensor(x)
    inner = _GELU_C * (x.data + 0.044715 * x.data ** 3)
    t = np.tanh(inner)
    out_data = 0.5 * x.data * (1.0 + t)

    def _bw():
        dinner = _GELU_C * (1.0 + 3 * 0.044715 * x.data ** 2)
        grad = 0.5 * (1.0 + t) + 0.5 * x.data * (1.0 - t * t) * dinner
        _accumulate(x, out.grad * grad)

    out = _make(out_data, (x,), _bw)
    return out


def dropout(x, p: float, mode: str = "train", rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/(1-p); identity in eval mode."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout probability must satisfy 0 <= p < 1, got {p}")
    x = as_tensor(x)
    if mode != "train" or p == 0.0:
        return x
    if rng is None:
        raise ValueError("dropout in train mode requires an rng")
    scale = 1.0 / (1.0 - p)
    keep = (rng.random(x.data.shape) >= p) * scale
    out_data = x.data * keep

    def _bw():
        _accumulate(x, out.grad * keep)

    out = _make(out_data, (x,), _bw)
    return out


def softmax_lastdim(x) -> Tensor:
    """Stabilized softmax over the last axis; sentinel entries come out exactly 0."""
    x = as_tensor(x)
    row_max = x.data.max(axis=-1, keepdims=True)
    if np.any(row_max <= MASK_THRESHOLD):
        raise MaskedRowError("softmax row contains only mask-sentinel entries")
    e = np.exp(x.data - row_max)
    out_data = e / e.sum(axis=-1, keepdims=True)

    def _bw():
        gy = out.grad
        dot = (gy * out_data).sum(axis=-1, keepdims=True)
        _accumulate(x, out_data * (gy - dot))

    out = _make(out_data, (x,), _bw)
    return out


def cross_entropy(logits, labels) -> Tensor:
    """Mean negative log-likelihood with fused log-sum-exp."""
    logits = as_tensor(logits)
    labels = np.asarray(labels, dtype=np.int64)
    if logits.data.ndim != 2:
        raise ShapeError(f"cross_entropy expects (B, K) logits, got {logits.data.shape}")
    batch, k = logits.data.shape
    if labels.shape != (batch,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {batch}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must lie in [0, {k}), got range [{labels.min()}, {labels.max()}]")

    row_max = logits.data.max(axis=-1, keepdims=True)
    shifted = logits.data - row_max
    lse = np.log(np.exp(shifted).sum(axis=-1, keepdims=True)) + row_max
    log_probs = logits.data - lse
    out_data = np.asarray(-log_probs[np.arange(batch), labels].mean())

    def _bw():
        g = np.exp(log_probs)
        g[np.arange(batch), labels] -= 1.0
        _accumulate(logits, out.grad * g / batch)

    out = _make(out_data, (logits,), _bw)
    return out
