"""Dense layers and losses built on :mod:`rhythmdance.numerics.tensor`.

Every op accepts ``Tensor`` or array-likes and works over the last axis, so a
leading batch dimension passes straight through.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import (
    ShapeError,
    Tensor,
    _make,
    as_tensor,
    log,
    relu,
    silu,
    sqrt,
    take_last,
)

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


class MaskError(ValueError):
    """A softmax row has no admissible entry."""


def linear(x, W, b=None) -> Tensor:
    """Row-wise affine map ``x @ W + b``."""
    x, W = as_tensor(x), as_tensor(W)
    if x.shape[-1] != W.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {W.shape[0]}")
    y = x @ W
    if b is not None:
        b = as_tensor(b)
        if b.shape != (W.shape[1],):
            raise ShapeError(f"linear: bias shape {b.shape} != ({W.shape[1]},)")
        y = y + b
    return y


def softmax(x, axis: int = -1, mask: np.ndarray | None = None) -> Tensor:
    """Softmax with max subtraction; ``mask`` is a boolean allow-array.

    Masked entries (and entries already equal to ``-inf``) come out as exact
    zeros. A row with nothing admissible raises :class:`MaskError`.
    """
    x = as_tensor(x)
    logits = x.data
    if mask is not None:
        logits = np.where(mask, logits, -np.inf)
    top = logits.max(axis=axis, keepdims=True)
    if np.any(np.isneginf(top)):
        raise MaskError("softmax row is fully masked")
    e = np.exp(logits - top)
    y = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return _make(y, (x,), back)


def log_softmax(x, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    out = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))
    p = np.exp(out)

    def back(g):
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return _make(out, (x,), back)


def activation(x, kind: str) -> Tensor:
    if kind == "relu":
        return relu(x)
    if kind == "silu":
        return silu(x)
    raise ValueError(f"unknown activation {kind!r}")


def rmsnorm(x, gain, eps: float = 1e-6) -> Tensor:
    """``x / sqrt(mean(x**2) + eps) * gain`` per row."""
    x = as_tensor(x)
    ms = (x * x).mean(axis=-1, keepdims=True)
    return x / sqrt(ms + eps) * as_tensor(gain)


@dataclass
class BatchNormState:
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = BN_MOMENTUM
    eps: float = BN_EPS

    @classmethod
    def create(cls, channels: int, **kw) -> BatchNormState:
        return cls(
            gamma=Tensor(np.ones(channels), requires_grad=True),
            beta=Tensor(np.zeros(channels), requires_grad=True),
            running_mean=np.zeros(channels),
            running_var=np.ones(channels),
            **kw,
        )


def batchnorm(x, state: BatchNormState, mode: str = "train") -> Tensor:
    """Per-channel normalization over every row of ``x`` (all leading axes).

    Train mode uses the batch statistics and updates the running estimates
    (unbiased variance, as torch does); eval mode uses the running estimates.
    """
    x = as_tensor(x)
    c = x.shape[-1]
    if state.gamma.shape != (c,):
        raise ShapeError(f"batchnorm: {c} channels but gamma has shape {state.gamma.shape}")
    rows = x.reshape(-1, c)
    if mode == "train":
        n = rows.shape[0]
        if n < 2:
            raise ValueError("batchnorm in train mode needs at least 2 rows")
        mu = rows.mean(axis=0)
        centered = rows - mu
        var = (centered * centered).mean(axis=0)
        normed = centered / sqrt(var + state.eps)
        m = state.momentum
        state.running_mean = (1 - m) * state.running_mean + m * mu.data
        state.running_var = (1 - m) * state.running_var + m * var.data * n / (n - 1)
    elif mode == "eval":
        normed = (rows - state.running_mean) / np.sqrt(state.running_var + state.eps)
    else:
        raise ValueError(f"unknown batchnorm mode {mode!r}")
    out = normed * state.gamma + state.beta
    return out.reshape(x.shape)


def cross_entropy(logits, target) -> Tensor:
    """Mean over rows of ``-log softmax(logits)[target]``."""
    logits = as_tensor(logits)
    target = np.asarray(target)
    k = logits.shape[-1]
    if target.shape != logits.shape[:-1]:
        raise ShapeError(f"targets {target.shape} do not match logits {logits.shape}")
    if not np.issubdtype(target.dtype, np.integer):
        raise TypeError("targets must be integer class indices")
    if target.size and (target.min() < 0 or target.max() >= k):
        raise IndexError(f"target out of range [0, {k})")
    return -take_last(log_softmax(logits), target).mean()


def nll_from_probs(probs, target) -> Tensor:
    """Cross-entropy when the caller already holds probabilities."""
    probs = as_tensor(probs)
    target = np.asarray(target)
    k = probs.shape[-1]
    if target.size and (target.min() < 0 or target.max() >= k):
        raise IndexError(f"target out of range [0, {k})")
    return -log(take_last(probs, target)).mean()
