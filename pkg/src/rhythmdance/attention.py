"""Cross-conditional causal attention over (music, upper, lower) token streams and
its temporal-gated variant."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import ParamStore, Tensor, activation, as_tensor, linear, softmax
from .numerics.tensor import ShapeError

N_STREAMS = 3


@dataclass
class TgcaParams:
    W_q: Tensor
    W_k: Tensor
    W_v: Tensor
    W_o: Tensor
    W_gate: Tensor
    b_gate: Tensor
    n_heads: int
    gate_position: str = "post"

    def __post_init__(self):
        d = self.W_q.shape[0]
        if d % self.n_heads:
            raise ValueError(f"model width {d} not divisible by {self.n_heads} heads")
        if self.gate_position not in ("post", "pre"):
            raise ValueError("gate_position must be 'post' or 'pre'")

    @property
    def width(self) -> int:
        return self.W_q.shape[0]


def init_tgca(store: ParamStore, prefix: str, d: int, n_heads: int, rng: np.random.Generator,
              gate_position: str = "post") -> TgcaParams:
    s = 1.0 / np.sqrt(d)
    mats = {k: store.add(f"{prefix}.{k}", rng.normal(0.0, s, (d, d)))
            for k in ("W_q", "W_k", "W_v", "W_o", "W_gate")}
    b = store.add(f"{prefix}.b_gate", np.zeros(d))
    return TgcaParams(**mats, b_gate=b, n_heads=n_heads, gate_position=gate_position)


def build_c3_mask(steps: int) -> np.ndarray:
    """Allow (s, t) -> (s', t') iff t' <= t, for every pair of streams."""
    if steps < 1:
        raise ValueError("need at least one step")
    t = np.tile(np.arange(steps), N_STREAMS)
    return t[None, :] <= t[:, None]


def _batched(X) -> tuple[Tensor, bool]:
    X = as_tensor(X)
    if X.ndim == 2:
        return X.reshape(1, *X.shape), True
    if X.ndim != 3:
        raise ShapeError(f"stream tensor must be 2-D or 3-D, got {X.shape}")
    return X, False


def _split_heads(x: Tensor, h: int) -> Tensor:
    b, n, d = x.shape
    return x.reshape(b, n, h, d // h).transpose(0, 2, 1, 3)


def _attend(X: Tensor, p: TgcaParams, mask: np.ndarray) -> tuple[Tensor, Tensor]:
    """Multi-head attention before the output projection; returns (merged heads, weights)."""
    b, n, d = X.shape
    if mask.shape != (n, n):
        raise ShapeError(f"mask {mask.shape} does not match {n} tokens")
    h = p.n_heads
    q = _split_heads(X @ p.W_q, h)
    k = _split_heads(X @ p.W_k, h)
    v = _split_heads(X @ p.W_v, h)
    logits = (q @ k.transpose(0, 1, 3, 2)) * (1.0 / np.sqrt(d // h))
    weights = softmax(logits, axis=-1, mask=mask)
    merged = (weights @ v).transpose(0, 2, 1, 3).reshape(b, n, d)
    return merged, weights


def c3_attention(X, p: TgcaParams, mask: np.ndarray) -> Tensor:
    Xb, single = _batched(X)
    merged, _ = _attend(Xb, p, mask)
    out = merged @ p.W_o
    return out.reshape(out.shape[1:]) if single else out


def gating(X, p: TgcaParams) -> Tensor:
    """Per-token SiLU(Linear(X)) gate."""
    return activation(linear(X, p.W_gate, p.b_gate), "silu")


def tgca(X, p: TgcaParams, mask: np.ndarray) -> Tensor:
    """Attention output times the gate, elementwise."""
    if p.gate_position == "post":
        return c3_attention(X, p, mask) * gating(X, p)
    Xb, single = _batched(X)
    merged, _ = _attend(Xb, p, mask)
    out = (merged * gating(Xb, p)) @ p.W_o
    return out.reshape(out.shape[1:]) if single else out


def attention_heatmap(X, p: TgcaParams, mask: np.ndarray) -> np.ndarray:
    """Head-averaged post-softmax weights, (3T', 3T') for one sequence."""
    Xb, single = _batched(X)
    _, weights = _attend(Xb, p, mask)
    avg = weights.data.mean(axis=1)
    return avg[0] if single else avg
