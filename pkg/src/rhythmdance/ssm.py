"""Selective state-space residual blocks and the three-stream parallel stack."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .attention import N_STREAMS
from .numerics import ParamStore, Tensor, activation, as_tensor, concat, linear, rmsnorm
from .numerics.tensor import ShapeError, _make, exp, pad_front, softplus


class ScanOverflow(FloatingPointError):
    pass


@dataclass
class SsmParams:
    W_in: Tensor  # (D, 2*Din): scan branch | gate branch
    W_delta: Tensor  # (Din, Din)
    b_delta: Tensor  # (Din,)
    W_B: Tensor  # (Din, N)
    W_C: Tensor  # (Din, N)
    A_log: Tensor  # (Din, N); A = -exp(A_log) < 0
    D_skip: Tensor  # (Din,)
    W_out: Tensor  # (Din, D)
    conv_w: Tensor | None = None  # (Din, W_c)
    conv_b: Tensor | None = None

    @property
    def inner(self) -> int:
        return self.W_delta.shape[0]

    def A(self) -> Tensor:
        return -exp(self.A_log)


@dataclass
class GateMlpParams:
    W_a: Tensor
    b_a: Tensor
    W_b: Tensor
    b_b: Tensor
    W_out: Tensor
    b_out: Tensor


@dataclass
class MambaBlock:
    ssm: SsmParams
    mlp: GateMlpParams
    gain_ssm: Tensor
    gain_mlp: Tensor


@dataclass
class PmmmParams:
    stacks: list[list[MambaBlock]] = field(default_factory=list)

    def __post_init__(self):
        if len(self.stacks) != N_STREAMS:
            raise ValueError("exactly three stream stacks are required")
        if len({len(s) for s in self.stacks}) != 1:
            raise ValueError("stream stacks must have equal depth")

    @property
    def depth(self) -> int:
        return len(self.stacks[0])


def init_ssm(store: ParamStore, prefix: str, d: int, rng: np.random.Generator, state: int = 8,
             expand: int = 2, conv_width: int = 4, delta_init: float = 0.05) -> SsmParams:
    din = expand * d
    add = store.add
    conv_w = conv_b = None
    if conv_width > 0:
        conv_w = add(f"{prefix}.conv_w", rng.normal(0.0, 1.0 / np.sqrt(conv_width), (din, conv_width)))
        conv_b = add(f"{prefix}.conv_b", np.zeros(din))
    return SsmParams(
        W_in=add(f"{prefix}.W_in", rng.normal(0.0, 1.0 / np.sqrt(d), (d, 2 * din))),
        W_delta=add(f"{prefix}.W_delta", rng.normal(0.0, 0.1 / np.sqrt(din), (din, din))),
        # softplus(b) == delta_init at start
        b_delta=add(f"{prefix}.b_delta", np.full(din, np.log(np.expm1(delta_init)))),
        W_B=add(f"{prefix}.W_B", rng.normal(0.0, 1.0 / np.sqrt(din), (din, state))),
        W_C=add(f"{prefix}.W_C", rng.normal(0.0, 1.0 / np.sqrt(din), (din, state))),
        A_log=add(f"{prefix}.A_log", np.log(np.tile(np.arange(1, state + 1, dtype=float), (din, 1)))),
        D_skip=add(f"{prefix}.D_skip", np.ones(din)),
        W_out=add(f"{prefix}.W_out", rng.normal(0.0, 1.0 / np.sqrt(din), (din, d))),
        conv_w=conv_w,
        conv_b=conv_b,
    )


def init_gate_mlp(store: ParamStore, prefix: str, d: int, hidden: int, rng: np.random.Generator) -> GateMlpParams:
    add = store.add
    return GateMlpParams(
        W_a=add(f"{prefix}.W_a", rng.normal(0.0, 1.0 / np.sqrt(d), (d, hidden))),
        b_a=add(f"{prefix}.b_a", np.zeros(hidden)),
        W_b=add(f"{prefix}.W_b", rng.normal(0.0, 1.0 / np.sqrt(d), (d, hidden))),
        b_b=add(f"{prefix}.b_b", np.zeros(hidden)),
        W_out=add(f"{prefix}.W_out", rng.normal(0.0, 1.0 / np.sqrt(hidden), (hidden, d))),
        b_out=add(f"{prefix}.b_out", np.zeros(d)),
    )


def init_pmmm(store: ParamStore, prefix: str, d: int, depth: int, rng: np.random.Generator, state: int = 8,
              expand: int = 2, conv_width: int = 4, mlp_hidden: int | None = None) -> PmmmParams:
    hidden = mlp_hidden or 2 * d
    stacks = []
    for s, stream in enumerate(("music", "upper", "lower")):
        blocks = []
        for layer in range(depth):
            pre = f"{prefix}.{stream}.{layer}"
            blocks.append(MambaBlock(
                ssm=init_ssm(store, f"{pre}.ssm", d, rng, state, expand, conv_width),
                mlp=init_gate_mlp(store, f"{pre}.mlp", d, hidden, rng),
                gain_ssm=store.add(f"{pre}.gain_ssm", np.ones(d)),
                gain_mlp=store.add(f"{pre}.gain_mlp", np.ones(d)),
            ))
        stacks.append(blocks)
    return PmmmParams(stacks)


# scan ---------------------------------------------------------------------
def scan(u, delta, A, B, C, D_skip) -> Tensor:
    """Diagonal selective scan as a graph node.

    ``h_t = exp(delta_t * A) * h_{t-1} + delta_t * B_t * u_t`` and
    ``y_t = C_t . h_t + D_skip * u_t`` with ``h_{-1} = 0``. Accepts (T, Din) or
    (batch, T, Din) inputs.
    """
    u, delta, A, B, C, D_skip = (as_tensor(t) for t in (u, delta, A, B, C, D_skip))
    single = u.ndim == 2
    ud, dd, Bd, Cd = (t.data[None] if single else t.data for t in (u, delta, B, C))
    y, hs = kernels.scan_forward(ud, dd, A.data, Bd, Cd, D_skip.data)
    if not (np.isfinite(y).all() and np.isfinite(hs).all()):
        raise ScanOverflow("selective scan produced a non-finite state")

    def back(g):
        g = g[None] if single else g
        du, ddelta, dA, dB, dC, dD = kernels.scan_backward(g, ud, dd, A.data, Bd, Cd, D_skip.data, hs)
        if single:
            du, ddelta, dB, dC = du[0], ddelta[0], dB[0], dC[0]
        return du, ddelta, dA, dB, dC, dD

    return _make(y[0] if single else y, (u, delta, A, B, C, D_skip), back)


def selective_scan(x, p: SsmParams) -> Tensor:
    """Input-dependent scan: step sizes, B and C are per-token projections of ``x``."""
    x = as_tensor(x)
    delta = softplus(linear(x, p.W_delta, p.b_delta))
    return scan(x, delta, p.A(), x @ p.W_B, x @ p.W_C, p.D_skip)


def causal_conv(x, w, b) -> Tensor:
    """Depthwise causal convolution along time: y_t = sum_k w[:, k] x_{t-W+1+k} + b."""
    x = as_tensor(x)
    width = w.shape[1]
    t_len = x.shape[-2]
    padded = pad_front(x, width - 1, axis=-2)
    out = None
    for k in range(width):
        term = padded[..., k : k + t_len, :] * w[:, k]
        out = term if out is None else out + term
    return out + b


def mamba(x, p: SsmParams) -> Tensor:
    """in-proj -> causal conv -> SiLU -> selective scan -> times SiLU(gate) -> out-proj."""
    x = as_tensor(x)
    proj = x @ p.W_in
    din = p.inner
    u = proj[..., :din]
    z = proj[..., din:]
    if p.conv_w is not None:
        u = causal_conv(u, p.conv_w, p.conv_b)
    u = activation(u, "silu")
    y = selective_scan(u, p) * activation(z, "silu")
    return y @ p.W_out


def mamba_layer(X_in, p: SsmParams, gain, eps: float = 1e-6) -> Tensor:
    X_in = as_tensor(X_in)
    return mamba(rmsnorm(X_in, gain, eps), p) + X_in


def gate_mlp(X, p: GateMlpParams, gain, eps: float = 1e-6) -> Tensor:
    X = as_tensor(X)
    n = rmsnorm(X, gain, eps)
    hidden = linear(n, p.W_a, p.b_a) * activation(linear(n, p.W_b, p.b_b), "silu")
    return linear(hidden, p.W_out, p.b_out) + X


def run_stack(X, blocks: list[MambaBlock]) -> Tensor:
    X = as_tensor(X)
    for blk in blocks:
        X = mamba_layer(X, blk.ssm, blk.gain_ssm)
        X = gate_mlp(X, blk.mlp, blk.gain_mlp)
    return X


def pmmm(X_attn, p: PmmmParams) -> Tensor:
    """Split into (music, upper, lower) segments, run each through its own stack, rejoin."""
    X_attn = as_tensor(X_attn)
    rows = X_attn.shape[-2]
    if rows % N_STREAMS:
        raise ShapeError(f"row count {rows} is not divisible by {N_STREAMS}")
    t = rows // N_STREAMS
    segs = [run_stack(X_attn[..., s * t : (s + 1) * t, :], p.stacks[s]) for s in range(N_STREAMS)]
    return concat(segs, axis=-2)
