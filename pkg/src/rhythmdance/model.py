"""Rhythm-fused token model: embeddings -> phase rhythm addend -> gated attention /
parallel scan stacks -> per-half softmax heads; training and greedy generation."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .attention import TgcaParams, attention_heatmap, build_c3_mask, init_tgca, tgca
from .numerics import (
    BatchNormState,
    ParamStore,
    Tensor,
    as_tensor,
    clip_grad_norm,
    concat,
    cross_entropy,
    linear,
    make_optimizer,
    no_grad,
    softmax,
)
from .numerics.gradcheck import NonFiniteLoss
from .numerics.tensor import ShapeError
from .signal import StftConfig, build_rhythm_addend, embed_phase, fuse, phase_dim, phase_features
from .ssm import PmmmParams, init_pmmm, pmmm

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    d_m: int = 5
    k_cb: int = 64
    d: int = 64
    n_heads: int = 4
    depth: int = 1  # rounds of (gated attention -> parallel scan); one extra attention follows
    layers: int = 2  # scan blocks per stream
    state: int = 8
    expand: int = 2
    conv_width: int = 4
    gate_position: str = "post"
    use_rhythm: bool = True
    head_init_std: float = 0.02
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if self.d % self.n_heads:
            raise ValueError(f"d={self.d} must be divisible by n_heads={self.n_heads}")
        if self.k_cb < 2 or self.depth < 1 or self.layers < 0 or self.state < 1:
            raise ValueError("k_cb >= 2, depth >= 1, layers >= 0, state >= 1 required")


@dataclass
class ModelParams:
    cfg: ModelConfig
    store: ParamStore
    bn: BatchNormState
    tgca: list[TgcaParams]
    pmmm: list[PmmmParams]

    def __getitem__(self, name: str) -> Tensor:
        return self.store[name]

    def buffers(self) -> dict[str, np.ndarray]:
        return {"phase.bn.running_mean": self.bn.running_mean, "phase.bn.running_var": self.bn.running_var}

    def load_buffers(self, buf: dict[str, np.ndarray]):
        self.bn.running_mean = np.asarray(buf["phase.bn.running_mean"], dtype=np.float64)
        self.bn.running_var = np.asarray(buf["phase.bn.running_var"], dtype=np.float64)


@dataclass
class HeadOutput:
    a_u: np.ndarray
    a_l: np.ndarray
    logits_u: Tensor
    logits_l: Tensor


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 3e-4
    steps: int = 500
    batch: int = 8
    seed: int = 0
    grad_clip: float = 1.0
    optimizer: str = "adam"

    def __post_init__(self):
        if self.lr <= 0 or self.steps < 1 or self.batch < 1:
            raise ValueError("lr > 0, steps >= 1, batch >= 1 required")


def init_model(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    store = ParamStore()
    d = cfg.d
    store.add("embed_m.W", rng.normal(0, 1 / np.sqrt(cfg.d_m), (cfg.d_m, d)))
    store.add("embed_m.b", np.zeros(d))
    store.add("embed_u.W", rng.normal(0, 1.0, (cfg.k_cb, d)))
    store.add("embed_l.W", rng.normal(0, 1.0, (cfg.k_cb, d)))
    dphi = phase_dim(cfg.d_m, cfg.stft)
    store.add("phase.W", rng.normal(0, 1 / np.sqrt(dphi), (dphi, d)))
    store.add("phase.b", np.zeros(d))
    bn = BatchNormState.create(d)
    store.add("phase.bn.gamma", bn.gamma)
    store.add("phase.bn.beta", bn.beta)
    blocks, stacks = [], []
    for r in range(cfg.depth + 1):
        blocks.append(init_tgca(store, f"tgca{r}", d, cfg.n_heads, rng, cfg.gate_position))
    for r in range(cfg.depth):
        stacks.append(init_pmmm(store, f"pmmm{r}", d, cfg.layers, rng, cfg.state, cfg.expand, cfg.conv_width))
    for h in ("u", "l"):
        store.add(f"head_{h}.W", rng.normal(0, cfg.head_init_std, (d, cfg.k_cb)))
        store.add(f"head_{h}.b", np.zeros(cfg.k_cb))
    return ModelParams(cfg, store, bn, blocks, stacks)


def _batch3(music, codes_u, codes_l):
    music = np.asarray(music, dtype=np.float64)
    cu, cl = np.asarray(codes_u, dtype=np.int64), np.asarray(codes_l, dtype=np.int64)
    single = music.ndim == 2
    if single:
        music, cu, cl = music[None], cu[None], cl[None]
    if not (music.shape[:2] == cu.shape == cl.shape):
        raise ShapeError(f"length mismatch: music {music.shape[:2]}, upper {cu.shape}, lower {cl.shape}")
    return music, cu, cl, single


def embed_inputs(music, codes_u, codes_l, p: ModelParams) -> Tensor:
    """Stream tensor rows: [music | upper | lower], each T' long."""
    music, cu, cl, single = _batch3(music, codes_u, codes_l)
    k = p.cfg.k_cb
    for c in (cu, cl):
        if c.size and (c.min() < 0 or c.max() >= k):
            raise IndexError(f"code out of range [0, {k})")
    x_m = linear(music, p["embed_m.W"], p["embed_m.b"])
    x = concat([x_m, p["embed_u.W"][cu], p["embed_l.W"][cl]], axis=1)
    return x.reshape(x.shape[1:]) if single else x


def _trunk(music, cu, cl, p: ModelParams, mode, phase, use_rhythm, maps: list | None = None) -> Tensor:
    steps = music.shape[1]
    X = embed_inputs(music, cu, cl, p)
    if p.cfg.use_rhythm if use_rhythm is None else use_rhythm:
        phi = phase_features(music, p.cfg.stft) if phase is None else np.asarray(phase)
        if phi.ndim == 2:
            phi = phi[None]
        x_phi = embed_phase(phi, p["phase.W"], p["phase.b"], p.bn, mode)
        X = fuse(X, build_rhythm_addend(x_phi))
    mask = build_c3_mask(steps)
    for r, block in enumerate(p.tgca):
        if maps is not None:
            maps.append(attention_heatmap(X, block, mask))
        X = tgca(X, block, mask)
        if r < p.cfg.depth:
            X = pmmm(X, p.pmmm[r])
    return X


def attention_maps(music, codes_u, codes_l, p: ModelParams) -> list[np.ndarray]:
    """Head-averaged attention weights of every gated attention block, eval mode, one sequence."""
    music, cu, cl, single = _batch3(music, codes_u, codes_l)
    maps: list[np.ndarray] = []
    with no_grad():
        _trunk(music, cu, cl, p, "eval", None, None, maps)
    return [m[0] for m in maps] if single else maps


def forward(music, codes_u, codes_l, p: ModelParams, mode: str = "eval", phase: np.ndarray | None = None,
            use_rhythm: bool | None = None) -> HeadOutput:
    """Next-code distributions for both halves at every step.

    ``codes_*`` are the shifted inputs (codes 0..T'-1); ``phase`` optionally
    supplies precomputed cropped STFT phase for ``music``.
    """
    music, cu, cl, single = _batch3(music, codes_u, codes_l)
    steps = music.shape[1]
    X = _trunk(music, cu, cl, p, mode, phase, use_rhythm)
    logits_u = linear(X[:, steps : 2 * steps], p["head_u.W"], p["head_u.b"])
    logits_l = linear(X[:, 2 * steps :], p["head_l.W"], p["head_l.b"])
    a_u = softmax(logits_u.data).data
    a_l = softmax(logits_l.data).data
    if single:
        return HeadOutput(a_u[0], a_l[0], logits_u.reshape(logits_u.shape[1:]), logits_l.reshape(logits_l.shape[1:]))
    return HeadOutput(a_u, a_l, logits_u, logits_l)


def training_loss(out: HeadOutput, target_u, target_l) -> Tensor:
    """Mean over steps (and batch items) of CE(upper) + CE(lower)."""
    return cross_entropy(out.logits_u, np.asarray(target_u)) + cross_entropy(out.logits_l, np.asarray(target_l))


# data plumbing -----------------------------------------------------------------
@dataclass
class TokenBatch:
    """Aligned model inputs: step t sees music frame t+1 and codes 0..t, predicts codes t+1."""
    music: np.ndarray  # (N, L, D_m)
    phase: np.ndarray  # (N, L, D_phi)
    in_u: np.ndarray
    in_l: np.ndarray
    tgt_u: np.ndarray
    tgt_l: np.ndarray

    def take(self, idx) -> TokenBatch:
        return TokenBatch(*(a[idx] for a in (self.music, self.phase, self.in_u, self.in_l, self.tgt_u, self.tgt_l)))

    def __len__(self):
        return self.music.shape[0]


def make_tokens(music: list[np.ndarray], codes_u: list[np.ndarray], codes_l: list[np.ndarray],
                stft: StftConfig) -> TokenBatch:
    m = np.stack([np.asarray(x, dtype=np.float64)[1:] for x in music])
    cu = np.stack([np.asarray(c, dtype=np.int64) for c in codes_u])
    cl = np.stack([np.asarray(c, dtype=np.int64) for c in codes_l])
    if m.shape[1] != cu.shape[1] - 1:
        raise ShapeError("music and code sequences must have the same length")
    return TokenBatch(m, phase_features(m, stft), cu[:, :-1], cl[:, :-1], cu[:, 1:], cl[:, 1:])


def train(data: TokenBatch, p: ModelParams, cfg: TrainConfig = TrainConfig()) -> list[float]:
    """Minibatch optimisation of the two-half cross-entropy; returns the per-step loss."""
    rng = np.random.default_rng(cfg.seed)
    opt = make_optimizer(cfg.optimizer, p.store, cfg.lr)
    curve = []
    n = len(data)
    for step in range(cfg.steps):
        idx = rng.choice(n, size=min(cfg.batch, n), replace=False)
        b = data.take(np.sort(idx))
        p.store.zero_grad()
        out = forward(b.music, b.in_u, b.in_l, p, mode="train", phase=b.phase)
        loss = training_loss(out, b.tgt_u, b.tgt_l)
        val = float(loss.data)
        if not np.isfinite(val):
            raise NonFiniteLoss(f"training loss diverged at step {step}")
        curve.append(val)
        loss.backward()
        if cfg.grad_clip > 0:
            clip_grad_norm(p.store, cfg.grad_clip)
        opt.step()
        if step % 100 == 0:
            log.info("step %d loss %.4f", step, val)
    return curve


def evaluate_loss(data: TokenBatch, p: ModelParams) -> float:
    with no_grad():
        out = forward(data.music, data.in_u, data.in_l, p, mode="eval", phase=data.phase)
        return float(training_loss(out, data.tgt_u, data.tgt_l).data)


def generate(music, init_u: int, init_l: int, p: ModelParams, temperature: float = 0.0,
             rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Greedy code generation, one full-prefix forward per step.

    ``music`` covers all T' frames; the returned code sequences have length T'
    and start with the supplied initial codes. ``temperature > 0`` samples
    instead of taking the argmax.
    """
    music = np.asarray(music, dtype=np.float64)
    total = music.shape[0]
    k = p.cfg.k_cb
    if not (0 <= init_u < k and 0 <= init_l < k):
        raise IndexError("initial codes out of range")
    cu = np.zeros(total, dtype=np.int64)
    cl = np.zeros(total, dtype=np.int64)
    cu[0], cl[0] = init_u, init_l
    if total == 1:
        return cu, cl
    m_in = music[1:]
    phase = phase_features(m_in, p.cfg.stft)
    with no_grad():
        for t in range(total - 1):
            out = forward(m_in, cu[:-1], cl[:-1], p, mode="eval", phase=phase)
            cu[t + 1] = _choose(out.a_u[t], temperature, rng)
            cl[t + 1] = _choose(out.a_l[t], temperature, rng)
    return cu, cl


def _choose(probs: np.ndarray, temperature: float, rng) -> int:
    if temperature <= 0:
        return int(np.argmax(probs))  # first maximum on ties
    logits = np.log(np.maximum(probs, 1e-300)) / temperature
    w = np.exp(logits - logits.max())
    return int(rng.choice(len(w), p=w / w.sum()))


def model_state(p: ModelParams) -> dict[str, np.ndarray]:
    state = p.store.state()
    state.update({k: v.copy() for k, v in p.buffers().items()})
    return state


def load_model(cfg: ModelConfig, state: dict[str, np.ndarray]) -> ModelParams:
    p = init_model(cfg, np.random.default_rng(0))
    state = dict(state)
    p.load_buffers({k: state.pop(k) for k in p.buffers()})
    p.store.load_state(state)
    return p
