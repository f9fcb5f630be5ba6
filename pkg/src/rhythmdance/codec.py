"""Toy half-body pose VQ codec: windowed encoder, nearest-code quantizer, windowed decoder."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .numerics import Adam, ParamStore, Tensor, activation, linear, no_grad
from .numerics.gradcheck import NonFiniteLoss

log = logging.getLogger(__name__)

HALVES = ("upper", "lower")


@dataclass
class PoseSequence:
    frames: np.ndarray  # (T, J*3)
    fps: float
    joint_split: tuple[tuple[int, ...], tuple[int, ...]]

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or self.frames.shape[1] % 3:
            raise ValueError(f"pose frames must be (T, J*3), got {self.frames.shape}")
        up, low = (tuple(int(i) for i in h) for h in self.joint_split)
        self.joint_split = (up, low)
        if not up or not low:
            raise ValueError("both halves of the joint split must be non-empty")
        if sorted(up + low) != list(range(self.n_joints)):
            raise ValueError("joint split must partition all joints")

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def n_joints(self) -> int:
        return self.frames.shape[1] // 3

    def positions(self) -> np.ndarray:
        return self.frames.reshape(self.n_frames, self.n_joints, 3)

    def half(self, which: str) -> np.ndarray:
        idx = self.joint_split[HALVES.index(which)]
        return self.positions()[:, list(idx)].reshape(self.n_frames, -1)


@dataclass
class Codebook:
    entries: Tensor  # (K, C)
    half: str

    @property
    def size(self) -> int:
        return self.entries.shape[0]


@dataclass
class CodeSequence:
    codes: np.ndarray
    half: str
    lam: int

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int64)

    def __len__(self):
        return len(self.codes)


@dataclass(frozen=True)
class CodecConfig:
    lam: int = 4
    k_cb: int = 64
    c_code: int = 32
    hidden: int = 64
    beta: float = 0.25
    steps: int = 1500
    batch: int = 128
    lr: float = 2e-3
    revive_every: int = 100
    seed: int = 0


@dataclass
class Codec:
    cfg: CodecConfig
    joint_split: tuple[tuple[int, ...], tuple[int, ...]]
    store: ParamStore
    # per-half (mean, scale) applied to window vectors; frozen after fitting
    norm: dict[str, tuple[np.ndarray, float]] = field(default_factory=dict)

    def book(self, half: str) -> Codebook:
        return Codebook(self.store[f"{half}.codebook"], half)

    def window_dim(self, half: str) -> int:
        return self.cfg.lam * 3 * len(self.joint_split[HALVES.index(half)])


def init_codec(cfg: CodecConfig, joint_split, rng: np.random.Generator) -> Codec:
    store = ParamStore()
    codec = Codec(cfg, tuple(tuple(h) for h in joint_split), store)
    for half in HALVES:
        w = codec.window_dim(half)
        h, c = cfg.hidden, cfg.c_code
        store.add(f"{half}.enc.W1", rng.normal(0, 1 / np.sqrt(w), (w, h)))
        store.add(f"{half}.enc.b1", np.zeros(h))
        store.add(f"{half}.enc.W2", rng.normal(0, 1 / np.sqrt(h), (h, c)))
        store.add(f"{half}.enc.b2", np.zeros(c))
        store.add(f"{half}.dec.W1", rng.normal(0, 1 / np.sqrt(c), (c, h)))
        store.add(f"{half}.dec.b1", np.zeros(h))
        store.add(f"{half}.dec.W2", rng.normal(0, 1 / np.sqrt(h), (h, w)))
        store.add(f"{half}.dec.b2", np.zeros(w))
        store.add(f"{half}.codebook", rng.normal(0, 1, (cfg.k_cb, c)))
        codec.norm[half] = (np.zeros(w), 1.0)
    return codec


def windows(x: np.ndarray, lam: int) -> np.ndarray:
    """(T, F) -> (T/lam, lam*F) non-overlapping windows."""
    t = x.shape[0]
    if t % lam:
        raise ValueError(f"sequence length {t} is not divisible by lambda={lam}")
    return x.reshape(t // lam, lam * x.shape[1])


def _encoder(codec: Codec, half: str, win) -> Tensor:
    s = codec.store
    mean, scale = codec.norm[half]
    x = (np.asarray(win) - mean) / scale
    h = activation(linear(x, s[f"{half}.enc.W1"], s[f"{half}.enc.b1"]), "relu")
    return linear(h, s[f"{half}.enc.W2"], s[f"{half}.enc.b2"])


def _decoder(codec: Codec, half: str, z) -> Tensor:
    s = codec.store
    mean, scale = codec.norm[half]
    h = activation(linear(z, s[f"{half}.dec.W1"], s[f"{half}.dec.b1"]), "relu")
    return linear(h, s[f"{half}.dec.W2"], s[f"{half}.dec.b2"]) * scale + mean


def quantize(latents: np.ndarray, entries: np.ndarray) -> np.ndarray:
    """Nearest codebook row per latent (Euclidean, ties to the lowest index)."""
    latents = np.atleast_2d(latents)
    d2 = ((latents[:, None, :] - entries[None, :, :]) ** 2).sum(-1)
    return np.argmin(d2, axis=1)  # argmin returns the first minimum


def encode(P: PoseSequence, codec: Codec) -> tuple[CodeSequence, CodeSequence]:
    lam = codec.cfg.lam
    out = []
    with no_grad():
        for half in HALVES:
            z = _encoder(codec, half, windows(P.half(half), lam)).data
            out.append(CodeSequence(quantize(z, codec.store[f"{half}.codebook"].data), half, lam))
    return out[0], out[1]


def decode(up: CodeSequence, low: CodeSequence, codec: Codec, fps: float = 30.0) -> PoseSequence:
    if len(up) != len(low) or up.lam != low.lam:
        raise ValueError(f"mismatched code sequences: {len(up)}/{up.lam} vs {len(low)}/{low.lam}")
    lam = codec.cfg.lam
    t = len(up) * lam
    n_joints = sum(len(h) for h in codec.joint_split)
    pos = np.zeros((t, n_joints, 3))
    with no_grad():
        for seq, half in ((up, "upper"), (low, "lower")):
            book = codec.store[f"{half}.codebook"].data
            if len(seq) and (seq.codes.min() < 0 or seq.codes.max() >= len(book)):
                raise IndexError(f"{half} code out of range")
            win = _decoder(codec, half, book[seq.codes]).data
            idx = list(codec.joint_split[HALVES.index(half)])
            pos[:, idx] = win.reshape(t, len(idx), 3)
    return PoseSequence(pos.reshape(t, -1), fps, codec.joint_split)


def _fit_norm(codec: Codec, half: str, data: np.ndarray):
    mean = data.mean(axis=0)
    scale = float((data - mean).std())
    codec.norm[half] = (mean, scale if scale > 1e-8 else 1.0)


def train_codec(dataset: list[PoseSequence], cfg: CodecConfig = CodecConfig()) -> tuple[Codec, list[float]]:
    """Fit encoder, decoder and codebooks with straight-through quantization.

    Loss per half: reconstruction MSE + codebook MSE + beta * commitment MSE,
    summed over halves. Codes left unused for ``revive_every`` steps are reset
    to random encoder outputs of the current batch.
    """
    if not dataset:
        raise ValueError("empty dataset")
    rng = np.random.default_rng(cfg.seed)
    codec = init_codec(cfg, dataset[0].joint_split, rng)
    pools = {h: np.concatenate([windows(p.half(h), cfg.lam) for p in dataset]) for h in HALVES}
    for h in HALVES:
        _fit_norm(codec, h, pools[h])
        with no_grad():
            z = _encoder(codec, h, pools[h][rng.choice(len(pools[h]), cfg.k_cb)]).data
        codec.store[f"{h}.codebook"].data = z + 1e-3 * rng.normal(size=z.shape)
    opt = Adam(codec.store, cfg.lr)
    usage = {h: np.zeros(cfg.k_cb, dtype=np.int64) for h in HALVES}
    curve = []
    n = len(pools["upper"])
    for step in range(cfg.steps):
        idx = rng.choice(n, size=min(cfg.batch, n), replace=False)
        codec.store.zero_grad()
        total = None
        latents = {}
        for h in HALVES:
            win = pools[h][idx]
            ze = _encoder(codec, h, win)
            book = codec.store[f"{h}.codebook"]
            codes = quantize(ze.data, book.data)
            usage[h] += np.bincount(codes, minlength=cfg.k_cb)
            zq = book[codes]
            z_st = ze + Tensor(zq.data - ze.data)  # straight-through
            mean, scale = codec.norm[h]
            diff = (_decoder(codec, h, z_st) - win) * (1.0 / scale)
            recon = (diff * diff).mean()
            cb = ((zq - Tensor(ze.data)) ** 2).mean()
            commit = ((ze - Tensor(zq.data)) ** 2).mean()
            loss = recon + cb + cfg.beta * commit
            total = loss if total is None else total + loss
            latents[h] = ze.data
        val = float(total.data)
        if not np.isfinite(val):
            raise NonFiniteLoss(f"codec loss diverged at step {step}")
        curve.append(val)
        total.backward()
        opt.step()
        if cfg.revive_every and (step + 1) % cfg.revive_every == 0:
            for h in HALVES:
                dead = np.flatnonzero(usage[h] == 0)
                if dead.size:
                    pick = rng.choice(len(latents[h]), size=dead.size)
                    codec.store[f"{h}.codebook"].data[dead] = latents[h][pick]
                usage[h][:] = 0
    log.info("codec trained: loss %.4f -> %.4f", curve[0], curve[-1])
    return codec, curve


def reconstruction_error(codec: Codec, dataset: list[PoseSequence]) -> float:
    """Normalized MSE of decode(encode(P)) in the units the training loss uses."""
    errs = []
    for P in dataset:
        up, low = encode(P, codec)
        R = decode(up, low, codec, P.fps)
        for h in HALVES:
            _, scale = codec.norm[h]
            errs.append(float((((R.half(h) - P.half(h)) / scale) ** 2).mean()))
    return float(np.mean(errs))


def codec_state(codec: Codec) -> dict[str, np.ndarray]:
    state = codec.store.state()
    for h in HALVES:
        mean, scale = codec.norm[h]
        state[f"{h}.norm.mean"] = mean
        state[f"{h}.norm.scale"] = np.array([scale])
    return state


def load_codec(cfg: CodecConfig, joint_split, state: dict[str, np.ndarray]) -> Codec:
    state = dict(state)
    codec = init_codec(cfg, joint_split, np.random.default_rng(0))
    for h in HALVES:
        codec.norm[h] = (state.pop(f"{h}.norm.mean"), float(state.pop(f"{h}.norm.scale")[0]))
    codec.store.load_state(state)
    return codec
