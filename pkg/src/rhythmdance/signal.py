"""Phase-based rhythm features: per-channel STFT phase, center crop, embedding, fusion."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numerics import BatchNormState, Tensor, activation, as_tensor, batchnorm, concat, linear
from .numerics.tensor import ShapeError


@dataclass
class MusicFeatureSequence:
    values: np.ndarray  # (T', D_m)
    frame_rate: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise ValueError(f"music features must be (T', D_m) with both >= 1, got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("music features contain non-finite values")

    @property
    def length(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class StftConfig:
    fft_len: int = 16
    hop: int = 1
    window: str = "hann"
    pad: str = "reflect"

    def __post_init__(self):
        if self.fft_len < 2 or self.fft_len % 2:
            raise ValueError("fft_len must be a positive even integer")
        if not 1 <= self.hop <= self.fft_len:
            raise ValueError("hop must be in [1, fft_len]")
        if self.window not in ("rectangular", "hann"):
            raise ValueError(f"unknown window {self.window!r}")
        if self.pad not in ("reflect", "zero"):
            raise ValueError(f"unknown pad {self.pad!r}")

    @property
    def n_bins(self) -> int:
        return self.fft_len // 2 + 1


@dataclass
class PhaseSpectrogram:
    angles: np.ndarray  # (T_phi, D_phi), channel-major columns

    @property
    def n_frames(self) -> int:
        return self.angles.shape[0]


def window(cfg: StftConfig) -> np.ndarray:
    if cfg.window == "rectangular":
        return np.ones(cfg.fft_len)
    n = np.arange(cfg.fft_len)
    return 0.5 - 0.5 * np.cos(2 * np.pi * n / cfg.fft_len)  # periodic Hann


def _pad(x: np.ndarray, cfg: StftConfig) -> np.ndarray:
    half = cfg.fft_len // 2
    mode = "reflect" if cfg.pad == "reflect" and x.shape[0] > 1 else "constant"
    return np.pad(x, ((half, half), (0, 0)), mode=mode)


def angle(spec: np.ndarray, scale: np.ndarray | float = 1.0) -> np.ndarray:
    """Complex argument in (-pi, pi]; coefficients that are numerically zero map to 0."""
    phase = np.angle(spec)
    phase = np.where(phase <= -np.pi, np.pi, phase)
    tiny = np.abs(spec) <= 1e-12 * np.maximum(scale, 1e-300)
    return np.where(tiny, 0.0, phase)


def stft_phase(m, cfg: StftConfig = StftConfig()) -> PhaseSpectrogram:
    """Phase angles of a time-axis STFT run independently on every feature channel."""
    x = m.values if isinstance(m, MusicFeatureSequence) else np.asarray(m, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"expected (T', D_m) features, got {x.shape}")
    padded = _pad(x, cfg)
    if padded.shape[0] < cfg.fft_len:
        raise ValueError(f"sequence of {padded.shape[0]} padded frames is shorter than one window")
    n_frames = (padded.shape[0] - cfg.fft_len) // cfg.hop + 1
    starts = np.arange(n_frames) * cfg.hop
    frames = padded[starts[:, None] + np.arange(cfg.fft_len)[None, :]]  # (F, N, D_m)
    frames = frames * window(cfg)[None, :, None]
    spec = np.fft.rfft(frames, axis=1)  # (F, bins, D_m)
    scale = np.abs(frames).sum(axis=1, keepdims=True)
    phase = angle(spec, scale)
    # channel-major columns: c * n_bins + k
    return PhaseSpectrogram(np.transpose(phase, (0, 2, 1)).reshape(n_frames, -1))


def center_crop(phi, length: int) -> np.ndarray:
    angles = phi.angles if isinstance(phi, PhaseSpectrogram) else np.asarray(phi)
    n = angles.shape[0]
    if n < length:
        raise ValueError(f"cannot crop {n} frames to {length}; increase STFT overlap")
    start = (n - length) // 2
    return angles[start : start + length]


def phase_features(music: np.ndarray, cfg: StftConfig) -> np.ndarray:
    """STFT phase cropped back to the input length; accepts (T', D_m) or (B, T', D_m)."""
    music = np.asarray(music, dtype=np.float64)
    if music.ndim == 3:
        return np.stack([phase_features(item, cfg) for item in music])
    return center_crop(stft_phase(music, cfg), music.shape[0])


def phase_dim(d_m: int, cfg: StftConfig) -> int:
    return cfg.n_bins * d_m


def embed_phase(phi_cropped, W, b, bn: BatchNormState, mode: str = "train") -> Tensor:
    """ReLU(BN(Linear(phi))) row-wise."""
    return activation(batchnorm(linear(phi_cropped, W, b), bn, mode), "relu")


def build_rhythm_addend(x_phi) -> Tensor:
    """Stack three copies of the rhythm features to line up with (music, upper, lower)."""
    x_phi = as_tensor(x_phi)
    return concat([x_phi, x_phi, x_phi], axis=-2)


def fuse(x_i, x_gamma) -> Tensor:
    x_i, x_gamma = as_tensor(x_i), as_tensor(x_gamma)
    if x_i.shape != x_gamma.shape:
        raise ShapeError(f"fuse: {x_i.shape} vs {x_gamma.shape}")
    return x_i + x_gamma
