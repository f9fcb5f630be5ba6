"""Synthetic beat-locked music/motion corpora and the DBT1 tensor file format."""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codec import PoseSequence
from .metrics import BeatList
from .numerics import Tensor
from .signal import MusicFeatureSequence
from .skeleton import JOINT_NAMES, LOWER, REST_POSE, UPPER

MAGIC = b"DBT1"

BEAT_JOINTS = (2, 3, 4, 5, 6)  # swing with the beat
BOUNCE_JOINTS = (7, 8, 9, 10)  # bounce at twice the beat rate


class TensorFileError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    n_sequences: int = 64
    T: int = 192
    J: int = len(JOINT_NAMES)
    fps: float = 30.0
    beat_period: int = 12  # in music frames (code rate)
    D_m: int = 5
    noise_std: float = 0.0
    seed: int = 0
    n_styles: int = 2

    def validate(self, lam: int):
        if self.n_sequences < 1:
            raise ValueError("n_sequences must be >= 1")
        if self.beat_period < 2:
            raise ValueError("beat_period must be >= 2")
        if self.T % lam:
            raise ValueError(f"T={self.T} must be divisible by lambda={lam}")
        if self.T // lam < 3:
            raise ValueError("need at least 3 music frames")
        if self.J != len(JOINT_NAMES):
            raise ValueError(f"the synthetic skeleton has exactly {len(JOINT_NAMES)} joints")
        if self.D_m < 1:
            raise ValueError("D_m must be >= 1")
        if self.n_styles < 1:
            raise ValueError("n_styles must be >= 1")
        if self.noise_std < 0 or self.fps <= 0:
            raise ValueError("noise_std must be >= 0 and fps > 0")


@dataclass
class PairedSample:
    music: MusicFeatureSequence
    motion: PoseSequence
    true_beats: BeatList


def joint_split() -> tuple[tuple[int, ...], tuple[int, ...]]:
    return UPPER, LOWER


def synth_music(n_frames: int, period: int, offset: int, d_m: int, noise: np.ndarray) -> np.ndarray:
    """Impulse channel at beats plus cos/sin pairs at beat harmonics (constant energy)."""
    t = np.arange(n_frames)
    cols = [((t - offset) % period == 0).astype(float)]
    harmonic = 1
    while len(cols) < d_m:
        ang = 2 * np.pi * harmonic * (t - offset) / period
        cols.append(np.cos(ang))
        if len(cols) < d_m:
            cols.append(np.sin(ang))
        harmonic += 1
    values = np.stack(cols, axis=1)
    # harmonics at the Nyquist rate leave sin columns of pure rounding residue
    values[np.abs(values) < 1e-12] = 0.0
    return values + noise


def make_styles(n_styles: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Per style: swing vectors (len(BEAT_JOINTS), 3) and a leg bounce amplitude."""
    vec = rng.normal(size=(n_styles, len(BEAT_JOINTS), 3))
    vec /= np.linalg.norm(vec, axis=-1, keepdims=True)
    amp = rng.uniform(0.2, 0.4, size=(n_styles, len(BEAT_JOINTS), 1))
    amp[:, BEAT_JOINTS.index(2)] *= 0.5  # head swings less than the arms
    return vec * amp, rng.uniform(0.02, 0.05, size=n_styles)


def synth_motion(n_frames: int, beat_frames: float, start: float, swing_vectors: np.ndarray,
                 bounce: float, rng: np.random.Generator, noise_std: float) -> np.ndarray:
    """Upper joints swing with direction reversals at every beat; legs bounce at twice the rate."""
    u = (np.arange(n_frames) - start) / beat_frames
    pos = np.repeat(REST_POSE[None], n_frames, axis=0)
    swing = np.cos(np.pi * u)
    for j, vec in zip(BEAT_JOINTS, swing_vectors):
        pos[:, j] += swing[:, None] * vec
    for j in BOUNCE_JOINTS:
        pos[:, j, 1] += bounce * np.cos(2 * np.pi * u)
    if noise_std > 0:
        pos = pos + rng.normal(0.0, noise_std, pos.shape)
    return pos.reshape(n_frames, -1)


def synth_dataset(cfg: SynthConfig, lam: int = 4) -> list[PairedSample]:
    """Deterministic corpus; music runs at fps/lam, one beat every ``beat_period`` music frames."""
    cfg.validate(lam)
    rng = np.random.default_rng(cfg.seed)
    swings, bounces = make_styles(cfg.n_styles, rng)
    n_music = cfg.T // lam
    out = []
    for _ in range(cfg.n_sequences):
        offset = int(rng.integers(0, cfg.beat_period))
        style = int(rng.integers(0, cfg.n_styles))
        music_noise = rng.normal(0.0, cfg.noise_std, (n_music, cfg.D_m)) if cfg.noise_std > 0 else 0.0
        music = synth_music(n_music, cfg.beat_period, offset, cfg.D_m, music_noise)
        motion = synth_motion(cfg.T, lam * cfg.beat_period, lam * offset, swings[style], bounces[style],
                              rng, cfg.noise_std)
        beats = np.arange(offset, n_music, cfg.beat_period)
        beats = beats[(beats >= 1) & (beats <= n_music - 2)]
        out.append(PairedSample(
            MusicFeatureSequence(music, cfg.fps / lam),
            PoseSequence(motion, cfg.fps, joint_split()),
            BeatList(beats, cfg.fps / lam),
        ))
    return out


# tensor files -------------------------------------------------------------
def write_tensor(path, t) -> None:
    arr = t.data if isinstance(t, Tensor) else t
    arr = np.asarray(arr, dtype="<f4", order="C")  # ascontiguousarray would promote 0-d to 1-d
    header = MAGIC + struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.tobytes())


def read_tensor(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise TensorFileError(f"{path}: truncated header at offset {len(raw)}")
    if raw[:4] != MAGIC:
        raise TensorFileError(f"{path}: bad magic {raw[:4]!r} at offset 0")
    (ndim,) = struct.unpack_from("<I", raw, 4)
    dims_end = 8 + 4 * ndim
    if len(raw) < dims_end:
        raise TensorFileError(f"{path}: truncated dims at offset {len(raw)} (need {dims_end})")
    dims = struct.unpack_from(f"<{ndim}I", raw, 8)
    count = int(np.prod(dims, dtype=np.int64)) if ndim else 1
    expected = dims_end + 4 * count
    if len(raw) != expected:
        raise TensorFileError(
            f"{path}: payload ends at offset {len(raw)}, header declares {count} values ending at {expected}")
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=dims_end)
    return data.astype(np.float64).reshape(dims)


def write_corpus(directory, samples: list[PairedSample], prefix: str = "") -> Path:
    """Write music/motion/beats tensors per sample plus ``manifest.txt`` listing file triples."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, s in enumerate(samples):
        names = (f"{prefix}music_{i:04d}.dbt", f"{prefix}motion_{i:04d}.dbt", f"{prefix}beats_{i:04d}.dbt")
        write_tensor(d / names[0], s.music.values)
        write_tensor(d / names[1], s.motion.frames)
        write_tensor(d / names[2], np.asarray(s.true_beats.frames, dtype=np.float64))
        lines.append(" ".join(names))
    (d / "manifest.txt").write_text("\n".join(lines) + "\n")
    return d / "manifest.txt"


def read_corpus(directory, fps: float, lam: int) -> list[PairedSample]:
    d = Path(directory)
    manifest = d / "manifest.txt"
    if not manifest.exists():
        raise FileNotFoundError(f"no manifest.txt in {d}")
    out = []
    for lineno, line in enumerate(manifest.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise TensorFileError(f"{manifest}:{lineno}: expected 3 file names")
        music, motion, beats = (read_tensor(d / p) for p in parts)
        out.append(PairedSample(
            MusicFeatureSequence(music, fps / lam),
            PoseSequence(motion, fps, joint_split()),
            BeatList(beats.astype(np.int64), fps / lam),
        ))
    return out


def save_checkpoint(directory, tensors: dict[str, np.ndarray]) -> Path:
    """One tensor file per entry plus ``manifest.txt`` lines ``name dims file``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    lines = []
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        fname = f"{name}.dbt"
        write_tensor(d / fname, arr)
        dims = "x".join(str(n) for n in arr.shape) or "scalar"
        lines.append(f"{name} {dims} {fname}")
    (d / "manifest.txt").write_text("\n".join(lines) + "\n")
    return d


def load_checkpoint(directory) -> dict[str, np.ndarray]:
    d = Path(directory)
    manifest = d / "manifest.txt"
    if not manifest.exists():
        raise FileNotFoundError(f"no checkpoint manifest in {d}")
    out = {}
    for lineno, line in enumerate(manifest.read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 3:
            raise TensorFileError(f"{manifest}:{lineno}: expected 'name dims file'")
        name, dims, fname = parts
        arr = read_tensor(d / fname)
        want = () if dims == "scalar" else tuple(int(n) for n in dims.split("x"))
        if arr.shape != want:
            raise TensorFileError(f"{d / fname}: dims {arr.shape} disagree with manifest {want}")
        out[name] = arr
    return out
