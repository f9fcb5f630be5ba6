"""Motion quality, diversity and beat alignment metrics."""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .skeleton import BONES, JOINT

CSV_HEADER = "fid_k,fid_g,div_k,div_g,bas"


@dataclass
class BeatList:
    frames: np.ndarray
    fps: float

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.int64).reshape(-1)
        if self.frames.size and (self.frames.min() < 0 or np.any(np.diff(self.frames) <= 0)):
            raise ValueError("beat frames must be non-negative and strictly increasing")

    def __len__(self):
        return self.frames.size


@dataclass
class MetricReport:
    fid_k: float
    fid_g: float
    div_k: float
    div_g: float
    bas: float

    def csv_line(self) -> str:
        return ",".join(f"{getattr(self, f.name):.6f}" for f in fields(self))

    def table(self) -> str:
        rows = [("FID_k", self.fid_k), ("FID_g", self.fid_g), ("Div_k", self.div_k),
                ("Div_g", self.div_g), ("BAS", self.bas)]
        return "\n".join(f"{name:<6} {val:>12.4f}" for name, val in rows)


def _positions(P) -> tuple[np.ndarray, float]:
    frames = np.asarray(P.frames, dtype=np.float64)
    return frames.reshape(frames.shape[0], -1, 3), float(P.fps)


# features -------------------------------------------------------------------
def kinetic_features(P) -> np.ndarray:
    """Per joint: mean speed, speed std, mean acceleration magnitude (central differences)."""
    pos, fps = _positions(P)
    if pos.shape[0] < 3:
        raise ValueError("kinetic features need at least 3 frames")
    vel = (pos[2:] - pos[:-2]) * (fps / 2.0)
    acc = (pos[2:] - 2.0 * pos[1:-1] + pos[:-2]) * fps**2
    speed = np.linalg.norm(vel, axis=-1)
    accel = np.linalg.norm(acc, axis=-1)
    return np.stack([speed.mean(0), speed.std(0), accel.mean(0)], axis=1).reshape(-1)


@dataclass(frozen=True)
class GeometricTemplates:
    """Joint roles and thresholds (multiples of the median bone length)."""
    root: int = JOINT["root"]
    head: int = JOINT["head"]
    l_hand: int = JOINT["l_hand"]
    r_hand: int = JOINT["r_hand"]
    l_foot: int = JOINT["l_foot"]
    r_foot: int = JOINT["r_foot"]
    bones: tuple = BONES
    hands_close: float = 0.5
    hand_forward: float = 0.5
    feet_wide: float = 1.5
    foot_raise: float = 0.3

    NAMES = ("hands_together", "l_hand_above_head", "r_hand_above_head", "l_hand_forward",
             "r_hand_forward", "feet_apart", "l_foot_raised", "r_foot_raised")


def bone_scale(pos: np.ndarray, bones) -> float:
    lengths = np.stack([np.linalg.norm(pos[:, a] - pos[:, b], axis=-1) for a, b in bones], axis=1)
    return float(np.median(lengths.mean(axis=1)))


def template_hits(P, tpl: GeometricTemplates = GeometricTemplates()) -> np.ndarray:
    """(T, 8) boolean matrix: which relational template holds in which frame."""
    pos, _ = _positions(P)
    needed = [tpl.root, tpl.head, tpl.l_hand, tpl.r_hand, tpl.l_foot, tpl.r_foot]
    needed += [j for bone in tpl.bones for j in bone]
    if max(needed) >= pos.shape[1]:
        raise ValueError(f"designated joint index {max(needed)} missing from a {pos.shape[1]}-joint pose")
    s = max(bone_scale(pos, tpl.bones), 1e-9)
    j = lambda k: pos[:, k]  # noqa: E731
    hits = [
        np.linalg.norm(j(tpl.l_hand) - j(tpl.r_hand), axis=-1) < tpl.hands_close * s,
        j(tpl.l_hand)[:, 1] > j(tpl.head)[:, 1],
        j(tpl.r_hand)[:, 1] > j(tpl.head)[:, 1],
        j(tpl.l_hand)[:, 2] - j(tpl.root)[:, 2] > tpl.hand_forward * s,
        j(tpl.r_hand)[:, 2] - j(tpl.root)[:, 2] > tpl.hand_forward * s,
        np.linalg.norm(j(tpl.l_foot) - j(tpl.r_foot), axis=-1) > tpl.feet_wide * s,
        j(tpl.l_foot)[:, 1] - j(tpl.r_foot)[:, 1] > tpl.foot_raise * s,
        j(tpl.r_foot)[:, 1] - j(tpl.l_foot)[:, 1] > tpl.foot_raise * s,
    ]
    return np.stack(hits, axis=1)


def geometric_features(P, tpl: GeometricTemplates = GeometricTemplates()) -> np.ndarray:
    """Fraction of frames in which each of the 8 templates holds."""
    return template_hits(P, tpl).mean(axis=0)


# distribution distances --------------------------------------------------------
def _sym_sqrt(m: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((m + m.T) / 2)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def frechet_distance(mu_a, cov_a, mu_b, cov_b) -> float:
    """Squared Frechet distance between two Gaussians.

    The trace of (cov_a cov_b)^(1/2) is taken from the eigenvalues of the
    symmetric matrix cov_a^(1/2) cov_b cov_a^(1/2), clipped at zero.
    """
    root_a = _sym_sqrt(cov_a)
    inner = root_a @ cov_b @ root_a
    w = np.linalg.eigvalsh((inner + inner.T) / 2)
    tr_cross = float(np.sqrt(np.clip(w, 0.0, None)).sum())
    diff = np.asarray(mu_a) - np.asarray(mu_b)
    return float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * tr_cross)


def _stack(feats) -> np.ndarray:
    x = np.asarray([np.asarray(f, dtype=np.float64).reshape(-1) for f in feats])
    if x.ndim != 2:
        raise ValueError("feature vectors must share one length")
    return x


def fid(feats_a, feats_b) -> float:
    a, b = _stack(feats_a), _stack(feats_b)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("fid needs at least 2 vectors per side")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    cov_a = np.atleast_2d(np.cov(a, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b, rowvar=False))
    return frechet_distance(a.mean(0), cov_a, b.mean(0), cov_b)


def diversity(feats) -> float:
    """Mean Euclidean distance over all unordered pairs."""
    x = _stack(feats)
    n = x.shape[0]
    if n < 2:
        raise ValueError("diversity needs at least 2 vectors")
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    return float(d[np.triu_indices(n, 1)].mean())


# beats ----------------------------------------------------------------------------
def _pick(candidates: np.ndarray, strength: np.ndarray, min_gap: int) -> np.ndarray:
    """Keep strongest candidates first, dropping any closer than ``min_gap`` to a kept one."""
    order = sorted(range(len(candidates)), key=lambda i: (-strength[i], candidates[i]))
    kept: list[int] = []
    for i in order:
        c = candidates[i]
        if all(abs(c - k) >= min_gap for k in kept):
            kept.append(int(c))
    return np.array(sorted(kept), dtype=np.int64)


def onset_envelope(values: np.ndarray) -> np.ndarray:
    energy = (np.asarray(values, dtype=np.float64) ** 2).sum(axis=1)
    env = np.zeros_like(energy)
    env[1:] = np.maximum(energy[1:] - energy[:-1], 0.0)
    return env


def detect_music_beats(m, min_gap: int = 4) -> BeatList:
    """Local maxima of the onset envelope above mean + 0.5 std."""
    values = m.values
    if values.shape[0] < 3:
        raise ValueError("need at least 3 music frames")
    env = onset_envelope(values)
    thr = env.mean() + 0.5 * env.std()
    tol = 1e-9 * (abs(env.mean()) + 1e-12)
    t = np.arange(1, len(env) - 1)
    peak = (env[t] > env[t - 1]) & (env[t] >= env[t + 1]) & (env[t] > thr + tol)
    cand = t[peak]
    return BeatList(_pick(cand, env[cand], max(1, min_gap)), m.frame_rate)


def mean_joint_speed(P) -> np.ndarray:
    """Mean over joints of central-difference speed, indexed by frame (ends are NaN)."""
    pos, fps = _positions(P)
    s = np.full(pos.shape[0], np.nan)
    s[1:-1] = np.linalg.norm((pos[2:] - pos[:-2]) * (fps / 2.0), axis=-1).mean(axis=1)
    return s


def detect_motion_beats(P, min_gap: int = 16) -> BeatList:
    """Strict local minima of mean joint speed below mean - 0.5 std."""
    pos, fps = _positions(P)
    if pos.shape[0] < 3:
        raise ValueError("need at least 3 frames")
    s = mean_joint_speed(P)
    core = s[1:-1]
    thr = core.mean() - 0.5 * core.std()
    tol = 1e-9 * (abs(core.mean()) + 1e-12)
    t = np.arange(2, len(s) - 2)
    dip = (s[t] < s[t - 1]) & (s[t] < s[t + 1]) & (s[t] < thr - tol)
    cand = t[dip]
    return BeatList(_pick(cand, -s[cand], max(1, min_gap)), fps)


def beat_align_score(music: BeatList, motion: BeatList, sigma: float = 3.0) -> float:
    """Mean over music beats of exp(-d^2 / (2 sigma^2)), d = distance to the nearest motion beat.

    Distances are measured in music frames; motion beats are rescaled by the fps ratio.
    """
    if len(music) == 0:
        raise ValueError("no music beats")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if len(motion) == 0:
        return 0.0
    mb = music.frames.astype(np.float64)
    db = motion.frames.astype(np.float64) * (music.fps / motion.fps)
    d = np.abs(mb[:, None] - db[None, :]).min(axis=1)
    return float(np.mean(np.exp(-(d**2) / (2.0 * sigma**2))))


def sequence_bas(P, m, sigma: float = 3.0, min_gap: int = 4) -> float:
    """BAS of one motion against its music; 0 when the music has no detectable beat."""
    mb = detect_music_beats(m, min_gap)
    if len(mb) == 0:
        return 0.0
    ratio = P.fps / m.frame_rate
    return beat_align_score(mb, detect_motion_beats(P, int(round(min_gap * ratio))), sigma)


def evaluate_corpus(generated, reference, music, sigma: float = 3.0, min_gap: int = 4) -> MetricReport:
    if not generated or not reference:
        raise ValueError("generated and reference sets must be non-empty")
    if len(music) != len(generated):
        raise ValueError("need one music sequence per generated piece")
    gk = [kinetic_features(P) for P in generated]
    gg = [geometric_features(P) for P in generated]
    rk = [kinetic_features(P) for P in reference]
    rg = [geometric_features(P) for P in reference]
    bas = float(np.mean([sequence_bas(P, m, sigma, min_gap) for P, m in zip(generated, music)]))
    return MetricReport(fid(gk, rk), fid(gg, rg), diversity(gk), diversity(gg), bas)


def per_sequence_rows(generated, music, sigma: float = 3.0, min_gap: int = 4) -> list[dict]:
    rows = []
    for i, (P, m) in enumerate(zip(generated, music)):
        k = kinetic_features(P)
        rows.append({"index": i, "bas": sequence_bas(P, m, sigma, min_gap),
                     "mean_speed": float(k[0::3].mean()),
                     **{n: float(v) for n, v in zip(GeometricTemplates.NAMES, geometric_features(P))}})
    return rows

