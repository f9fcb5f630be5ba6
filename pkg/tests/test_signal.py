import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rhythmdance.data import synth_music
from rhythmdance.numerics import BatchNormState, ShapeError, activation, batchnorm, linear
from rhythmdance.signal import (
    MusicFeatureSequence,
    PhaseSpectrogram,
    StftConfig,
    build_rhythm_addend,
    center_crop,
    embed_phase,
    fuse,
    phase_dim,
    phase_features,
    stft_phase,
)

RECT = StftConfig(fft_len=16, hop=1, window="rectangular", pad="zero")


def dft_phase(frame: np.ndarray, k: int) -> float:
    n = len(frame)
    coeff = sum(frame[t] * np.exp(-2j * np.pi * k * t / n) for t in range(n))
    return float(np.angle(coeff))


def frame_at_origin(phi: PhaseSpectrogram, cfg: StftConfig, channel: int, k: int) -> float:
    # padding puts original sample 0 at the start of frame fft_len/2
    return phi.angles[cfg.fft_len // 2 // cfg.hop, channel * cfg.n_bins + k]


def test_zero_input_gives_zero_phase():
    phi = stft_phase(np.zeros((20, 3)))
    assert phi.angles.shape == (21, 3 * 9)
    assert not phi.angles.any()


@pytest.mark.parametrize("k", [1, 2, 3, 5, 7])
def test_pure_tone_phase_matches_brute_force_dft(k):
    t = np.arange(40)
    x = np.stack([np.cos(2 * np.pi * k * t / 16), np.sin(2 * np.pi * k * t / 16)], axis=1)
    phi = stft_phase(x, RECT)
    cos_phase, sin_phase = frame_at_origin(phi, RECT, 0, k), frame_at_origin(phi, RECT, 1, k)
    assert abs(cos_phase - 0.0) < 1e-9
    assert abs(sin_phase + np.pi / 2) < 1e-9
    assert abs(cos_phase - dft_phase(x[:16, 0], k)) < 1e-9
    assert abs(sin_phase - dft_phase(x[:16, 1], k)) < 1e-9


def test_every_frame_matches_brute_force_dft():
    x = np.random.default_rng(0).normal(size=(12, 2))
    cfg = StftConfig(fft_len=8, hop=2, window="hann", pad="reflect")
    phi = stft_phase(x, cfg)
    padded = np.pad(x, ((4, 4), (0, 0)), mode="reflect")
    win = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(8) / 8)
    for f in range(phi.n_frames):
        for c in range(2):
            seg = padded[f * 2 : f * 2 + 8, c] * win
            for k in range(cfg.n_bins):
                got = phi.angles[f, c * cfg.n_bins + k]
                want = dft_phase(seg, k)
                if abs(abs(want) - np.pi) < 1e-9:  # both conventions of the branch cut
                    assert abs(abs(got) - np.pi) < 1e-9
                else:
                    assert abs(got - want) < 1e-9


def test_shift_by_one_window_keeps_phase():
    t = np.arange(64)
    x = np.cos(2 * np.pi * 3 * t / 16 + 0.4)[:, None]
    a = stft_phase(x, RECT).angles
    b = stft_phase(np.roll(x, 16, axis=0), RECT).angles
    np.testing.assert_allclose(a[16:40], b[16:40], atol=1e-9)


@pytest.mark.parametrize("period", [4, 6, 8, 12])
def test_beat_periodic_input_gives_periodic_phase(period):
    music = synth_music(96, period, 2, 5, 0.0)
    cfg = StftConfig(fft_len=16, hop=1, window="rectangular", pad="reflect")
    phi = phase_features(music, cfg)
    half = cfg.fft_len // 2
    # frames whose windows lie fully inside the sequence
    inner = phi[half : len(music) - half]
    # angular distance: real-valued coefficients may land on either side of the branch cut at pi
    diff = np.angle(np.exp(1j * (inner[period:] - inner[:-period])))
    assert np.abs(diff).max() < 1e-6


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 30), st.integers(1, 3)), elements=st.floats(-1e3, 1e3)))
def test_phase_in_half_open_interval(x):
    a = stft_phase(x).angles
    assert (a > -np.pi).all() and (a <= np.pi).all()


def test_center_crop_examples():
    phi = np.arange(10)[:, None].astype(float)
    np.testing.assert_array_equal(center_crop(phi, 4)[:, 0], [3, 4, 5, 6])
    np.testing.assert_array_equal(center_crop(phi, 10), phi)
    np.testing.assert_array_equal(center_crop(np.arange(7)[:, None], 4)[:, 0], [1, 2, 3, 4])
    with pytest.raises(ValueError):
        center_crop(phi, 11)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.integers(0, 40))
def test_center_crop_idempotent(length, extra):
    phi = np.random.default_rng(length).normal(size=(length + extra, 2))
    once = center_crop(phi, length)
    np.testing.assert_array_equal(center_crop(once, length), once)


def test_phase_features_keep_length():
    x = np.random.default_rng(1).normal(size=(2, 23, 5))
    assert phase_features(x, StftConfig()).shape == (2, 23, phase_dim(5, StftConfig()))


def test_music_feature_validation():
    with pytest.raises(ValueError):
        MusicFeatureSequence(np.zeros((0, 3)), 7.5)
    with pytest.raises(ValueError):
        MusicFeatureSequence(np.array([[np.nan]]), 7.5)
    with pytest.raises(ValueError):
        StftConfig(fft_len=7)
    with pytest.raises(ValueError):
        StftConfig(hop=17)


# embedding and fusion ---------------------------------------------------------------
def test_embed_phase_zero_weights():
    bn = BatchNormState.create(4)
    out = embed_phase(np.ones((5, 6)), np.zeros((6, 4)), np.zeros(4), bn, "train")
    np.testing.assert_array_equal(out.data, 0.0)


def test_embed_phase_is_composition():
    rng = np.random.default_rng(2)
    phi, W, b = rng.uniform(-np.pi, np.pi, (7, 6)), rng.normal(size=(6, 4)), rng.normal(size=4)
    bn1, bn2 = BatchNormState.create(4), BatchNormState.create(4)
    got = embed_phase(phi, W, b, bn1, "train").data
    want = activation(batchnorm(linear(phi, W, b), bn2, "train"), "relu").data
    np.testing.assert_allclose(got, want, atol=1e-12, rtol=0)
    assert (got >= 0).all()


def test_rhythm_addend_layout():
    x = np.random.default_rng(3).normal(size=(5, 4))
    out = build_rhythm_addend(x).data
    assert out.shape == (15, 4)
    for s in range(3):
        np.testing.assert_array_equal(out[5 * s : 5 * s + 5], x)
    one = build_rhythm_addend(x[:1]).data
    assert (one == one[0]).all()


def test_fuse():
    rng = np.random.default_rng(4)
    xi, xphi = rng.normal(size=(12, 3)), rng.normal(size=(4, 3))
    xg = build_rhythm_addend(xphi).data
    np.testing.assert_array_equal(fuse(xi, np.zeros_like(xi)).data, xi)
    np.testing.assert_array_equal(fuse(np.zeros_like(xg), xg).data, xg)
    out = fuse(xi, xg).data
    for s in range(3):
        np.testing.assert_allclose(out[4 * s : 4 * s + 4], xi[4 * s : 4 * s + 4] + xphi, atol=0)
    with pytest.raises(ShapeError):
        fuse(xi, xg[:-1])
