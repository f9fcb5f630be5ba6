import numpy as np
import pytest

from rhythmdance.codec import (
    HALVES,
    CodecConfig,
    CodeSequence,
    PoseSequence,
    codec_state,
    decode,
    encode,
    init_codec,
    load_codec,
    quantize,
    reconstruction_error,
    train_codec,
    windows,
)
from rhythmdance.data import joint_split
from rhythmdance.numerics.gradcheck import NonFiniteLoss


def test_quantize_nearest_and_ties():
    book = np.array([[0.0, 0.0], [1.0, 1.0]])
    assert quantize(np.array([0.9, 1.1]), book)[0] == 1
    assert quantize(np.array([0.5, 0.5]), book)[0] == 0
    entries = np.random.default_rng(0).normal(size=(16, 4))
    np.testing.assert_array_equal(quantize(entries, entries), np.arange(16))


def identity_codec(k=8, seed=0):
    """Encoder and decoder are exact identities on window vectors (ReLU(x) - ReLU(-x) = x)."""
    split = joint_split()
    lam = 2
    dims = {h: lam * 3 * len(split[i]) for i, h in enumerate(HALVES)}
    cfg = CodecConfig(lam=lam, k_cb=k, c_code=max(dims.values()), hidden=2 * max(dims.values()))
    codec = init_codec(cfg, split, np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    for h, w in dims.items():
        # pad the smaller half: the latent width equals the larger window
        c, hid = cfg.c_code, cfg.hidden
        s = codec.store
        eye_in = np.zeros((w, c))
        eye_in[:, :w] = np.eye(w)
        s[f"{h}.enc.W1"].data[:] = np.hstack([eye_in, -eye_in, np.zeros((w, hid - 2 * c))])
        s[f"{h}.enc.b1"].data[:] = 0.0
        s[f"{h}.enc.W2"].data[:] = np.vstack([np.eye(c), -np.eye(c), np.zeros((hid - 2 * c, c))])
        s[f"{h}.enc.b2"].data[:] = 0.0
        s[f"{h}.dec.W1"].data[:] = np.hstack([np.eye(c), -np.eye(c), np.zeros((c, hid - 2 * c))])
        s[f"{h}.dec.b1"].data[:] = 0.0
        s[f"{h}.dec.W2"].data[:] = np.vstack([eye_in.T, -eye_in.T, np.zeros((hid - 2 * c, w))])
        s[f"{h}.dec.b2"].data[:] = 0.0
        book = np.zeros((k, c))
        book[:, :w] = rng.normal(size=(k, w))
        s[f"{h}.codebook"].data[:] = book
    return codec


def test_round_trip_with_exact_decoder():
    codec = identity_codec()
    codes = np.random.default_rng(2).integers(0, 8, size=(2, 10))
    up, low = CodeSequence(codes[0], "upper", 2), CodeSequence(codes[1], "lower", 2)
    P = decode(up, low, codec)
    assert P.n_frames == 20
    u2, l2 = encode(P, codec)
    np.testing.assert_array_equal(u2.codes, codes[0])
    np.testing.assert_array_equal(l2.codes, codes[1])


def test_decode_shapes_and_determinism():
    codec = identity_codec()
    one = CodeSequence([3], "upper", 2)
    P = decode(one, CodeSequence([5], "lower", 2), codec)
    assert P.frames.shape == (2, 33)
    Q = decode(one, CodeSequence([5], "lower", 2), codec)
    assert P.frames.tobytes() == Q.frames.tobytes()
    with pytest.raises(ValueError):
        decode(one, CodeSequence([5, 5], "lower", 2), codec)
    with pytest.raises(IndexError):
        decode(CodeSequence([8], "upper", 2), CodeSequence([0], "lower", 2), codec)


def test_encode_requires_divisible_length():
    codec = identity_codec()
    with pytest.raises(ValueError):
        encode(PoseSequence(np.zeros((5, 33)), 30.0, joint_split()), codec)
    with pytest.raises(ValueError):
        windows(np.zeros((5, 3)), 2)


def test_halves_are_independent():
    codec = identity_codec()
    P = PoseSequence(np.random.default_rng(3).normal(size=(8, 33)), 30.0, joint_split())
    pos = P.positions().copy()
    pos[:, list(joint_split()[1])] += 10.0
    Q = PoseSequence(pos.reshape(8, -1), 30.0, joint_split())
    (u1, l1), (u2, l2) = encode(P, codec), encode(Q, codec)
    np.testing.assert_array_equal(u1.codes, u2.codes)
    assert not np.array_equal(l1.codes, l2.codes)


def test_pose_sequence_validation():
    with pytest.raises(ValueError):
        PoseSequence(np.zeros((4, 32)), 30.0, joint_split())
    with pytest.raises(ValueError):
        PoseSequence(np.zeros((4, 33)), 30.0, ((0, 1), (2, 3)))
    with pytest.raises(ValueError):
        PoseSequence(np.zeros((4, 33)), 30.0, ((), tuple(range(11))))


def test_constant_pose_is_learned():
    rng = np.random.default_rng(4)
    frames = np.tile(rng.normal(size=33), (16, 1))
    data = [PoseSequence(frames, 30.0, joint_split()) for _ in range(4)]
    codec, curve = train_codec(data, CodecConfig(k_cb=4, c_code=4, hidden=8, steps=200))
    assert reconstruction_error(codec, data) < 1e-6
    assert curve[-1] < 1e-6


def test_training_on_synthetic_corpus(small_corpus, trained_codec):
    codec, curve = trained_codec
    assert curve[-1] < curve[0]
    motions = [s.motion for s in small_corpus]
    assert reconstruction_error(codec, motions) < curve[-1] * 1.1
    for h in HALVES:
        assert np.isfinite(codec.store[f"{h}.codebook"].data).all()
    R = decode(*encode(motions[0], codec), codec)
    assert R.frames.shape == motions[0].frames.shape


def test_trained_round_trip_is_stable_in_pose_space(small_corpus, trained_codec):
    codec, _ = trained_codec
    for s in small_corpus[:4]:
        up, low = encode(s.motion, codec)
        R1 = decode(up, low, codec)
        R2 = decode(*encode(R1, codec), codec)
        scale = codec.norm["upper"][1]
        assert np.abs(R2.frames - R1.frames).max() < 0.5 * scale


def test_divergence_reports_step():
    frames = np.random.default_rng(5).normal(size=(8, 33))
    frames[3, 4] = np.inf
    data = [PoseSequence(frames, 30.0, joint_split())]
    with pytest.raises(NonFiniteLoss, match="step 0"), np.errstate(all="ignore"):
        train_codec(data, CodecConfig(k_cb=2, c_code=2, hidden=4, steps=5))


def test_state_round_trip(trained_codec, small_corpus):
    codec, _ = trained_codec
    again = load_codec(codec.cfg, codec.joint_split, codec_state(codec))
    P = small_corpus[0].motion
    for a, b in zip(encode(P, codec), encode(P, again)):
        np.testing.assert_array_equal(a.codes, b.codes)
