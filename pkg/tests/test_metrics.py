import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import linalg

from rhythmdance.codec import PoseSequence
from rhythmdance.data import joint_split
from rhythmdance.metrics import (
    CSV_HEADER,
    BeatList,
    GeometricTemplates,
    MetricReport,
    beat_align_score,
    detect_motion_beats,
    detect_music_beats,
    diversity,
    evaluate_corpus,
    fid,
    geometric_features,
    kinetic_features,
    per_sequence_rows,
    sequence_bas,
    template_hits,
)
from rhythmdance.signal import MusicFeatureSequence
from rhythmdance.skeleton import JOINT, REST_POSE


def pose(frames, fps=30.0):
    frames = np.asarray(frames, dtype=float)
    return PoseSequence(frames.reshape(frames.shape[0], -1), fps, joint_split())


def rest(T):
    return np.repeat(REST_POSE[None], T, axis=0)


# kinetic ---------------------------------------------------------------------------
def test_static_pose_has_zero_kinetics():
    assert not kinetic_features(pose(rest(10))).any()


def test_constant_velocity_joint():
    pos = rest(20)
    v = np.array([0.3, -0.1, 0.2])
    pos[:, 4] += np.arange(20)[:, None] * v / 30.0
    k = kinetic_features(pose(pos)).reshape(-1, 3)
    np.testing.assert_allclose(k[4], [np.linalg.norm(v), 0.0, 0.0], atol=1e-12)
    assert not np.delete(k, 4, axis=0).any()


def test_kinetics_translation_invariant():
    pos = rest(12) + np.random.default_rng(0).normal(size=(12, 11, 3)) * 0.1
    a = kinetic_features(pose(pos))
    b = kinetic_features(pose(pos + np.array([5.0, -2.0, 7.0])))
    np.testing.assert_allclose(a, b, atol=1e-9)
    with pytest.raises(ValueError):
        kinetic_features(pose(rest(2)))


# geometric ----------------------------------------------------------------------------
def test_coincident_hands_template():
    pos = rest(6)
    pos[:, JOINT["r_hand"]] = pos[:, JOINT["l_hand"]]
    assert geometric_features(pose(pos))[GeometricTemplates.NAMES.index("hands_together")] == 1.0


def test_rest_pose_meets_no_template():
    assert not geometric_features(pose(rest(5))).any()


def test_template_average_matches_recount():
    pos = rest(30) + np.random.default_rng(1).normal(size=(30, 11, 3)) * 0.6
    hits = template_hits(pose(pos))
    counts = [sum(bool(hits[t, k]) for t in range(30)) / 30 for k in range(8)]
    np.testing.assert_array_equal(geometric_features(pose(pos)), counts)


def test_distance_templates_rotation_invariant():
    pos = rest(20) + np.random.default_rng(2).normal(size=(20, 11, 3)) * 0.5
    R = linalg.expm(np.array([[0, -0.3, 0.2], [0.3, 0, -0.5], [-0.2, 0.5, 0]]))
    idx = [GeometricTemplates.NAMES.index(n) for n in ("hands_together", "feet_apart")]
    a = template_hits(pose(pos))[:, idx]
    b = template_hits(pose(pos @ R.T))[:, idx]
    np.testing.assert_array_equal(a, b)


def test_missing_joints_rejected():
    with pytest.raises(ValueError):
        template_hits(PoseSequence(np.zeros((4, 6)), 30.0, ((0,), (1,))))


# fid and diversity -----------------------------------------------------------------
def test_fid_identical_sets():
    x = np.random.default_rng(3).normal(size=(20, 4))
    assert abs(fid(x, x)) < 1e-8


def test_fid_one_dimensional_analytic():
    a = np.array([[-1.0], [1.0]]) / math.sqrt(2)
    assert abs(fid(a, a + 1.0) - 1.0) < 1e-9


def test_fid_matches_closed_form():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(50, 3))
    b = rng.normal(size=(40, 3)) @ rng.normal(size=(3, 3)) + 0.5
    ma, mb, ca, cb = a.mean(0), b.mean(0), np.cov(a, rowvar=False), np.cov(b, rowvar=False)
    want = np.sum((ma - mb) ** 2) + np.trace(ca + cb - 2 * linalg.sqrtm(ca @ cb).real)
    assert abs(fid(a, b) - want) < 1e-6
    assert abs(fid(a, b) - fid(b, a)) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_fid_non_negative(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=(4, 6)), rng.normal(size=(5, 6))  # rank-deficient covariances
    assert fid(a, b) >= -1e-8


def test_fid_errors():
    with pytest.raises(ValueError):
        fid(np.ones((3, 2)), np.ones((3, 3)))
    with pytest.raises(ValueError):
        fid(np.ones((1, 2)), np.ones((3, 2)))


def test_diversity_examples():
    assert diversity(np.ones((3, 4))) == 0.0
    assert diversity(np.array([[0.0, 0.0], [3.0, 4.0]])) == 5.0
    x = np.random.default_rng(5).normal(size=(4, 6))
    pairs = [np.linalg.norm(x[i] - x[j]) for i, j in itertools.combinations(range(4), 2)]
    assert abs(diversity(x) - sum(pairs) / 6) < 1e-12
    with pytest.raises(ValueError):
        diversity(x[:1])


@settings(max_examples=30, deadline=None)
@given(st.permutations(range(6)))
def test_diversity_permutation_invariant(perm):
    x = np.random.default_rng(6).normal(size=(6, 3))
    assert abs(diversity(x) - diversity(x[list(perm)])) < 1e-12


# beats -------------------------------------------------------------------------------
def test_music_beats_from_impulses(small_corpus):
    for s in small_corpus:
        got = detect_music_beats(s.music, min_gap=6).frames
        assert len(got) == len(s.true_beats)
        assert np.abs(got - s.true_beats.frames).max() <= 1


def test_constant_music_has_no_beats():
    assert len(detect_music_beats(MusicFeatureSequence(np.ones((20, 3)), 7.5))) == 0


def test_sinusoidal_motion_beats():
    P = 32
    t = np.arange(160)
    pos = rest(160)
    pos[:, :, 0] += np.sin(2 * np.pi * t / P)[:, None]
    beats = detect_motion_beats(pose(pos), min_gap=P // 4).frames
    expected = [P / 4 + k * P / 2 for k in range(10) if 2 <= P / 4 + k * P / 2 <= 157]
    assert len(beats) == len(expected)
    assert np.abs(beats - expected).max() <= 1
    assert (np.diff(beats) > 0).all()


def test_constant_velocity_has_no_motion_beats():
    pos = rest(40) + np.arange(40)[:, None, None] * np.array([0.01, 0.0, 0.0])
    assert len(detect_motion_beats(pose(pos))) == 0


def test_motion_beats_from_generator(small_corpus):
    for s in small_corpus:
        got = detect_motion_beats(s.motion, min_gap=24).frames / 4.0
        want = s.true_beats.frames
        assert len(got) == len(want)
        assert np.abs(got - want).max() <= 1


def test_bas_examples():
    b = BeatList([3, 10, 20], 7.5)
    assert beat_align_score(b, b) == 1.0
    assert abs(beat_align_score(BeatList([10], 7.5), BeatList([13], 7.5), 3.0) - math.exp(-0.5)) < 1e-12
    music, motion = BeatList([2, 9, 15], 7.5), BeatList([4, 11, 30], 7.5)
    want = (math.exp(-4 / 18) + math.exp(-4 / 18) + math.exp(-16 / 18)) / 3
    assert abs(beat_align_score(music, motion, 3.0) - want) < 1e-12
    assert beat_align_score(music, BeatList([], 7.5)) == 0.0
    with pytest.raises(ValueError):
        beat_align_score(BeatList([], 7.5), motion)


def test_bas_rescales_motion_frames():
    assert beat_align_score(BeatList([5], 7.5), BeatList([20], 30.0)) == 1.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(-40, 40), min_size=1, max_size=6, unique=True), st.integers(1, 10))
def test_bas_bounded_and_monotone(offsets, extra):
    # one music beat; every motion beat moves away from it
    centre = 100
    music = BeatList([centre], 7.5)
    near = BeatList(sorted(centre + o for o in offsets), 7.5)
    far = BeatList(sorted(centre + o + (extra if o >= 0 else -extra) for o in offsets), 7.5)
    a, b = beat_align_score(music, near), beat_align_score(music, far)
    assert 0.0 <= b <= a <= 1.0


def test_beat_list_validation():
    with pytest.raises(ValueError):
        BeatList([3, 3], 7.5)
    with pytest.raises(ValueError):
        BeatList([-1], 7.5)


# corpus level ----------------------------------------------------------------------
def test_reference_against_itself(small_corpus):
    motions = [s.motion for s in small_corpus]
    report = evaluate_corpus(motions, motions, [s.music for s in small_corpus], min_gap=6)
    assert abs(report.fid_k) < 1e-8 and abs(report.fid_g) < 1e-8
    assert all(np.isfinite(getattr(report, f)) for f in CSV_HEADER.split(","))
    assert 0.0 <= report.bas <= 1.0


def test_true_motion_beats_shuffled_baseline(small_corpus):
    rng = np.random.default_rng(7)
    real, shuffled = [], []
    for s in small_corpus:
        real.append(sequence_bas(s.motion, s.music, min_gap=6))
        frames = s.motion.frames[rng.permutation(s.motion.n_frames)]
        shuffled.append(sequence_bas(PoseSequence(frames, s.motion.fps, s.motion.joint_split), s.music, min_gap=6))
    assert np.mean(real) > np.mean(shuffled)


def test_report_formatting():
    r = MetricReport(1.0, 2.0, 3.0, 4.0, 0.5)
    assert r.csv_line() == "1.000000,2.000000,3.000000,4.000000,0.500000"
    assert "BAS" in r.table()


def test_per_sequence_rows(small_corpus):
    rows = per_sequence_rows([s.motion for s in small_corpus[:3]], [s.music for s in small_corpus[:3]])
    assert [r["index"] for r in rows] == [0, 1, 2]
    assert set(GeometricTemplates.NAMES) <= set(rows[0])
