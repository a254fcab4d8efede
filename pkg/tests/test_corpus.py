import hashlib
import json
from dataclasses import replace

import numpy as np
import pytest

from emocue import corpus as cp
from emocue import geometry as geo
from emocue import gaze as gz
from emocue.errors import ConfigError, DataError

CONTEMPT, NEUTRAL, SURPRISED = 2, 0, 7


@pytest.fixture(scope="module")
def stats_corpus():
    return cp.generate_synthetic(n_sequences=16, length=90, seed=11, with_keypoints=False)


def _by_emotion(corpus, k):
    return [r for r in corpus.records if r.emotion == k]


def _within_3se(samples, target):
    samples = np.asarray(samples, dtype=float)
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    return abs(samples.mean() - target) <= 3 * se + 1e-12


# --- profiles -----------------------------------------------------------------


def test_default_profiles_are_valid_and_distinct():
    cp.validate_profiles(cp.DEFAULT_PROFILES)
    assert [p.name for p in cp.DEFAULT_PROFILES] == list(cp.EMOTIONS)


def test_duplicate_profile_ids_rejected():
    with pytest.raises(ConfigError):
        cp.generate_synthetic(profiles=cp.DEFAULT_PROFILES[:2] + (cp.DEFAULT_PROFILES[0],))


def test_non_positive_scale_rejected():
    bad = replace(cp.DEFAULT_PROFILES[0], eye_opening_scale=0.0)
    with pytest.raises(ConfigError):
        cp.validate_profiles((bad,))


def test_short_sequences_rejected():
    with pytest.raises(ConfigError):
        cp.generate_synthetic(length=29)


def test_archetypes_encoded_in_profiles():
    contempt, surprised = cp.DEFAULT_PROFILES[CONTEMPT], cp.DEFAULT_PROFILES[SURPRISED]
    assert contempt.eye_opening_scale < surprised.eye_opening_scale
    assert contempt.pose_bias[1] > surprised.pose_bias[1]
    assert int(np.argmax(surprised.gaze_zone_probs)) == gz.CENTER_ZONE


# --- generated statistics -------------------------------------------------------


def test_contempt_eyes_narrower_than_neutral(stats_corpus):
    mean_open = lambda k: np.mean([np.mean([geo.eye_opening(f) for f in r.landmarks])  # noqa: E731
                                   for r in _by_emotion(stats_corpus, k)])
    assert mean_open(CONTEMPT) < mean_open(NEUTRAL)


def test_surprise_modal_zone_is_centre(stats_corpus):
    counts = np.bincount(np.concatenate([r.gaze[:, 0] for r in _by_emotion(stats_corpus, SURPRISED)]),
                         minlength=gz.ZONES)
    assert int(np.argmax(counts)) == gz.CENTER_ZONE


@pytest.mark.parametrize("k", range(8))
def test_eye_opening_matches_closed_form(stats_corpus, k):
    shapes = cp.identity_pool(11, 6)
    profile = cp.DEFAULT_PROFILES[k]
    diffs = [np.mean([geo.eye_opening(f) for f in r.landmarks])
             - cp.expected_eye_opening(shapes[r.identity], profile, len(r))
             for r in _by_emotion(stats_corpus, k)]
    assert _within_3se(diffs, 0.0)


@pytest.mark.parametrize("k", range(8))
def test_pitch_matches_closed_form(stats_corpus, k):
    records = _by_emotion(stats_corpus, k)
    target = cp.expected_pitch(cp.DEFAULT_PROFILES[k], len(records[0]))
    assert _within_3se([r.pose[:, 1].mean() for r in records], target)


@pytest.mark.parametrize("k", range(8))
def test_gaze_histogram_matches_profile(stats_corpus, k):
    # The left eye is drawn straight from the profile (the right eye may
    # drift). Frames within one dwell share a draw, so the standard error
    # counts dwell segments, floored by the across-sequence spread.
    records = _by_emotion(stats_corpus, k)
    profile = cp.DEFAULT_PROFILES[k]
    fractions = np.array([np.bincount(r.gaze[:, 0], minlength=gz.ZONES) / len(r) for r in records])
    segments = sum(len(r) for r in records) / np.mean(profile.gaze_dwell)
    for z, p in enumerate(profile.gaze_zone_probs):
        se = max(np.sqrt(p * (1 - p) / segments), fractions[:, z].std(ddof=1) / np.sqrt(len(records)))
        assert abs(fractions[:, z].mean() - p) <= 3 * se + 1e-12, (k, z)


def test_mouth_opening_follows_audio_envelope():
    rng = np.random.default_rng([5, 0])
    rec = cp.generate_sequence(cp.DEFAULT_PROFILES[0], cp.IdentityShape(), rng, 60)
    rng = np.random.default_rng([5, 0])
    _, env = cp.synthetic_audio(rng, 60)
    target = cp.MOUTH_OPEN_MAX * cp.envelope_at_frames(env, 60)
    inner = geo.group("lips_inner")
    gap = rec.landmarks[:, inner, 1].max(1) - rec.landmarks[:, inner, 1].min(1)
    assert np.corrcoef(gap, target)[0, 1] > 0.95


def test_records_satisfy_invariants(small_corpus):
    for rec in small_corpus.records:
        rec.validate()
        assert rec.audio.shape == (30, 28) and rec.keypoints.shape == (30, 10, 3)
        for frame, label in zip(rec.landmarks, rec.gaze_labels):
            geo.check_normalized(frame)
            assert geo.gaze_from_landmarks(frame) == label


# --- serialization ------------------------------------------------------------------


def _digest(directory):
    h = hashlib.sha256()
    for path in sorted(directory.iterdir()):
        h.update(path.name.encode() + path.read_bytes())
    return h.hexdigest()


def test_same_seed_byte_identical(tmp_path):
    a = cp.write_corpus(cp.generate_synthetic(n_sequences=1, length=30, seed=9), tmp_path / "a")
    b = cp.write_corpus(cp.generate_synthetic(n_sequences=1, length=30, seed=9), tmp_path / "b")
    c = cp.write_corpus(cp.generate_synthetic(n_sequences=1, length=30, seed=10), tmp_path / "c")
    assert _digest(a) == _digest(b) != _digest(c)


def test_round_trip(tmp_path, small_corpus):
    loaded = cp.load_corpus(cp.write_corpus(small_corpus, tmp_path))
    assert len(loaded.records) == len(small_corpus.records)
    for a, b in zip(small_corpus.records, loaded.records):
        assert (a.emotion, a.identity, a.seed, a.index, a.fps) == (b.emotion, b.identity, b.seed, b.index, b.fps)
        assert np.array_equal(a.gaze, b.gaze) and b.gaze.dtype.kind == "i"
        for name in ("audio", "landmarks", "pose", "keypoints"):
            assert np.max(np.abs(getattr(a, name) - getattr(b, name))) <= 1e-12
        assert np.array_equal(a.waveform.samples, b.waveform.samples)
    m = loaded.manifest
    assert m["seed"] == 3 and m["fps"] == 30 and m["n_sequences"] == 16
    assert m["profile_hash"] == cp.profile_hash(cp.DEFAULT_PROFILES)


def _one_file(tmp_path, small_corpus):
    path = tmp_path / "seq.jsonl"
    cp.write_sequence(path, small_corpus.records[0])
    return path


def test_inconsistent_gaze_rejected_with_line(tmp_path, small_corpus):
    path = _one_file(tmp_path, small_corpus)
    lines = path.read_text().splitlines(keepends=True)
    frame = json.loads(lines[5])
    u_l, u_r, _ = frame["gaze"]
    frame["gaze"] = [u_l, u_r, (u_l + 10 * u_r + 1) % 100]
    lines[5] = json.dumps(frame) + "\n"
    path.write_text("".join(lines))
    with pytest.raises(DataError, match=r":6: gaze"):
        cp.read_sequence(path)


def test_truncated_file_names_byte_offset(tmp_path, small_corpus):
    path = _one_file(tmp_path, small_corpus)
    raw = path.read_bytes()
    path.write_bytes(raw[: len(raw) // 2])
    with pytest.raises(DataError, match="byte offset"):
        cp.read_sequence(path)


def test_truncated_at_line_boundary(tmp_path, small_corpus):
    path = _one_file(tmp_path, small_corpus)
    lines = path.read_bytes().splitlines(keepends=True)
    path.write_bytes(b"".join(lines[:-3]))
    with pytest.raises(DataError, match=f"byte offset {sum(map(len, lines[:-3]))}"):
        cp.read_sequence(path)


def test_unknown_emotion_rejected(tmp_path, small_corpus):
    path = _one_file(tmp_path, small_corpus)
    lines = path.read_text().splitlines(keepends=True)
    header = json.loads(lines[0])
    header["emotion"] = 8
    path.write_text(json.dumps(header) + "\n" + "".join(lines[1:]))
    with pytest.raises(DataError, match="emotion"):
        cp.read_sequence(path)


def test_misaligned_arrays_rejected(small_corpus):
    rec = replace(small_corpus.records[0], pose=small_corpus.records[0].pose[:-1])
    with pytest.raises(DataError):
        rec.validate()


def test_missing_manifest(tmp_path):
    with pytest.raises(DataError):
        cp.load_corpus(tmp_path)


# --- split ------------------------------------------------------------------------------


class _Stub:
    def __init__(self, i, emotion):
        self.index, self.emotion = i, emotion


def test_split_ten_sequences():
    records = [_Stub(i, i % 8) for i in range(10)]
    train, held = cp.split(records, 0.8, seed=0)
    assert (len(train), len(held)) == (8, 2)
    ids = sorted(r.index for r in train + held)
    assert ids == list(range(10))
    assert not {r.index for r in train} & {r.index for r in held}
    again = cp.split(records, 0.8, seed=0)
    assert [r.index for r in again[0]] == [r.index for r in train]


def test_split_is_stratified():
    records = [_Stub(i, i // 24) for i in range(192)]
    train, held = cp.split(records, 0.8, seed=0)
    per_emotion = np.bincount([r.emotion for r in held], minlength=8)
    assert len(held) == 38 and per_emotion.min() >= 4 and per_emotion.max() <= 5


@pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
def test_split_fraction_domain(fraction):
    with pytest.raises(ConfigError):
        cp.split([_Stub(0, 0), _Stub(1, 0)], fraction)
