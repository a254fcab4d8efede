"""Sequence records, their on-disk format, and the seeded synthetic corpus.

On disk a corpus is a directory::

    manifest.json         corpus-level: schema, seed, profile hash, counts
    seq_0000.jsonl        line 1: sequence manifest (emotion, identity, ...)
                          lines 2..: one frame per line
    seq_0000.wav          16-bit mono PCM at 16 kHz

Frame lines carry ``n``, ``audio`` (28 MFCC), ``landmarks`` (147 x 3 flattened,
canonical frame), ``pose`` (yaw, pitch, roll, tx, ty, tz), ``gaze``
(u_left, u_right, v) and optionally ``keypoints`` (10 x 3 flattened).

The synthetic generator draws every sequence from an emotion motion profile:
eye opening, brow height, smile, head-pose bias and oscillation and a gaze-zone
Markov chain. The mouth opening is a fixed function of the audio envelope, so a
learnable audio-to-lip mapping exists by construction. Every sequence starts
from the identity's neutral face and head pose and eases into the emotion with
a first-order onset ``1 - exp(-n / onset_frames)``.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import audiofeat as af
from . import gaze as gz
from . import geometry as geo
from .errors import ConfigError, DataError

SCHEMA = "emocue-corpus/1"
EMOTIONS = ("neutral", "angry", "contempt", "disgust", "fear", "happy", "sad", "surprised")
N_KEYPOINTS = 10
KEYPOINT_NOISE = 0.01
ONSET_FRAMES = 8.0
MOUTH_OPEN_MAX = 0.07
SAMPLES_PER_FRAME = af.SAMPLE_RATE / af.FPS


class CorpusError(DataError):
    pass


@dataclass(frozen=True)
class EmotionMotionProfile:
    emotion: int
    eye_opening_scale: float
    brow_raise: float
    smile: float
    mouth_gain: float
    pose_bias: tuple[float, float, float]  # yaw, pitch, roll
    pose_amplitude: tuple[float, float, float]
    pose_frequency: tuple[float, float, float]  # Hz
    gaze_zone_probs: tuple[float, ...]
    gaze_dwell: tuple[int, int] = (15, 40)  # frames, inclusive range

    @property
    def name(self) -> str:
        return EMOTIONS[self.emotion]

    def validate(self) -> None:
        if not 0 <= self.emotion < len(EMOTIONS):
            raise ConfigError(f"unknown emotion id {self.emotion}")
        scales = [self.eye_opening_scale, self.mouth_gain, *self.pose_amplitude, *self.pose_frequency]
        if min(scales) <= 0:
            raise ConfigError(f"{self.name}: profile scales must be positive")
        p = np.asarray(self.gaze_zone_probs)
        if p.shape != (gz.ZONES,) or p.min() < 0 or abs(p.sum() - 1.0) > 1e-9:
            raise ConfigError(f"{self.name}: gaze_zone_probs must be a distribution over {gz.ZONES} zones")
        lo, hi = self.gaze_dwell
        if not 1 <= lo <= hi:
            raise ConfigError(f"{self.name}: bad dwell range {self.gaze_dwell}")


def _probs(**zones: float) -> tuple[float, ...]:
    p = [0.0] * gz.ZONES
    for key, value in zones.items():
        p[int(key[1:])] = value
    return tuple(p)


DEFAULT_PROFILES = (
    EmotionMotionProfile(0, 1.00, 0.000, 0.0, 1.00, (0.0, 0.0, 0.0), (0.06, 0.04, 0.02), (0.25, 0.40, 0.20),
                         _probs(z2=0.5, z1=0.15, z3=0.15, z7=0.1, z6=0.05, z8=0.05)),
    EmotionMotionProfile(1, 0.80, -0.025, -0.3, 1.20, (0.0, -0.08, 0.0), (0.08, 0.07, 0.03), (0.50, 0.70, 0.30),
                         _probs(z2=0.6, z7=0.2, z1=0.1, z3=0.1)),
    EmotionMotionProfile(2, 0.55, -0.005, 0.4, 0.70, (0.08, 0.16, 0.05), (0.05, 0.03, 0.02), (0.20, 0.30, 0.15),
                         _probs(z0=0.2, z1=0.15, z2=0.1, z3=0.15, z4=0.2, z5=0.1, z9=0.1)),
    EmotionMotionProfile(3, 0.70, -0.020, -0.5, 0.80, (-0.06, 0.05, -0.04), (0.06, 0.04, 0.03), (0.30, 0.40, 0.20),
                         _probs(z5=0.15, z6=0.2, z7=0.2, z8=0.2, z2=0.1, z9=0.15)),
    EmotionMotionProfile(4, 1.30, 0.020, -0.2, 0.90, (0.0, -0.05, 0.0), (0.10, 0.05, 0.04), (0.80, 0.90, 0.60),
                         tuple([0.1] * gz.ZONES), (6, 16)),
    EmotionMotionProfile(5, 0.85, 0.005, 1.0, 1.15, (0.0, 0.04, 0.03), (0.08, 0.06, 0.04), (0.40, 0.50, 0.30),
                         _probs(z2=0.6, z1=0.15, z3=0.15, z7=0.1)),
    EmotionMotionProfile(6, 0.75, 0.010, -0.6, 0.60, (0.0, -0.14, 0.0), (0.03, 0.02, 0.01), (0.15, 0.20, 0.10),
                         _probs(z7=0.4, z6=0.2, z8=0.2, z2=0.2)),
    EmotionMotionProfile(7, 1.50, 0.035, 0.0, 1.30, (0.0, 0.0, 0.0), (0.03, 0.02, 0.01), (0.30, 0.30, 0.20),
                         _probs(z2=0.8, z7=0.1, z1=0.05, z3=0.05), (20, 50)),
)


def validate_profiles(profiles) -> None:
    ids = [p.emotion for p in profiles]
    if len(set(ids)) != len(ids):
        raise ConfigError(f"duplicate emotion ids in profiles: {ids}")
    for p in profiles:
        p.validate()
    keys = [json.dumps(asdict(p) | {"emotion": 0}, sort_keys=True) for p in profiles]
    if len(set(keys)) != len(keys):
        raise ConfigError("emotion profiles must be distinct")


def profile_hash(profiles) -> str:
    blob = json.dumps([asdict(p) for p in profiles], sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def onset(n_frames: int) -> np.ndarray:
    return 1.0 - np.exp(-np.arange(n_frames) / ONSET_FRAMES)


# ---------------------------------------------------------------------------
# face template


@dataclass(frozen=True)
class IdentityShape:
    face_half_width: float = 0.5
    forehead: float = 0.70
    chin: float = 0.55
    eye_offset: float = 0.19
    eye_height: float = -0.17
    eye_half_width: float = 0.075
    eye_half_height: float = 0.032
    mouth_height: float = 0.26
    mouth_half_width: float = 0.14
    brow_gap: float = 0.09

    @classmethod
    def random(cls, rng: np.random.Generator) -> "IdentityShape":
        base = cls()
        jitter = lambda v, rel: float(v * (1.0 + rng.uniform(-rel, rel)))  # noqa: E731
        return cls(
            face_half_width=jitter(base.face_half_width, 0.08),
            forehead=jitter(base.forehead, 0.08),
            chin=jitter(base.chin, 0.08),
            eye_offset=jitter(base.eye_offset, 0.08),
            eye_height=jitter(base.eye_height, 0.08),
            eye_half_width=jitter(base.eye_half_width, 0.08),
            eye_half_height=jitter(base.eye_half_height, 0.1),
            mouth_height=jitter(base.mouth_height, 0.08),
            mouth_half_width=jitter(base.mouth_half_width, 0.08),
            brow_gap=jitter(base.brow_gap, 0.08),
        )


def _put(points: np.ndarray, name: str, xyz: np.ndarray) -> None:
    points[geo.group(name)] = xyz


def face_points(
    shape: IdentityShape,
    eye_scale: float = 1.0,
    mouth_open: float = 0.0,
    brow_raise: float = 0.0,
    smile: float = 0.0,
) -> np.ndarray:
    """Template 147-point face, irises centred in their eyes, nose tip at the
    origin. Not yet rescaled to the canonical width."""
    pts = np.zeros((geo.N_POINTS, 3))

    phi = np.arange(36) * (2.0 * np.pi / 36.0)
    cos = np.cos(phi)
    half_height = np.where(cos > 0, shape.forehead, shape.chin)
    jaw = np.clip(-cos, 0.0, None) * 0.6 * mouth_open
    _put(pts, "face_oval", np.stack([shape.face_half_width * np.sin(phi), -half_height * cos + jaw,
                                     np.full(36, -0.35)], axis=1))

    theta = np.pi + np.arange(16) * (np.pi / 8.0)
    h = shape.eye_half_height * eye_scale
    for name, side in (("right_eye", -1.0), ("left_eye", 1.0)):
        cx = side * shape.eye_offset
        x = cx - side * shape.eye_half_width * np.cos(theta)
        y = shape.eye_height - h * np.sin(theta)
        _put(pts, name, np.stack([x, y, np.full(16, -0.13)], axis=1))

    iris_ring = np.array([[0.0, 0.0], [0.022, 0.0], [0.0, -0.022], [-0.022, 0.0], [0.0, 0.022]])
    for name, side in (("right_iris", -1.0), ("left_iris", 1.0)):
        centre = np.array([side * shape.eye_offset, shape.eye_height])
        xy = centre + iris_ring
        _put(pts, name, np.column_stack([xy, np.full(5, -0.11)]))

    t = np.linspace(-1.0, 1.0, 5)
    for name, side in (("right_brow", -1.0), ("left_brow", 1.0)):
        x = side * shape.eye_offset + 0.085 * t
        top = shape.eye_height - shape.brow_gap - brow_raise - 0.025 * (1.0 - t**2)
        xy = np.concatenate([np.column_stack([x, top]), np.column_stack([x[::-1], top[::-1] + 0.02])])
        _put(pts, name, np.column_stack([xy, np.full(10, -0.1)]))

    nose_y = np.array([shape.eye_height, -0.13, -0.10, -0.07, -0.045, -0.02, 0.0, 0.03, 0.05])
    nose_z = np.array([-0.08, -0.06, -0.045, -0.03, -0.015, -0.005, 0.0, -0.02, -0.04])
    _put(pts, "nose", np.column_stack([np.zeros(9), nose_y, nose_z]))

    theta = np.pi + np.arange(20) * (np.pi / 10.0)
    s, c = np.sin(theta), np.cos(theta)
    width = shape.mouth_half_width * (1.0 + 0.08 * smile)
    lift = 0.03 * smile * c**2
    for name, wscale, up, low in (
        ("lips_outer", 1.0, 0.03 + 0.2 * mouth_open, 0.035 + mouth_open),
        ("lips_inner", 0.8, 0.002 + 0.2 * mouth_open, 0.002 + 0.8 * mouth_open),
    ):
        y = shape.mouth_height - np.where(s > 0, up, low) * s - lift
        z = -0.05 - 0.03 * np.abs(c)
        _put(pts, name, np.column_stack([wscale * width * c, y, z]))
    return pts


def set_gaze(points: np.ndarray, label: gz.GazeLabel, rng: np.random.Generator | None = None) -> np.ndarray:
    """Move each iris to its labelled cell (centre plus up to 25% cell jitter)."""
    pts = geo.place_pupils(points, label)
    if rng is None:
        return pts
    left_grid, right_grid = geo.eye_grids(pts)
    for iris, grid in (("left_iris", left_grid), ("right_iris", right_grid)):
        offset = rng.uniform(-0.25, 0.25, size=2) * [grid.cell_width, grid.cell_height]
        pts[geo.group(iris), :2] += offset
    return pts


def identity_frame(shape: IdentityShape, canonical_width: float = geo.DEFAULT_CANONICAL_WIDTH) -> np.ndarray:
    """Neutral normalized frame of an identity with centred gaze; the usual
    starting frame for synthesis."""
    pts = set_gaze(face_points(shape), gz.CENTER_GAZE)
    return geo.renormalize(pts, canonical_width)


# ---------------------------------------------------------------------------
# audio


def synthetic_audio(rng: np.random.Generator, n_frames: int) -> tuple[af.Waveform, np.ndarray]:
    """Voiced syllable train; returns the waveform and its per-sample envelope."""
    n = int(round(n_frames * SAMPLES_PER_FRAME))
    sr = af.SAMPLE_RATE
    env = np.zeros(n)
    t = rng.uniform(0.1, 0.2)
    while t < n / sr:
        dur = rng.uniform(0.12, 0.30)
        a, b = int(t * sr), min(int((t + dur) * sr), n)
        if b > a:
            phase = np.linspace(0.0, np.pi, int((t + dur) * sr) - a)[: b - a]
            env[a:b] = rng.uniform(0.5, 1.0) * np.sin(phase) ** 2
        t += dur + (rng.uniform(0.3, 0.6) if rng.random() < 0.15 else rng.uniform(0.03, 0.2))
    time = np.arange(n) / sr
    f0 = rng.uniform(100.0, 220.0) * (1.0 + 0.05 * np.sin(2 * np.pi * rng.uniform(2, 5) * time))
    phase = 2 * np.pi * np.cumsum(f0) / sr
    voiced = sum(np.sin(k * phase) / k for k in range(1, 9))
    signal = 0.3 * env * (voiced / 2.0 + 0.1 * rng.standard_normal(n)) + 0.003 * rng.standard_normal(n)
    return af.Waveform(af.quantize_pcm16(signal)), env


def envelope_at_frames(env: np.ndarray, n_frames: int) -> np.ndarray:
    centres = np.minimum(af.frame_centers(n_frames), len(env) - 1)
    return env[centres]


# ---------------------------------------------------------------------------
# records


@dataclass
class SequenceRecord:
    emotion: int
    identity: int
    audio: np.ndarray  # (T, 28)
    landmarks: np.ndarray  # (T, 147, 3)
    pose: np.ndarray  # (T, 6)
    gaze: np.ndarray  # (T, 3) ints
    keypoints: np.ndarray | None = None  # (T, 10, 3)
    seed: int = 0
    index: int = 0
    fps: int = af.FPS
    waveform: af.Waveform | None = field(default=None, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.landmarks)

    @property
    def gaze_labels(self) -> list[gz.GazeLabel]:
        return [gz.GazeLabel(*map(int, row)) for row in self.gaze]

    def validate(self, where: str = "record") -> None:
        T = len(self.landmarks)
        shapes = {
            "audio": (self.audio, (T, af.N_MFCC)),
            "landmarks": (self.landmarks, (T, geo.N_POINTS, 3)),
            "pose": (self.pose, (T, 6)),
            "gaze": (self.gaze, (T, 3)),
        }
        if self.keypoints is not None:
            shapes["keypoints"] = (self.keypoints, (T, N_KEYPOINTS, 3))
        for name, (arr, want) in shapes.items():
            if np.shape(arr) != want:
                raise CorpusError(f"{where}: {name} has shape {np.shape(arr)}, expected {want}")
            if not np.all(np.isfinite(arr)):
                raise CorpusError(f"{where}: non-finite values in {name}")
        if T == 0:
            raise CorpusError(f"{where}: empty sequence")
        if not 0 <= self.emotion < len(EMOTIONS):
            raise CorpusError(f"{where}: unknown emotion {self.emotion}")
        if self.fps != af.FPS:
            raise CorpusError(f"{where}: fps {self.fps} != {af.FPS}")
        g = self.gaze
        if g.min() < 0 or g[:, :2].max() >= gz.ZONES or np.any(g[:, 2] != g[:, 0] + gz.ZONES * g[:, 1]):
            bad = int(np.argmax((g[:, 2] != g[:, 0] + gz.ZONES * g[:, 1]) | (g[:, :2] >= gz.ZONES).any(1)))
            raise CorpusError(f"{where}: frame {bad}: inconsistent gaze label {g[bad].tolist()}")


@dataclass
class Corpus:
    records: list[SequenceRecord]
    manifest: dict


# ---------------------------------------------------------------------------
# generation


def keypoint_projection(seed: int) -> np.ndarray:
    """Fixed random linear map from a scaled relocated frame (441) to 10 x 3
    latent keypoints; stands in for the pretrained keypoint encoder."""
    rng = np.random.default_rng([seed, 7_000_003])
    return rng.normal(0.0, 1.0 / math.sqrt(geo.N_POINTS * 3), size=(N_KEYPOINTS * 3, geo.N_POINTS * 3))


def project_keypoints(relocated: np.ndarray, projection: np.ndarray, scale_factor: float) -> np.ndarray:
    flat = np.asarray(relocated).reshape(*np.shape(relocated)[:-2], -1) / scale_factor
    return (flat @ projection.T).reshape(*flat.shape[:-1], N_KEYPOINTS, 3)


def _gaze_track(profile: EmotionMotionProfile, rng: np.random.Generator, n_frames: int) -> np.ndarray:
    p = np.asarray(profile.gaze_zone_probs)
    labels = np.empty((n_frames, 3), dtype=int)
    n = 0
    while n < n_frames:
        left = int(rng.choice(gz.ZONES, p=p))
        right = left
        if rng.random() < 0.15:
            row, col = divmod(left, gz.COLS)
            col = min(max(col + (1 if rng.random() < 0.5 else -1), 0), gz.COLS - 1)
            right = row * gz.COLS + col
        dwell = int(rng.integers(profile.gaze_dwell[0], profile.gaze_dwell[1] + 1))
        labels[n : n + dwell] = (left, right, gz.encode_joint(left, right))
        n += dwell
    return labels


def _pose_track(profile: EmotionMotionProfile, rng: np.random.Generator, n_frames: int) -> np.ndarray:
    ramp = onset(n_frames)
    time = np.arange(n_frames) / af.FPS
    pose = np.zeros((n_frames, 6))
    for k in range(3):
        freq = profile.pose_frequency[k] * rng.uniform(0.9, 1.1)
        wave = profile.pose_amplitude[k] * np.sin(2 * np.pi * freq * time + rng.uniform(0, 2 * np.pi))
        pose[:, k] = ramp * (profile.pose_bias[k] + wave)
    for k, amp in zip(range(3, 6), (1.5, 1.0, 0.5)):
        freq = rng.uniform(0.1, 0.4)
        pose[:, k] = ramp * amp * np.sin(2 * np.pi * freq * time + rng.uniform(0, 2 * np.pi))
    return pose


def expected_eye_opening(shape: IdentityShape, profile: EmotionMotionProfile, n_frames: int) -> float:
    """Closed-form mean vertical lid gap (canonical units) of one sequence."""
    ramp = onset(n_frames)
    scale = 1.0 + (profile.eye_opening_scale - 1.0) * ramp
    width = 2.0 * shape.face_half_width * math.sin(math.radians(80.0))
    return float(np.mean(2.0 * shape.eye_half_height * scale / width))


def expected_pitch(profile: EmotionMotionProfile, n_frames: int) -> float:
    """Mean pitch over random oscillation phases."""
    return float(profile.pose_bias[1] * onset(n_frames).mean())


def generate_sequence(
    profile: EmotionMotionProfile,
    shape: IdentityShape,
    rng: np.random.Generator,
    n_frames: int,
    projection: np.ndarray | None = None,
    canonical_width: float = geo.DEFAULT_CANONICAL_WIDTH,
    scale_factor: float = geo.DEFAULT_SCALE_FACTOR,
) -> SequenceRecord:
    waveform, env = synthetic_audio(rng, n_frames)
    audio = af.align_lengths(af.mfcc_sequence(waveform), n_frames)
    mouth = profile.mouth_gain * MOUTH_OPEN_MAX * envelope_at_frames(env, n_frames)
    ramp = onset(n_frames)
    gaze = _gaze_track(profile, rng, n_frames)
    pose = _pose_track(profile, rng, n_frames)

    landmarks = np.empty((n_frames, geo.N_POINTS, 3))
    eye_rows = np.concatenate([geo.group("left_eye"), geo.group("right_eye")])
    iris_rows = geo.pupil_indices()
    for n in range(n_frames):
        pts = face_points(
            shape,
            eye_scale=1.0 + (profile.eye_opening_scale - 1.0) * ramp[n],
            mouth_open=mouth[n],
            brow_raise=profile.brow_raise * ramp[n],
            smile=profile.smile * ramp[n],
        )
        label = gz.GazeLabel(*map(int, gaze[n]))
        pts = set_gaze(pts, label, rng)
        noise = rng.normal(0.0, 0.0015, size=pts.shape)
        noise[eye_rows] *= 0.3
        noise[iris_rows] = 0.0
        pts = geo.renormalize(pts + noise, canonical_width)
        if geo.gaze_from_landmarks(pts) != label:
            pts = geo.place_pupils(pts, label)
        landmarks[n] = pts

    keypoints = None
    if projection is not None:
        relocated = np.stack(
            [
                geo.relocate(landmarks[n], geo.HeadPose.from_array(pose[n]), gz.GazeLabel(*map(int, gaze[n])),
                             scale_factor).points
                for n in range(n_frames)
            ]
        )
        keypoints = project_keypoints(relocated, projection, scale_factor)
        keypoints = keypoints + rng.normal(0.0, KEYPOINT_NOISE, size=keypoints.shape)

    return SequenceRecord(
        emotion=profile.emotion,
        identity=-1,
        audio=audio,
        landmarks=landmarks,
        pose=pose,
        gaze=gaze,
        keypoints=keypoints,
        waveform=waveform,
    )


def identity_pool(seed: int, n_identities: int) -> list[IdentityShape]:
    return [IdentityShape.random(np.random.default_rng([seed, 1_000_000 + i])) for i in range(n_identities)]


def generate_synthetic(
    profiles=DEFAULT_PROFILES,
    n_sequences: int = 24,
    length: int = 90,
    seed: int = 0,
    n_identities: int = 6,
    canonical_width: float = geo.DEFAULT_CANONICAL_WIDTH,
    scale_factor: float = geo.DEFAULT_SCALE_FACTOR,
    with_keypoints: bool = True,
) -> Corpus:
    """``n_sequences`` sequences per profile, each ``length`` frames at 30 FPS."""
    profiles = tuple(profiles)
    validate_profiles(profiles)
    if length < 30:
        raise ConfigError(f"sequence length must be >= 30 frames, got {length}")
    if n_sequences < 1 or n_identities < 1:
        raise ConfigError("need at least one sequence and one identity")
    shapes = identity_pool(seed, n_identities)
    projection = keypoint_projection(seed) if with_keypoints else None
    records = []
    for profile in profiles:
        for j in range(n_sequences):
            index = len(records)
            rng = np.random.default_rng([seed, index])
            identity = j % n_identities
            rec = generate_sequence(profile, shapes[identity], rng, length, projection, canonical_width, scale_factor)
            rec.identity, rec.seed, rec.index = identity, seed, index
            records.append(rec)
    manifest = {
        "schema": SCHEMA,
        "seed": seed,
        "fps": af.FPS,
        "profile_hash": profile_hash(profiles),
        "n_sequences": len(records),
        "n_frames": sum(len(r) for r in records),
        "sequence_length": length,
        "n_identities": n_identities,
        "emotions": {p.name: sum(r.emotion == p.emotion for r in records) for p in profiles},
        "canonical_width": canonical_width,
        "scale_factor": scale_factor,
        "keypoint_projection_seed": seed if with_keypoints else None,
        "keypoint_noise": KEYPOINT_NOISE if with_keypoints else None,
    }
    return Corpus(records, manifest)


# ---------------------------------------------------------------------------
# serialization


def _header(rec: SequenceRecord) -> dict:
    return {
        "type": "sequence",
        "schema": SCHEMA,
        "emotion": int(rec.emotion),
        "emotion_name": EMOTIONS[rec.emotion],
        "identity": int(rec.identity),
        "seed": int(rec.seed),
        "index": int(rec.index),
        "fps": int(rec.fps),
        "n_frames": len(rec),
        "has_keypoints": rec.keypoints is not None,
    }


def write_sequence(path, rec: SequenceRecord) -> None:
    rec.validate(str(path))
    with open(path, "w") as fh:
        fh.write(json.dumps(_header(rec)) + "\n")
        for n in range(len(rec)):
            frame = {
                "n": n,
                "audio": rec.audio[n].tolist(),
                "landmarks": rec.landmarks[n].reshape(-1).tolist(),
                "pose": rec.pose[n].tolist(),
                "gaze": [int(v) for v in rec.gaze[n]],
            }
            if rec.keypoints is not None:
                frame["keypoints"] = rec.keypoints[n].reshape(-1).tolist()
            fh.write(json.dumps(frame) + "\n")


def write_corpus(corpus: Corpus, directory) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for rec in corpus.records:
        stem = f"seq_{rec.index:04d}"
        write_sequence(directory / f"{stem}.jsonl", rec)
        if rec.waveform is not None:
            af.write_wav(directory / f"{stem}.wav", rec.waveform)
        entries.append({"file": f"{stem}.jsonl", "emotion": int(rec.emotion), "identity": int(rec.identity),
                        "n_frames": len(rec)})
    manifest = dict(corpus.manifest, sequences=entries)
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def read_sequence(path) -> SequenceRecord:
    """Parse and validate one sequence file; errors name the line and byte offset."""
    path = Path(path)
    raw = path.read_bytes()
    lines = raw.split(b"\n")
    offset = 0
    header = None
    frames = []
    for lineno, line in enumerate(lines, 1):
        start = offset
        offset += len(line) + 1
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except ValueError as exc:
            raise CorpusError(f"{path}:{lineno}: unparseable record at byte offset {start} ({exc.msg})") from None
        if header is None:
            if obj.get("type") != "sequence" or obj.get("schema") != SCHEMA:
                raise CorpusError(f"{path}:{lineno}: missing or foreign sequence header at byte offset {start}")
            header = obj
            continue
        try:
            if obj["n"] != len(frames):
                raise CorpusError(f"{path}:{lineno}: frame index {obj['n']}, expected {len(frames)}")
            g = [int(v) for v in obj["gaze"]]
            if len(g) != 3 or not (0 <= g[0] < gz.ZONES and 0 <= g[1] < gz.ZONES) or g[2] != g[0] + gz.ZONES * g[1]:
                raise CorpusError(f"{path}:{lineno}: gaze {g} violates v = u_left + {gz.ZONES} * u_right")
            frames.append(obj)
        except (KeyError, TypeError) as exc:
            raise CorpusError(f"{path}:{lineno}: malformed frame record ({exc})") from None
    if header is None:
        raise CorpusError(f"{path}: empty file")
    if not raw.endswith(b"\n") or len(frames) != header["n_frames"]:
        raise CorpusError(
            f"{path}: truncated at byte offset {len(raw)}: {len(frames)} of {header['n_frames']} frames"
        )
    if not 0 <= header["emotion"] < len(EMOTIONS):
        raise CorpusError(f"{path}:1: unknown emotion {header['emotion']}")
    T = len(frames)
    try:
        rec = SequenceRecord(
            emotion=int(header["emotion"]),
            identity=int(header["identity"]),
            audio=np.array([f["audio"] for f in frames], dtype=float),
            landmarks=np.array([f["landmarks"] for f in frames], dtype=float).reshape(T, geo.N_POINTS, 3),
            pose=np.array([f["pose"] for f in frames], dtype=float),
            gaze=np.array([f["gaze"] for f in frames], dtype=int),
            keypoints=(
                np.array([f["keypoints"] for f in frames], dtype=float).reshape(T, N_KEYPOINTS, 3)
                if header.get("has_keypoints")
                else None
            ),
            seed=int(header["seed"]),
            index=int(header["index"]),
            fps=int(header["fps"]),
        )
    except (KeyError, ValueError) as exc:
        raise CorpusError(f"{path}: frame arrays misaligned ({exc})") from None
    rec.validate(str(path))
    wav = path.with_suffix(".wav")
    if wav.exists():
        rec.waveform = af.read_wav(wav)
    return rec


def load_corpus(path) -> Corpus:
    """Load a corpus directory (or a single sequence file) and validate it."""
    path = Path(path)
    if path.is_file():
        return Corpus([read_sequence(path)], {"schema": SCHEMA})
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise CorpusError(f"{path}: no corpus manifest found")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("schema") != SCHEMA:
        raise CorpusError(f"{manifest_path}: unsupported schema {manifest.get('schema')!r}")
    records = [read_sequence(path / entry["file"]) for entry in manifest["sequences"]]
    return Corpus(records, manifest)


def split(records, train_fraction: float = 0.8, seed: int = 0):
    """Partition whole sequences into (train, heldout).

    The training side always holds ``round(train_fraction * N)`` sequences.
    Within each emotion the sequences are shuffled and ranked by their
    fractional position, and the lowest positions overall go to training, so
    each emotion is split in close to the same proportion.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError(f"train_fraction must lie in (0, 1), got {train_fraction}")
    records = list(records)
    rng = np.random.default_rng(seed)
    keys = np.empty(len(records))
    for k in sorted({r.emotion for r in records}):
        members = np.array([i for i, r in enumerate(records) if r.emotion == k])
        order = members[rng.permutation(len(members))]
        keys[order] = (np.arange(len(order)) + 0.5) / len(order)
    ranking = np.lexsort((rng.random(len(records)), keys))
    n_train = int(round(train_fraction * len(records)))
    train = sorted(ranking[:n_train].tolist())
    heldout = sorted(ranking[n_train:].tolist())
    return [records[i] for i in train], [records[i] for i in heldout]
