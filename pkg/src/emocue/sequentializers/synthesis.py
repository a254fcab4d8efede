"""Free-running synthesis: audio + emotion + identity frame -> per-frame
landmarks C_n, pose r_n, gaze label, relocated landmarks R_n and latent
keypoints K_n, plus the on-disk bundle format."""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .. import audiofeat as af
from .. import geometry as geo
from .. import gaze as gz
from ..corpus import EMOTIONS, N_KEYPOINTS, SequenceRecord, project_keypoints
from ..errors import DataError, StructuralError, UsageError
from ..neural import no_grad, softmax
from .models import audio_windows
from .training import TrainedModel, relocated_sequence

BUNDLE_SCHEMA = "emocue-bundle/1"
FRAMES_FILE = "frames.jsonl"
MANIFEST_FILE = "manifest.json"


@dataclass
class SynthesisBundle:
    landmarks: np.ndarray  # (T, 147, 3) normalized C_n
    pose: np.ndarray  # (T, 6) r_n, angles wrapped
    gaze: np.ndarray  # (T, 3) ints (u_left, u_right, v)
    relocated: np.ndarray  # (T, 147, 3) R_n
    keypoints: np.ndarray  # (T, 10, 3) K_n
    manifest: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.landmarks)

    def validate(self) -> None:
        T = len(self.landmarks)
        want = {
            "landmarks": (T, geo.N_POINTS, 3),
            "pose": (T, 6),
            "gaze": (T, 3),
            "relocated": (T, geo.N_POINTS, 3),
            "keypoints": (T, N_KEYPOINTS, 3),
        }
        for name, shape in want.items():
            arr = getattr(self, name)
            if np.shape(arr) != shape:
                raise StructuralError(f"bundle {name} has shape {np.shape(arr)}, expected {shape}")
            if not np.all(np.isfinite(arr)):
                raise DataError(f"bundle {name} holds non-finite values")

    @property
    def gaze_labels(self) -> list[gz.GazeLabel]:
        return [gz.GazeLabel(*map(int, row)) for row in self.gaze]

    def recompose(self, scale_factor: float | None = None) -> np.ndarray:
        """R_n recomputed from (C_n, r_n, gaze_n)."""
        s = self.manifest.get("scale_factor", geo.DEFAULT_SCALE_FACTOR) if scale_factor is None else scale_factor
        return np.stack(
            [
                geo.relocate(c, geo.HeadPose.from_array(r), label, s).points
                for c, r, label in zip(self.landmarks, self.pose, self.gaze_labels)
            ]
        )


def wrap_pose(pose: np.ndarray) -> np.ndarray:
    """Wrap the three angle columns of (..., 6) poses into (-pi, pi]."""
    out = np.array(pose, dtype=float)
    out[..., :3] = np.pi - np.mod(np.pi - out[..., :3], 2.0 * np.pi)
    return out


def _require(trained: TrainedModel | None, stage: str) -> TrainedModel:
    if trained is None:
        raise UsageError(f"synthesis needs a trained {stage} checkpoint")
    if trained.meta.get("kind") not in (None, stage):
        raise UsageError(f"expected a {stage} model, got {trained.meta.get('kind')!r}")
    return trained


def _features(audio) -> np.ndarray:
    if isinstance(audio, af.Waveform):
        return af.mfcc_sequence(audio)
    feats = np.asarray(audio, dtype=float)
    if feats.ndim != 2 or feats.shape[1] != af.N_MFCC:
        raise StructuralError(f"audio features must be (T, {af.N_MFCC}), got {feats.shape}")
    return feats


def synthesize_batch(
    stage1: TrainedModel,
    stage2: TrainedModel,
    audio,
    emotions,
    identities,
    initial_poses=None,
    initial_gazes=None,
    renormalize: bool = False,
) -> list[SynthesisBundle]:
    """Run B syntheses of equal length in lockstep.

    ``audio`` is a list of waveforms or (T, 28) feature arrays; identities are
    normalized (147, 3) frames. Every generator is fed its own previous output.
    """
    stage1, stage2 = _require(stage1, "stage1"), _require(stage2, "stage2")
    feats = [_features(a) for a in audio]
    B = len(feats)
    if B == 0:
        raise UsageError("nothing to synthesize")
    T = len(feats[0])
    if T == 0 or any(len(f) != T for f in feats):
        raise DataError("batched synthesis needs non-empty audio of equal frame count")
    emotions = np.asarray(emotions, dtype=int).reshape(B)
    identities = np.asarray(identities, dtype=float)
    if identities.shape != (B, geo.N_POINTS, 3):
        raise StructuralError(f"identity frames must be ({B}, {geo.N_POINTS}, 3), got {identities.shape}")
    poses0 = np.zeros((B, 6)) if initial_poses is None else np.stack(
        [p.as_array() if isinstance(p, geo.HeadPose) else np.asarray(p, float) for p in initial_poses]
    )
    gazes0 = [gz.CENTER_GAZE] * B if initial_gazes is None else list(initial_gazes)

    m1, m2 = stage1.model, stage2.model
    scale = m1.config.scale_factor
    C = np.empty((T, B, geo.N_POINTS, 3))
    R = np.empty((T, B, 6))
    G = np.empty((T, B, 3), dtype=int)
    reloc = np.empty((T, B, geo.N_POINTS, 3))
    K = np.empty((T, B, N_KEYPOINTS, 3))

    with no_grad():
        windows = audio_windows(np.stack([stage1.standardizer(f) for f in feats]), m1.config.audio_context)
        codes = m1.encode_audio(windows)
        e = m1.emotion(emotions)
        states = m1.initial_states(B)
        prev_l, prev_p = identities, poses0
        prev_g = np.array([g.v for g in gazes0])
        for n in range(T):
            _, out, states = m1.step(prev_l, prev_p, prev_g, codes, n, e, states)
            c = out["landmark"].data.reshape(B, geo.N_POINTS, 3)
            if renormalize:
                c = np.stack([geo.renormalize(x) for x in c])
            r = wrap_pose(out["pose"].data)
            probs = softmax(out["gaze"], axis=-1).data
            labels = [gz.classify_gaze(p) for p in probs]
            C[n], R[n] = c, r
            G[n] = [label.as_tuple() for label in labels]
            reloc[n] = [geo.relocate(c[b], geo.HeadPose.from_array(r[b]), labels[b], scale).points for b in range(B)]
            prev_l, prev_p, prev_g = c, r, G[n, :, 2]

        projection = stage2.extra.get("projection")
        start = np.stack(
            [geo.relocate(identities[b], geo.HeadPose.from_array(poses0[b]), gazes0[b], scale).points for b in range(B)]
        )
        if projection is not None:
            prev_k = project_keypoints(start, projection, scale)
        else:
            prev_k = np.zeros((B, N_KEYPOINTS, 3))
        windows2 = audio_windows(np.stack([stage2.standardizer(f) for f in feats]), m2.config.audio_context)
        codes2 = m2.keypoint.encode_audio(windows2)
        e2 = m2.emotion(emotions)
        state = m2.keypoint.cell.initial_state(B)
        for n in range(T):
            _, out, state = m2.keypoint.step((prev_k, reloc[n]), codes2[n], e2, state)
            K[n] = out.data.reshape(B, N_KEYPOINTS, 3)
            prev_k = K[n]

    bundles = []
    for b in range(B):
        manifest = {
            "schema": BUNDLE_SCHEMA,
            "emotion": int(emotions[b]),
            "emotion_name": EMOTIONS[int(emotions[b])] if emotions[b] < len(EMOTIONS) else str(emotions[b]),
            "n_frames": T,
            "fps": af.FPS,
            "scale_factor": scale,
            "renormalized": bool(renormalize),
            "checkpoints": {"stage1": stage1.digest, "stage2": stage2.digest},
            "audio_features_sha256": hashlib.sha256(np.ascontiguousarray(feats[b]).tobytes()).hexdigest(),
        }
        bundle = SynthesisBundle(C[:, b].copy(), R[:, b].copy(), G[:, b].copy(), reloc[:, b].copy(), K[:, b].copy(),
                                 manifest)
        bundle.validate()
        bundles.append(bundle)
    return bundles


def synthesize(
    stage1: TrainedModel,
    stage2: TrainedModel,
    audio,
    emotion: int,
    identity,
    initial_pose: geo.HeadPose = geo.HeadPose(),
    initial_gaze: gz.GazeLabel = gz.CENTER_GAZE,
    seed: int | None = None,
    renormalize: bool = False,
) -> SynthesisBundle:
    """One synthesis; ``seed`` is recorded in the manifest for provenance (the
    decoding itself is deterministic)."""
    bundle = synthesize_batch(stage1, stage2, [audio], [emotion], [identity], [initial_pose], [initial_gaze],
                              renormalize)[0]
    bundle.manifest["seed"] = seed
    return bundle


def bundle_from_record(rec: SequenceRecord, scale_factor: float = geo.DEFAULT_SCALE_FACTOR) -> SynthesisBundle:
    """Ground-truth bundle of a corpus sequence (for evaluation)."""
    rec.validate()
    keypoints = rec.keypoints if rec.keypoints is not None else np.zeros((len(rec), N_KEYPOINTS, 3))
    manifest = {
        "schema": BUNDLE_SCHEMA,
        "emotion": rec.emotion,
        "emotion_name": EMOTIONS[rec.emotion],
        "n_frames": len(rec),
        "fps": rec.fps,
        "scale_factor": scale_factor,
        "source": {"corpus_seed": rec.seed, "index": rec.index},
    }
    return SynthesisBundle(rec.landmarks.copy(), rec.pose.copy(), np.array(rec.gaze, dtype=int),
                           relocated_sequence(rec, scale_factor), np.array(keypoints, dtype=float), manifest)


# ---------------------------------------------------------------------------
# serialization


def _frame_lines(bundle: SynthesisBundle) -> bytes:
    lines = []
    for n in range(len(bundle)):
        record = {
            "n": n,
            "landmarks": bundle.landmarks[n].tolist(),
            "pose": bundle.pose[n].tolist(),
            "gaze": [int(x) for x in bundle.gaze[n]],
            "relocated": bundle.relocated[n].tolist(),
            "keypoints": bundle.keypoints[n].tolist(),
        }
        lines.append(json.dumps(record, separators=(",", ":")))
    return ("\n".join(lines) + "\n").encode()


def bundle_hash(bundle: SynthesisBundle) -> str:
    """Content hash over the frame records and the manifest (minus the hash)."""
    manifest = {k: v for k, v in bundle.manifest.items() if k != "bundle_sha256"}
    h = hashlib.sha256(_frame_lines(bundle))
    h.update(json.dumps(manifest, sort_keys=True).encode())
    return h.hexdigest()


def write_bundle(bundle: SynthesisBundle, directory) -> Path:
    bundle.validate()
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    (directory / FRAMES_FILE).write_bytes(_frame_lines(bundle))
    manifest = dict(bundle.manifest, bundle_sha256=bundle_hash(bundle))
    (directory / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return directory


def read_bundle(directory) -> SynthesisBundle:
    directory = Path(directory)
    frames_path, manifest_path = directory / FRAMES_FILE, directory / MANIFEST_FILE
    if not frames_path.is_file() or not manifest_path.is_file():
        raise DataError(f"{directory}: not a synthesis bundle (need {FRAMES_FILE} and {MANIFEST_FILE})")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("schema") != BUNDLE_SCHEMA:
        raise DataError(f"{manifest_path}: unsupported schema {manifest.get('schema')!r}")
    cols: dict[str, list] = {k: [] for k in ("landmarks", "pose", "gaze", "relocated", "keypoints")}
    for lineno, line in enumerate(frames_path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            if record["n"] != len(cols["pose"]):
                raise DataError(f"{frames_path}:{lineno}: frame index {record['n']} out of order")
            for k in cols:
                cols[k].append(record[k])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"{frames_path}:{lineno}: malformed frame record ({exc})") from None
    if not cols["pose"]:
        raise DataError(f"{frames_path}: bundle has no frames")
    try:
        bundle = SynthesisBundle(
            np.array(cols["landmarks"], dtype=float),
            np.array(cols["pose"], dtype=float),
            np.array(cols["gaze"], dtype=int),
            np.array(cols["relocated"], dtype=float),
            np.array(cols["keypoints"], dtype=float),
            {k: v for k, v in manifest.items() if k != "bundle_sha256"},
        )
    except ValueError as exc:
        raise DataError(f"{frames_path}: ragged frame arrays ({exc})") from None
    bundle.validate()
    if manifest.get("n_frames") not in (None, len(bundle)):
        raise DataError(f"{directory}: manifest promises {manifest['n_frames']} frames, found {len(bundle)}")
    return bundle
