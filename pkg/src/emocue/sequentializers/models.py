"""Emotion-conditioned auto-regressive cue generators.

Every generator shares one layout. A bidirectional LSTM encodes the audio
window ``a[n - w : n + w + 1]`` (fully known at synthesis time), a linear code
summarises the previous cue, and a causal LSTM cell consumes
``[cue code, audio code, emotion embedding]``. The step feature is
``f_n = [h_n, cue code]`` and the cue itself is a linear read-out of ``f_n``;
the cue code in ``f_n`` gives the read-out a direct linear path to the
previous frame.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .. import audiofeat as af
from .. import geometry as geo
from .. import gaze as gz
from ..corpus import EMOTIONS, N_KEYPOINTS
from ..errors import UsageError
from ..neural import (
    MLP,
    BiLSTMEncoder,
    Embedding,
    EmotionEmbedding,
    Linear,
    LSTMCell,
    Module,
    Tensor,
    concat,
    softmax,
)

LANDMARK_DIM = geo.N_POINTS * 3
POSE_DIM = 6
KEYPOINT_DIM = N_KEYPOINTS * 3


@dataclass(frozen=True)
class ModelConfig:
    hidden: int = 128
    audio_hidden: int = 32
    audio_context: int = 2  # frames on each side of n
    emotion_dim: int = 16
    n_emotions: int = len(EMOTIONS)
    landmark_code: int = 64
    pose_code: int = 16
    gaze_code: int = 16
    keypoint_code: int = 32
    relocated_code: int = 64
    classifier_hidden: int = 64
    scale_factor: float = geo.DEFAULT_SCALE_FACTOR
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def window(self) -> int:
        return 2 * self.audio_context + 1


def audio_windows(features, context: int) -> np.ndarray:
    """(B, T, F) -> (T, B, 2*context+1, F), zero beyond both ends."""
    f = np.asarray(features, dtype=float)
    B, T, F = f.shape
    padded = np.zeros((B, T + 2 * context, F))
    padded[:, context : context + T] = f
    idx = np.arange(T)[:, None] + np.arange(2 * context + 1)[None, :]
    return padded[:, idx].transpose(1, 0, 2, 3)


class CueSequentializer(Module):
    def __init__(self, code_dim: int, out_dim: int, cfg: ModelConfig, rng: np.random.Generator):
        self.audio = BiLSTMEncoder(af.N_MFCC, cfg.audio_hidden, rng)
        self.cell = LSTMCell(code_dim + 2 * cfg.audio_hidden + cfg.emotion_dim, cfg.hidden, rng)
        self.head = Linear(cfg.hidden + code_dim, out_dim, rng)
        self.feature_dim = cfg.hidden + code_dim

    def encode(self, prev) -> Tensor:
        raise NotImplementedError

    def encode_audio(self, windows) -> Tensor:
        """(T, B, W, F) windows -> (T, B, 2 * audio_hidden) codes."""
        w = np.asarray(windows) if not isinstance(windows, Tensor) else windows.data
        T, B = w.shape[:2]
        return self.audio(w.reshape(T * B, *w.shape[2:])).reshape(T, B, -1)

    def step(self, prev, audio_code: Tensor, emotion: Tensor, state):
        """One auto-regressive step; returns (feature f_n, raw output, new state)."""
        code = self.encode(prev)
        h, c = self.cell(concat([code, audio_code, emotion], axis=-1), state)
        feature = concat([h, code], axis=-1)
        return feature, self.head(feature), (h, c)


class LandmarkSequentializer(CueSequentializer):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.code = Linear(LANDMARK_DIM, cfg.landmark_code, rng)
        super().__init__(cfg.landmark_code, LANDMARK_DIM, cfg, rng)

    def encode(self, prev) -> Tensor:
        p = prev if isinstance(prev, Tensor) else Tensor(prev)
        return self.code(p.reshape(p.shape[0], LANDMARK_DIM))


class PoseSequentializer(CueSequentializer):
    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.code = Linear(POSE_DIM, cfg.pose_code, rng)
        super().__init__(cfg.pose_code, POSE_DIM, cfg, rng)

    def encode(self, prev) -> Tensor:
        return self.code(prev)


class GazeSequentializer(CueSequentializer):
    """Previous joint label enters through a learned embedding; the read-out
    is the logit layer ``M`` of the 100-way gaze classifier."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.code = Embedding(gz.JOINT_CLASSES, cfg.gaze_code, rng)
        super().__init__(cfg.gaze_code, gz.JOINT_CLASSES, cfg, rng)

    def encode(self, prev) -> Tensor:
        return self.code(prev)


class KeypointSequentializer(CueSequentializer):
    """``prev`` is the pair (K_{n-1}, R_n); relocated frames are divided by the
    image scale factor before encoding."""

    def __init__(self, cfg: ModelConfig, rng: np.random.Generator):
        self.scale_factor = cfg.scale_factor
        self.keypoint_code = Linear(KEYPOINT_DIM, cfg.keypoint_code, rng)
        self.relocated_code = Linear(LANDMARK_DIM, cfg.relocated_code, rng)
        super().__init__(cfg.keypoint_code + cfg.relocated_code, KEYPOINT_DIM, cfg, rng)

    def encode(self, prev) -> Tensor:
        keypoints, relocated = prev
        k = keypoints if isinstance(keypoints, Tensor) else Tensor(np.asarray(keypoints, dtype=float))
        r = relocated if isinstance(relocated, Tensor) else Tensor(np.asarray(relocated, dtype=float))
        B = k.shape[0]
        return concat(
            [
                self.keypoint_code(k.reshape(B, KEYPOINT_DIM)),
                self.relocated_code(r.reshape(B, LANDMARK_DIM) / self.scale_factor),
            ],
            axis=-1,
        )


class EmotionClassifier(MLP):
    """Collaborative classifier over ``[f_l; f_r; f_g]``."""

    def __call__(self, features) -> Tensor:
        if not isinstance(features, (list, tuple)) or len(features) != 3 or any(f is None for f in features):
            raise UsageError("emotion classifier needs the landmark, pose and gaze features of one step")
        return super().__call__(concat(list(features), axis=-1))


class Stage1Model(Module):
    def __init__(self, cfg: ModelConfig = ModelConfig()):
        rng = np.random.default_rng([cfg.seed, 1])
        self.config = cfg
        self.emotion = EmotionEmbedding(cfg.emotion_dim, cfg.n_emotions, rng)
        self.landmark = LandmarkSequentializer(cfg, rng)
        self.pose = PoseSequentializer(cfg, rng)
        self.gaze = GazeSequentializer(cfg, rng)
        feature_dim = self.landmark.feature_dim + self.pose.feature_dim + self.gaze.feature_dim
        self.classifier = EmotionClassifier(feature_dim, cfg.classifier_hidden, cfg.n_emotions, rng)

    def initial_states(self, batch: int):
        return {name: getattr(self, name).cell.initial_state(batch) for name in ("landmark", "pose", "gaze")}

    def encode_audio(self, windows) -> dict[str, Tensor]:
        return {name: getattr(self, name).encode_audio(windows) for name in ("landmark", "pose", "gaze")}

    def step(self, prev_landmarks, prev_pose, prev_gaze, audio_codes, n: int, emotion: Tensor, states):
        """One synchronous step of the three generators.

        Returns ``(features, outputs, states)`` where features/outputs are dicts
        keyed by cue; the gaze output is the logit vector.
        """
        features, outputs, new_states = {}, {}, {}
        for name, prev in (("landmark", prev_landmarks), ("pose", prev_pose), ("gaze", prev_gaze)):
            f, out, st = getattr(self, name).step(prev, audio_codes[name][n], emotion, states[name])
            features[name], outputs[name], new_states[name] = f, out, st
        return features, outputs, new_states

    def classify(self, features: dict[str, Tensor]) -> Tensor:
        return self.classifier([features.get("landmark"), features.get("pose"), features.get("gaze")])

    @staticmethod
    def gaze_probabilities(logits: Tensor) -> Tensor:
        return softmax(logits, axis=-1)


class Stage2Model(Module):
    def __init__(self, cfg: ModelConfig = ModelConfig()):
        rng = np.random.default_rng([cfg.seed, 2])
        self.config = cfg
        self.emotion = EmotionEmbedding(cfg.emotion_dim, cfg.n_emotions, rng)
        self.keypoint = KeypointSequentializer(cfg, rng)


# ---------------------------------------------------------------------------
# single-step entry points; ``window`` is a (B, 2w+1, 28) standardized
# audio window centred on frame n, ``emotions`` a length-B label array


def _step(seq: CueSequentializer, emotion_table: EmotionEmbedding, prev, window, emotions, state):
    w = np.asarray(window, dtype=float)
    if w.ndim == 2:
        w = w[None]
    code = seq.encode_audio(w[None])[0]
    B = code.shape[0]
    state = seq.cell.initial_state(B) if state is None else state
    return seq.step(prev, code, emotion_table(np.asarray(emotions).reshape(B)), state)


def landmark_step(model: Stage1Model, prev, window, emotions, state=None):
    """(f_l, C_n (B, 147, 3), state)."""
    f, out, state = _step(model.landmark, model.emotion, prev, window, emotions, state)
    return f, out.reshape(out.shape[0], geo.N_POINTS, 3), state


def pose_step(model: Stage1Model, prev, window, emotions, state=None):
    """(f_r, raw r_n (B, 6), state); angles are wrapped only when decoding."""
    return _step(model.pose, model.emotion, prev, window, emotions, state)


def gaze_step(model: Stage1Model, prev_labels, window, emotions, state=None):
    """(f_g, p_n (B, 100) probabilities, state)."""
    f, logits, state = _step(model.gaze, model.emotion, np.asarray(prev_labels).reshape(-1), window, emotions, state)
    return f, softmax(logits, axis=-1), state


def keypoint_step(model: Stage2Model, prev_keypoints, relocated, window, emotions, state=None):
    """(f_k, K_n (B, 10, 3), state)."""
    f, out, state = _step(model.keypoint, model.emotion, (prev_keypoints, relocated), window, emotions, state)
    return f, out.reshape(out.shape[0], N_KEYPOINTS, 3), state


def classify_emotion(model: Stage1Model, f_l, f_r, f_g) -> Tensor:
    """Emotion logits (B, K) from the three cue features of one step."""
    return model.classifier([f_l, f_r, f_g])
