"""Teacher-forced training of the stage-1 cue generators and the stage-2
keypoint generator, plus held-out evaluation."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .. import geometry as geo
from .. import gaze as gz
from ..corpus import SequenceRecord
from ..errors import DataError, StructuralError, UsageError
from ..neural import (
    Adam,
    cross_entropy,
    l1,
    load_checkpoint,
    no_grad,
    save_checkpoint,
    softmax,
    softmax_cross_entropy,
    stack,
    weighted_l1,
)
from ..neural.checkpoint import checkpoint_hash
from .models import ModelConfig, Stage1Model, Stage2Model, audio_windows

log = logging.getLogger(__name__)

STAGE1_COMPONENTS = ("landmarks", "pose", "gaze", "emotion")
STAGE2_COMPONENTS = ("keypoints",)
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    batch_size: int = 24
    chunk_length: int = 30
    learning_rate: float = 1e-3
    y_weight: float = 2.0
    train_fraction: float = 0.8
    seed: int = 0

    def validate(self) -> None:
        from ..errors import ConfigError

        if self.epochs < 0 or self.batch_size < 1 or self.chunk_length < 1:
            raise ConfigError("epochs >= 0, batch_size >= 1 and chunk_length >= 1 required")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.y_weight < 1:
            raise ConfigError("y_weight must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FeatureStandardizer:
    """Per-coefficient z-scoring of MFCC features, fitted on training data."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, records) -> "FeatureStandardizer":
        feats = np.concatenate([r.audio for r in records])
        return cls(feats.mean(axis=0), np.maximum(feats.std(axis=0), 1e-8))

    def __call__(self, features) -> np.ndarray:
        return (np.asarray(features, dtype=float) - self.mean) / self.std


@dataclass
class TrainedModel:
    """A model with everything needed to run it, as stored in a checkpoint."""

    model: Stage1Model | Stage2Model
    standardizer: FeatureStandardizer
    meta: dict
    extra: dict = field(default_factory=dict)  # e.g. the keypoint projection
    digest: str | None = None

    @property
    def config(self) -> ModelConfig:
        return self.model.config


@dataclass
class TrainingResult:
    trained: TrainedModel
    epochs: list[dict]  # per-epoch mean components (epoch 0 = first epoch)
    steps: list[dict]  # per-optimizer-step components
    heldout: list[SequenceRecord]


# ---------------------------------------------------------------------------
# data preparation


def check_records(records, need_keypoints: bool = False) -> None:
    """Raise a data error for an empty or misaligned corpus."""
    if not records:
        raise DataError("corpus contains no sequences")
    for i, rec in enumerate(records):
        rec.validate(f"sequence {i}")
        if need_keypoints and rec.keypoints is None:
            raise DataError(f"sequence {i}: no latent keypoints for stage-2 training")


def chunk_plan(lengths, chunk_length: int) -> list[tuple[int, int, int]]:
    """(record, start, length) chunks; the tail chunk is aligned to the end so
    every chunk of a record has the same length."""
    chunks = []
    for i, T in enumerate(lengths):
        L = min(chunk_length, T)
        starts = list(range(0, T - L + 1, L))
        if starts[-1] + L < T:
            starts.append(T - L)
        chunks += [(i, s, L) for s in starts]
    return chunks


def epoch_batches(chunks, batch_size: int, seed: int, epoch: int) -> list[list[tuple[int, int, int]]]:
    order = np.random.default_rng([seed, epoch]).permutation(len(chunks))
    batches: list[list] = []
    open_batch: dict[int, list] = {}
    for i in order:
        chunk = chunks[i]
        current = open_batch.setdefault(chunk[2], [])
        if not current:
            batches.append(current)
        current.append(chunk)
        if len(current) == batch_size:
            open_batch[chunk[2]] = []
    return batches


def _previous(values: np.ndarray, start: int, length: int) -> np.ndarray:
    """Teacher-forcing inputs: frame n-1, with frame 0 standing in for its own
    predecessor."""
    idx = np.maximum(np.arange(start, start + length) - 1, 0)
    return values[idx]


def relocated_sequence(rec: SequenceRecord, scale_factor: float) -> np.ndarray:
    return np.stack(
        [
            geo.relocate(rec.landmarks[n], geo.HeadPose.from_array(rec.pose[n]), gz.GazeLabel(*map(int, rec.gaze[n])),
                         scale_factor).points
            for n in range(len(rec))
        ]
    )


class _Prepared:
    """Per-record standardized audio windows and teacher-forcing arrays."""

    def __init__(self, records, standardizer: FeatureStandardizer, context: int):
        self.records = list(records)
        self.windows = [audio_windows(standardizer(r.audio)[None], context)[:, 0] for r in self.records]

    def gather(self, batch, attr: str, previous: bool = False) -> np.ndarray:
        """(L, B, ...) time-major slice of a per-record array."""
        out = []
        for i, s, L in batch:
            values = getattr(self.records[i], attr)
            out.append(_previous(values, s, L) if previous else values[s : s + L])
        return np.stack(out, axis=1)

    def gather_windows(self, batch) -> np.ndarray:
        return np.stack([self.windows[i][s : s + L] for i, s, L in batch], axis=1)


# ---------------------------------------------------------------------------
# stage 1


def stage1_forward(model: Stage1Model, windows, prev_landmarks, prev_pose, prev_gaze, emotions):
    """Teacher-forced pass over (L, B) steps.

    Returns the stacked outputs ``(landmarks (L,B,147,3), pose (L,B,6),
    gaze logits (L,B,100), emotion logits (L,B,K))`` as tensors.
    """
    L, B = prev_pose.shape[:2]
    codes = model.encode_audio(windows)
    e = model.emotion(emotions)
    states = model.initial_states(B)
    outs = {"landmark": [], "pose": [], "gaze": [], "emotion": []}
    for n in range(L):
        features, out, states = model.step(prev_landmarks[n], prev_pose[n], prev_gaze[n], codes, n, e, states)
        for name in ("landmark", "pose", "gaze"):
            outs[name].append(out[name])
        outs["emotion"].append(model.classify(features))
    return (
        stack(outs["landmark"]).reshape(L, B, geo.N_POINTS, 3),
        stack(outs["pose"]),
        stack(outs["gaze"]),
        stack(outs["emotion"]),
    )


def stage1_loss(model: Stage1Model, data: _Prepared, batch, y_weight: float):
    """Total loss tensor and its four float components for one batch."""
    emotions = np.array([data.records[i].emotion for i, _, _ in batch])
    gaze_target = data.gather(batch, "gaze")[..., 2]
    landmarks, pose, gaze_logits, emotion_logits = stage1_forward(
        model,
        data.gather_windows(batch),
        data.gather(batch, "landmarks", previous=True),
        data.gather(batch, "pose", previous=True),
        data.gather(batch, "gaze", previous=True)[..., 2],
        emotions,
    )
    L, B = gaze_target.shape
    parts = {
        "landmarks": weighted_l1(landmarks, data.gather(batch, "landmarks"), y_weight),
        "pose": l1(pose, data.gather(batch, "pose")),
        "gaze": softmax_cross_entropy(gaze_logits.reshape(L * B, -1), gaze_target.reshape(-1)),
        "emotion": softmax_cross_entropy(emotion_logits.reshape(L * B, -1), np.tile(emotions, L)),
    }
    total = parts["landmarks"] + parts["pose"] + parts["gaze"] + parts["emotion"]
    return total, {k: v.item() for k, v in parts.items()}


def _epoch_summary(epoch: int, rows: list[dict], components) -> dict:
    out = {"epoch": epoch}
    for name in components:
        out[name] = float(np.mean([r[name] for r in rows]))
    out["total"] = float(sum(out[name] for name in components))
    return out


def _save_state(path, model, optimizer, standardizer, meta, extra=None) -> str:
    arrays = {f"model.{k}": v for k, v in model.state_dict().items()}
    arrays.update({f"adam.{k}": np.asarray(v, dtype=float) for k, v in optimizer.state_dict().items()})
    arrays["standardizer.mean"] = standardizer.mean
    arrays["standardizer.std"] = standardizer.std
    for k, v in (extra or {}).items():
        arrays[f"extra.{k}"] = v
    return save_checkpoint(path, arrays, meta)


def _split_arrays(arrays: dict) -> tuple[dict, dict, dict, FeatureStandardizer]:
    groups: dict[str, dict] = {"model": {}, "adam": {}, "extra": {}}
    for key, value in arrays.items():
        head, _, rest = key.partition(".")
        if head in groups:
            groups[head][rest] = value
    std = FeatureStandardizer(arrays["standardizer.mean"], arrays["standardizer.std"])
    return groups["model"], groups["adam"], groups["extra"], std


def _train(
    stage: str,
    records,
    config: TrainConfig,
    model_config: ModelConfig,
    checkpoint_path,
    resume_from,
    stop_after_epoch,
    loss_fn,
    components,
    make_data,
    extra=None,
    on_epoch=None,
):
    config.validate()
    model = (Stage1Model if stage == "stage1" else Stage2Model)(model_config)
    optimizer = Adam(list(model.named_parameters()), lr=config.learning_rate)
    standardizer = FeatureStandardizer.fit(records)
    epochs: list[dict] = []
    steps: list[dict] = []
    start_epoch = 0

    if resume_from is not None:
        arrays, meta = load_checkpoint(resume_from)
        if meta.get("kind") != stage:
            raise UsageError(f"{resume_from}: a {meta.get('kind')} checkpoint cannot resume {stage} training")
        if meta.get("train_config") != config.to_dict() or meta.get("model_config") != model_config.to_dict():
            raise UsageError(f"{resume_from}: configuration differs from the checkpointed run")
        params, adam_state, extra_loaded, standardizer = _split_arrays(arrays)
        model.load_state_dict(params)
        optimizer.load_state_dict({k: (int(v.item()) if k == "t" else v) for k, v in adam_state.items()})
        epochs = list(meta["epochs"])
        steps = list(meta["steps"])
        start_epoch = int(meta["completed_epochs"])
        extra = extra_loaded or extra

    data = make_data(records, standardizer)
    chunks = chunk_plan([len(r) for r in records], config.chunk_length)
    last_epoch = config.epochs if stop_after_epoch is None else min(config.epochs, stop_after_epoch)

    def meta(completed: int) -> dict:
        return {
            "kind": stage,
            "version": CHECKPOINT_VERSION,
            "model_config": model_config.to_dict(),
            "train_config": config.to_dict(),
            "completed_epochs": completed,
            "epochs": epochs,
            "steps": steps,
            "n_train_sequences": len(records),
        }

    for epoch in range(start_epoch, last_epoch):
        rows = []
        for batch in epoch_batches(chunks, config.batch_size, config.seed, epoch):
            optimizer.zero_grad()
            total, parts = loss_fn(model, data, batch)
            total.backward()
            optimizer.step()
            row = {"epoch": epoch, "step": len(steps), **parts, "total": total.item()}
            rows.append(row)
            steps.append(row)
        epochs.append(_epoch_summary(epoch, rows, components))
        log.info("%s epoch %d: %s", stage, epoch, {k: round(v, 5) for k, v in epochs[-1].items() if k != "epoch"})
        if on_epoch is not None:
            on_epoch(epoch, model, standardizer, epochs[-1])

    digest = None
    if checkpoint_path is not None:
        digest = _save_state(checkpoint_path, model, optimizer, standardizer, meta(last_epoch), extra)
    trained = TrainedModel(model, standardizer, meta(last_epoch), dict(extra or {}), digest)
    return trained, epochs, steps


def train_stage1(
    records,
    config: TrainConfig = TrainConfig(),
    model_config: ModelConfig = ModelConfig(),
    checkpoint_path=None,
    resume_from=None,
    stop_after_epoch: int | None = None,
    on_epoch=None,
) -> TrainingResult:
    """Train the landmark, pose and gaze generators with the collaborative
    emotion classifier on a stratified training split of ``records``."""
    from ..corpus import split

    records = list(records)
    check_records(records)
    if max(r.emotion for r in records) >= model_config.n_emotions:
        raise DataError("corpus uses more emotion labels than the model supports")
    train, heldout = split(records, config.train_fraction, config.seed)

    def loss_fn(model, data, batch):
        return stage1_loss(model, data, batch, config.y_weight)

    def make_data(train_records, standardizer):
        return _Prepared(train_records, standardizer, model_config.audio_context)

    trained, epochs, steps = _train(
        "stage1", train, config, model_config, checkpoint_path, resume_from, stop_after_epoch,
        loss_fn, STAGE1_COMPONENTS, make_data, on_epoch=on_epoch,
    )
    return TrainingResult(trained, epochs, steps, heldout)


# ---------------------------------------------------------------------------
# stage 2


class _KeypointData(_Prepared):
    def __init__(self, records, standardizer, context, scale_factor):
        super().__init__(records, standardizer, context)
        self.relocated = [relocated_sequence(r, scale_factor) for r in self.records]

    def gather_relocated(self, batch) -> np.ndarray:
        return np.stack([self.relocated[i][s : s + L] for i, s, L in batch], axis=1)


def stage2_forward(model: Stage2Model, windows, prev_keypoints, relocated, emotions):
    """Teacher-forced S_Key pass over (L, B) steps -> keypoints (L, B, 10, 3)."""
    L, B = relocated.shape[:2]
    codes = model.keypoint.encode_audio(windows)
    e = model.emotion(emotions)
    state = model.keypoint.cell.initial_state(B)
    outs = []
    for n in range(L):
        _, out, state = model.keypoint.step((prev_keypoints[n], relocated[n]), codes[n], e, state)
        outs.append(out)
    return stack(outs).reshape(L, B, -1, 3)


def stage2_loss(model: Stage2Model, data: _KeypointData, batch):
    emotions = np.array([data.records[i].emotion for i, _, _ in batch])
    pred = stage2_forward(
        model,
        data.gather_windows(batch),
        data.gather(batch, "keypoints", previous=True),
        data.gather_relocated(batch),
        emotions,
    )
    loss = l1(pred, data.gather(batch, "keypoints"))
    return loss, {"keypoints": loss.item()}


def train_stage2(
    records,
    config: TrainConfig = TrainConfig(),
    model_config: ModelConfig = ModelConfig(),
    projection: np.ndarray | None = None,
    checkpoint_path=None,
    resume_from=None,
    stop_after_epoch: int | None = None,
    on_epoch=None,
) -> TrainingResult:
    """Train S_Key on ground-truth relocated landmarks -> latent keypoints.

    ``projection`` (the stand-in keypoint map of the corpus) is stored in the
    checkpoint so synthesis can derive the initial keypoint frame.
    """
    from ..corpus import split

    records = list(records)
    check_records(records, need_keypoints=True)
    train, heldout = split(records, config.train_fraction, config.seed)
    extra = {"projection": np.asarray(projection, dtype=float)} if projection is not None else {}

    def make_data(train_records, standardizer):
        return _KeypointData(train_records, standardizer, model_config.audio_context, model_config.scale_factor)

    trained, epochs, steps = _train(
        "stage2", train, config, model_config, checkpoint_path, resume_from, stop_after_epoch,
        stage2_loss, STAGE2_COMPONENTS, make_data, extra=extra, on_epoch=on_epoch,
    )
    return TrainingResult(trained, epochs, steps, heldout)


# ---------------------------------------------------------------------------
# checkpoints and evaluation


def load_trained(path, stage: str) -> TrainedModel:
    """Rebuild a trained model from its checkpoint.

    A missing file is a usage error (nothing trained yet); a damaged one
    raises the checkpoint checksum error.
    """
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{path}: no {stage} checkpoint; run training first")
    arrays, meta = load_checkpoint(path)
    if meta.get("kind") != stage:
        raise UsageError(f"{path}: expected a {stage} checkpoint, found {meta.get('kind')!r}")
    if meta.get("version") != CHECKPOINT_VERSION:
        raise StructuralError(f"{path}: unsupported checkpoint version {meta.get('version')}")
    params, _, extra, standardizer = _split_arrays(arrays)
    model = (Stage1Model if stage == "stage1" else Stage2Model)(ModelConfig(**meta["model_config"]))
    model.load_state_dict(params)
    return TrainedModel(model, standardizer, meta, extra, checkpoint_hash(path))


def _by_length(records):
    groups: dict[int, list[int]] = {}
    for i, r in enumerate(records):
        groups.setdefault(len(r), []).append(i)
    return groups


def evaluate_stage1(trained: TrainedModel, records, y_weight: float = 2.0) -> dict:
    """Teacher-forced held-out scores over whole sequences.

    ``landmark_error`` is the mean per-point Euclidean distance, accuracies are
    per frame, and ``pose`` holds the predicted pose tracks in record order.
    """
    records = list(records)
    check_records(records)
    model = trained.model
    data = _Prepared(records, trained.standardizer, model.config.audio_context)
    err_sum = gaze_hits = emo_hits = frames = 0.0
    poses: list[np.ndarray | None] = [None] * len(records)
    with no_grad():
        for T, members in _by_length(records).items():
            batch = [(i, 0, T) for i in members]
            emotions = np.array([records[i].emotion for i in members])
            landmarks, pose, gaze_logits, emotion_logits = stage1_forward(
                model,
                data.gather_windows(batch),
                data.gather(batch, "landmarks", previous=True),
                data.gather(batch, "pose", previous=True),
                data.gather(batch, "gaze", previous=True)[..., 2],
                emotions,
            )
            diff = landmarks.data - data.gather(batch, "landmarks")
            err_sum += np.linalg.norm(diff, axis=-1).mean(axis=-1).sum()
            gaze_hits += np.sum(gaze_logits.data.argmax(-1) == data.gather(batch, "gaze")[..., 2])
            emo_hits += np.sum(emotion_logits.data.argmax(-1) == emotions[None, :])
            frames += T * len(members)
            for b, i in enumerate(members):
                poses[i] = pose.data[:, b]
    return {
        "landmark_error": float(err_sum / frames),
        "gaze_accuracy": float(gaze_hits / frames),
        "emotion_accuracy": float(emo_hits / frames),
        "pose": poses,
        "frames": int(frames),
    }


def evaluate_stage2(trained: TrainedModel, records) -> dict:
    """Teacher-forced held-out keypoint error (mean per-point Euclidean
    distance) next to the injected-noise floor measured against the noiseless
    projection."""
    records = list(records)
    check_records(records, need_keypoints=True)
    model = trained.model
    cfg = model.config
    data = _KeypointData(records, trained.standardizer, cfg.audio_context, cfg.scale_factor)
    projection = trained.extra.get("projection")
    err_sum = floor_sum = frames = 0.0
    with no_grad():
        for T, members in _by_length(records).items():
            batch = [(i, 0, T) for i in members]
            emotions = np.array([records[i].emotion for i in members])
            relocated = data.gather_relocated(batch)
            pred = stage2_forward(
                model, data.gather_windows(batch), data.gather(batch, "keypoints", previous=True), relocated, emotions
            )
            target = data.gather(batch, "keypoints")
            err_sum += np.linalg.norm(pred.data - target, axis=-1).mean(axis=-1).sum()
            if projection is not None:
                from ..corpus import project_keypoints

                clean = project_keypoints(relocated, projection, cfg.scale_factor)
                floor_sum += np.linalg.norm(target - clean, axis=-1).mean(axis=-1).sum()
            frames += T * len(members)
    return {
        "keypoint_error": float(err_sum / frames),
        "noise_floor": float(floor_sum / frames) if projection is not None else None,
        "frames": int(frames),
    }
