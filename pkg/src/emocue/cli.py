"""Command-line entry point: ``emocue {gen-corpus,train,synthesize,evaluate,plot}``.

Every command takes an optional JSON ``--config`` file whose keys are
:class:`RunConfig` fields; command-line flags override file values. Each run
writes ``run_manifest.json`` (config, config hash, input hashes, outputs) into
its output directory.

Exit codes: 0 success, 1 unexpected package error, 2 configuration or usage
error, 3 data error, 4 numeric error, 5 checksum error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import audiofeat as af
from . import corpus as cp
from . import geometry as geo
from . import gaze as gz
from . import metrics, plotting
from .errors import ConfigError, DataError, EmoCueError, UsageError
from .sequentializers import (
    STAGE1_COMPONENTS,
    STAGE2_COMPONENTS,
    ModelConfig,
    TrainConfig,
    bundle_from_record,
    bundle_hash,
    evaluate_stage1,
    evaluate_stage2,
    load_trained,
    read_bundle,
    synthesize,
    train_stage1,
    train_stage2,
    write_bundle,
)

log = logging.getLogger("emocue")

MANIFEST_NAME = "run_manifest.json"
STAGE1_CKPT, STAGE2_CKPT = "stage1.ckpt", "stage2.ckpt"


@dataclass
class RunConfig:
    # paths
    out: str | None = None
    corpus: str | None = None
    checkpoints: str | None = None
    audio: str | None = None
    identity: str | None = None  # corpus directory or sequence file
    identity_index: int = 0
    pred: str | None = None
    gt: str | None = None
    input: str | None = None
    # corpus
    seed: int = 0
    n_emotions: int = len(cp.EMOTIONS)
    n_sequences: int = 24
    sequence_length: int = 90
    n_identities: int = 6
    canonical_width: float = geo.DEFAULT_CANONICAL_WIDTH
    scale_factor: float = geo.DEFAULT_SCALE_FACTOR
    fps: int = af.FPS
    # training
    epochs: int = 50
    stage2_epochs: int = 50
    stage2: bool = True
    batch_size: int = 24
    chunk_length: int = 30
    learning_rate: float = 1e-3
    y_weight: float = 2.0
    train_fraction: float = 0.8
    hidden: int = 128
    audio_hidden: int = 32
    emotion_dim: int = 16
    resume: bool = False
    stop_after_epoch: int | None = None
    # synthesis
    emotion: str = "neutral"
    duration: float = 1.0
    preview: bool = True
    renormalize: bool = False

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
        return cls(**data)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def sha256(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def validate(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            kind = f.type if isinstance(f.type, str) else getattr(f.type, "__name__", "")
            if value is None:
                if "None" not in kind:
                    raise ConfigError(f"{f.name} must not be null")
                continue
            if kind.startswith("int") or kind == "int | None":
                ok = isinstance(value, int) and not isinstance(value, bool)
            elif kind.startswith("float"):
                ok = isinstance(value, (int, float)) and not isinstance(value, bool)
            elif kind.startswith("bool"):
                ok = isinstance(value, bool)
            else:
                ok = isinstance(value, str)
            if not ok:
                raise ConfigError(f"{f.name}: invalid value {value!r} (expected {kind})")
        if not 1 <= self.n_emotions <= len(cp.EMOTIONS):
            raise ConfigError(f"n_emotions must lie in [1, {len(cp.EMOTIONS)}], got {self.n_emotions}")
        if self.fps != af.FPS:
            raise ConfigError(f"only {af.FPS} FPS is supported, got {self.fps}")
        if self.n_sequences < 1 or self.n_identities < 1 or self.sequence_length < 30:
            raise ConfigError("n_sequences >= 1, n_identities >= 1 and sequence_length >= 30 required")
        if not (self.canonical_width > 0 and self.scale_factor > 0):
            raise ConfigError("canonical_width and scale_factor must be positive")
        if self.stage2_epochs < 0 or self.hidden < 1 or self.audio_hidden < 1 or self.emotion_dim < 1:
            raise ConfigError("stage2_epochs >= 0 and positive layer sizes required")
        if self.duration <= 0:
            raise ConfigError("duration must be positive")
        self.train_config().validate()
        if not 0.0 < self.train_fraction < 1.0:
            raise ConfigError("train_fraction must lie in (0, 1)")
        self.emotion_index()

    def emotion_index(self) -> int:
        if self.emotion in cp.EMOTIONS:
            return cp.EMOTIONS.index(self.emotion)
        if self.emotion.isdigit() and int(self.emotion) < len(cp.EMOTIONS):
            return int(self.emotion)
        raise ConfigError(f"unknown emotion {self.emotion!r}; choose from {', '.join(cp.EMOTIONS)}")

    def train_config(self, stage: int = 1) -> TrainConfig:
        return TrainConfig(
            epochs=self.epochs if stage == 1 else self.stage2_epochs,
            batch_size=self.batch_size,
            chunk_length=self.chunk_length,
            learning_rate=self.learning_rate,
            y_weight=self.y_weight,
            train_fraction=self.train_fraction,
            seed=self.seed,
        )

    def model_config(self, n_emotions: int) -> ModelConfig:
        return ModelConfig(
            hidden=self.hidden,
            audio_hidden=self.audio_hidden,
            emotion_dim=self.emotion_dim,
            n_emotions=n_emotions,
            scale_factor=self.scale_factor,
            seed=self.seed,
        )


# ---------------------------------------------------------------------------
# helpers


def file_sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def path_sha256(path) -> str:
    """Hash of a file, or of a directory's files in sorted relative order."""
    path = Path(path)
    if path.is_file():
        return file_sha256(path)
    h = hashlib.sha256()
    for item in sorted(p for p in path.rglob("*") if p.is_file() and p.name != MANIFEST_NAME):
        h.update(str(item.relative_to(path)).encode())
        h.update(file_sha256(item).encode())
    return h.hexdigest()


def _need(value, name: str) -> str:
    if not value:
        raise UsageError(f"--{name.replace('_', '-')} is required for this command")
    return value


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(_need(cfg.out, "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_manifest(out: Path, command: str, cfg: RunConfig, inputs: dict, outputs: dict) -> None:
    manifest = {
        "command": command,
        "config": cfg.to_dict(),
        "config_sha256": cfg.sha256(),
        "inputs": inputs,
        "outputs": outputs,
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_rows(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in columns])


def loss_columns(stage: int) -> tuple[str, ...]:
    return ("epoch",) + (STAGE1_COMPONENTS if stage == 1 else STAGE2_COMPONENTS) + ("total",)


def _load_corpus(path) -> cp.Corpus:
    path = Path(_need(path, "corpus"))
    if not path.exists():
        raise DataError(f"{path}: corpus not found")
    return cp.load_corpus(path)


# ---------------------------------------------------------------------------
# commands


def cmd_gen_corpus(cfg: RunConfig) -> int:
    out = _out_dir(cfg)
    corpus = cp.generate_synthetic(
        profiles=cp.DEFAULT_PROFILES[: cfg.n_emotions],
        n_sequences=cfg.n_sequences,
        length=cfg.sequence_length,
        seed=cfg.seed,
        n_identities=cfg.n_identities,
        canonical_width=cfg.canonical_width,
        scale_factor=cfg.scale_factor,
    )
    cp.write_corpus(corpus, out)
    m = corpus.manifest
    print(f"wrote {m['n_sequences']} sequences ({m['n_frames']} frames, seed {m['seed']}) to {out}")
    for name, count in m["emotions"].items():
        print(f"  {name:<10} {count}")
    _write_manifest(out, "gen-corpus", cfg, {}, {"corpus_sha256": path_sha256(out)})
    return 0


def cmd_train(cfg: RunConfig) -> int:
    corpus = _load_corpus(cfg.corpus)
    out = _out_dir(cfg)
    n_emotions = len(cp.EMOTIONS)
    model_cfg = cfg.model_config(n_emotions)
    stage1_path, stage2_path = out / STAGE1_CKPT, out / STAGE2_CKPT
    resume1 = stage1_path if cfg.resume and stage1_path.exists() else None
    if cfg.resume and resume1 is None:
        raise UsageError(f"{stage1_path}: nothing to resume from")

    result = train_stage1(corpus.records, cfg.train_config(1), model_cfg, stage1_path, resume1, cfg.stop_after_epoch)
    _write_rows(out / "loss_stage1.csv", loss_columns(1), result.epochs)
    _write_rows(out / "loss_stage1_steps.csv", ("epoch", "step") + loss_columns(1)[1:], result.trained.meta["steps"])
    scores = {k: v for k, v in evaluate_stage1(result.trained, result.heldout).items() if k != "pose"}
    outputs = {"stage1": result.trained.digest, "loss_stage1": file_sha256(out / "loss_stage1.csv")}
    done = result.trained.meta["completed_epochs"] >= cfg.epochs
    print(f"stage 1: {result.trained.meta['completed_epochs']} epochs, total loss "
          f"{result.epochs[0]['total']:.4f} -> {result.epochs[-1]['total']:.4f}" if result.epochs else "stage 1: 0 epochs")
    print(f"  held-out: landmark error {scores['landmark_error']:.4f}, gaze accuracy {scores['gaze_accuracy']:.3f}, "
          f"emotion accuracy {scores['emotion_accuracy']:.3f}")

    if cfg.stage2 and done:
        if any(r.keypoints is None for r in corpus.records):
            raise DataError("corpus has no latent keypoints; rerun gen-corpus or pass --no-stage2")
        projection_seed = corpus.manifest.get("keypoint_projection_seed", cfg.seed)
        projection = cp.keypoint_projection(projection_seed) if projection_seed is not None else None
        resume2 = stage2_path if cfg.resume and stage2_path.exists() else None
        r2 = train_stage2(corpus.records, cfg.train_config(2), model_cfg, projection, stage2_path, resume2)
        _write_rows(out / "loss_stage2.csv", loss_columns(2), r2.epochs)
        s2 = evaluate_stage2(r2.trained, r2.heldout)
        scores.update({f"stage2_{k}": v for k, v in s2.items()})
        outputs.update(stage2=r2.trained.digest, loss_stage2=file_sha256(out / "loss_stage2.csv"))
        print(f"stage 2: keypoint error {s2['keypoint_error']:.4f} (noise floor {s2['noise_floor']})")
    (out / "heldout.json").write_text(json.dumps(scores, indent=2, sort_keys=True) + "\n")
    _write_manifest(out, "train", cfg, {"corpus": path_sha256(cfg.corpus)}, outputs)
    return 0


def _identity(cfg: RunConfig) -> np.ndarray:
    if cfg.identity is None:
        return cp.identity_frame(cp.identity_pool(cfg.seed, 1)[0], cfg.canonical_width)
    path = Path(cfg.identity)
    if not path.exists():
        raise DataError(f"{path}: identity source not found")
    records = cp.load_corpus(path).records
    if not 0 <= cfg.identity_index < len(records):
        raise ConfigError(f"identity_index {cfg.identity_index} outside [0, {len(records) - 1}]")
    return records[cfg.identity_index].landmarks[0]


def _audio(cfg: RunConfig) -> tuple[af.Waveform, dict]:
    if cfg.audio is not None:
        path = Path(cfg.audio)
        if not path.is_file():
            raise DataError(f"{path}: audio file not found")
        return af.read_wav(path), {"audio": file_sha256(path)}
    n_frames = int(round(cfg.duration * af.FPS))
    wave, _ = cp.synthetic_audio(np.random.default_rng([cfg.seed, 424242]), n_frames)
    return wave, {"audio": f"synthetic(seed={cfg.seed}, frames={n_frames})"}


def cmd_synthesize(cfg: RunConfig) -> int:
    ckpt = Path(_need(cfg.checkpoints, "checkpoints"))
    stage1 = load_trained(ckpt / STAGE1_CKPT, "stage1")
    stage2 = load_trained(ckpt / STAGE2_CKPT, "stage2")
    wave, inputs = _audio(cfg)
    identity = _identity(cfg)
    out = _out_dir(cfg)
    bundle = synthesize(stage1, stage2, wave, cfg.emotion_index(), identity, seed=cfg.seed,
                        renormalize=cfg.renormalize)
    write_bundle(bundle, out / "bundle")
    n_previews = 0
    if cfg.preview:
        preview = out / "preview"
        preview.mkdir(exist_ok=True)
        for n, frame in enumerate(bundle.relocated):
            plotting.save_preview(frame, preview / f"frame_{n:04d}.png")
        n_previews = len(bundle)
    digest = bundle_hash(bundle)
    print(f"synthesized {len(bundle)} frames ({cfg.emotion}); bundle sha256 {digest}")
    inputs.update(stage1=stage1.digest, stage2=stage2.digest)
    _write_manifest(out, "synthesize", cfg, inputs, {"bundle_sha256": digest, "preview_frames": n_previews})
    return 0


def _read_bundle_or_sequence(path, scale_factor: float):
    path = Path(path)
    if path.is_file() and path.suffix == ".jsonl":
        return bundle_from_record(cp.read_sequence(path), scale_factor)
    if not path.exists():
        raise DataError(f"{path}: not found")
    if (path / "bundle").is_dir():
        path = path / "bundle"
    return read_bundle(path)


def cmd_evaluate(cfg: RunConfig) -> int:
    pred = _read_bundle_or_sequence(_need(cfg.pred, "pred"), cfg.scale_factor)
    gt = _read_bundle_or_sequence(_need(cfg.gt, "gt"), cfg.scale_factor)
    rep = metrics.report(pred, gt)
    out = _out_dir(cfg)
    (out / "report.json").write_text(metrics.report_to_json(rep))
    (out / "report.csv").write_text(metrics.reports_to_csv([rep]))
    for name in metrics.SCALAR_FIELDS:
        print(f"{name:<16} {getattr(rep, name)}")
    _write_manifest(out, "evaluate", cfg, {"pred": path_sha256(cfg.pred), "gt": path_sha256(cfg.gt)},
                    {"report_csv": file_sha256(out / "report.csv")})
    return 0


def cmd_plot(cfg: RunConfig) -> int:
    src = Path(_need(cfg.input, "input"))
    if not src.exists():
        raise DataError(f"{src}: not found")
    out = _out_dir(cfg)
    written = []
    if src.is_file() and src.suffix == ".json":
        rep = metrics.report_from_json(src.read_text())
        hists = {"zone": np.arange(gz.ZONES)}
        for name in metrics.HISTOGRAM_FIELDS:
            hists[name] = np.array(getattr(rep, name))
        if sum(hists["gt_gaze_left"]) == 0:
            raise DataError(f"{src}: report holds empty gaze histograms")
        written += [plotting.write_series_csv(out / "gaze_hist.csv", hists),
                    plotting.plot_gaze_histograms(hists, out / "gaze_hist.png")]
    else:
        bundle = _read_bundle_or_sequence(src, cfg.scale_factor)
        written += [
            plotting.write_series_csv(out / "pose.csv", plotting.pose_series(bundle.pose)),
            plotting.plot_pose(bundle.pose, out / "pose.png"),
        ]
        hists = plotting.gaze_histogram(bundle.gaze)
        written += [plotting.write_series_csv(out / "gaze_hist.csv", hists),
                    plotting.plot_gaze_histograms(hists, out / "gaze_hist.png")]
    for path in written:
        print(path)
    _write_manifest(out, "plot", cfg, {"input": path_sha256(src)},
                    {p.name: file_sha256(p) for p in written if p.suffix == ".csv"})
    return 0


COMMANDS = {
    "gen-corpus": cmd_gen_corpus,
    "train": cmd_train,
    "synthesize": cmd_synthesize,
    "evaluate": cmd_evaluate,
    "plot": cmd_plot,
}


# ---------------------------------------------------------------------------
# argument parsing


def _flag_type(kind: str):
    if kind.startswith("int"):
        return int
    if kind.startswith("float"):
        return float
    return str


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="emocue",
        description="Emotion-conditioned facial cue synthesis: corpus generation, training, synthesis, "
        "evaluation and plotting.",
        epilog="exit codes: 0 ok, 1 other error, 2 config/usage, 3 data, 4 numeric, 5 checksum",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-epoch progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON file of configuration values")
        for f in fields(RunConfig):
            flag = "--" + f.name.replace("_", "-")
            kind = f.type if isinstance(f.type, str) else f.type.__name__
            if kind == "bool":
                p.add_argument(flag, dest=f.name, action="store_true", default=None)
                p.add_argument("--no-" + f.name.replace("_", "-"), dest=f.name, action="store_false", default=None)
            else:
                p.add_argument(flag, dest=f.name, type=_flag_type(kind), default=None)
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"{path}: config file not found")
        try:
            values = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(values, dict):
            raise ConfigError(f"{path}: config must be a JSON object")
    cfg = RunConfig.from_mapping(values)
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(cfg, f.name, value)
    cfg.validate()
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = config_from_args(args)
        return COMMANDS[args.command](cfg)
    except EmoCueError as exc:
        print(f"emocue {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
