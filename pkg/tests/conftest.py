"""Shared fixtures: a small corpus, tiny trained models, and (for the slow
suites) the full default training run, built once per session."""

from __future__ import annotations

import numpy as np
import pytest

from emocue import corpus as cp
from emocue.sequentializers import ModelConfig, TrainConfig, train_stage1, train_stage2

TINY = ModelConfig(
    hidden=8,
    audio_hidden=4,
    emotion_dim=4,
    landmark_code=8,
    pose_code=4,
    gaze_code=4,
    keypoint_code=4,
    relocated_code=8,
    classifier_hidden=8,
)


ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])


@pytest.fixture
def criterion():
    """``record(number, passed, detail)`` files one PASS/FAIL line for the
    terminal summary and prints it immediately."""

    def record(number: int, passed: bool, detail: str) -> bool:
        line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE[number] = line
        print(line)
        return passed

    return record


@pytest.fixture(scope="session")
def small_corpus():
    return cp.generate_synthetic(n_sequences=2, length=30, seed=3)


@pytest.fixture(scope="session")
def tiny_checkpoints(tmp_path_factory, small_corpus):
    """(stage1, stage2) tiny models trained for one epoch, with checkpoints."""
    root = tmp_path_factory.mktemp("tiny")
    cfg = TrainConfig(epochs=1, batch_size=8)
    r1 = train_stage1(small_corpus.records, cfg, TINY, checkpoint_path=root / "stage1.ckpt")
    r2 = train_stage2(small_corpus.records, cfg, TINY, projection=cp.keypoint_projection(3),
                      checkpoint_path=root / "stage2.ckpt")
    return r1.trained, r2.trained, root


@pytest.fixture(scope="session")
def default_corpus_timed():
    import time

    t0 = time.perf_counter()
    corpus = cp.generate_synthetic(seed=0)
    return corpus, time.perf_counter() - t0


@pytest.fixture(scope="session")
def default_corpus(default_corpus_timed):
    return default_corpus_timed[0]


@pytest.fixture(scope="session")
def default_run(default_corpus, tmp_path_factory):
    """The default 50-epoch stage-1 and stage-2 runs with wall-clock times."""
    import time

    root = tmp_path_factory.mktemp("default")
    t0 = time.perf_counter()
    r1 = train_stage1(default_corpus.records, TrainConfig(), checkpoint_path=root / "stage1.ckpt")
    t1 = time.perf_counter()
    r2 = train_stage2(default_corpus.records, TrainConfig(), projection=cp.keypoint_projection(0),
                      checkpoint_path=root / "stage2.ckpt")
    t2 = time.perf_counter()
    return {"stage1": r1, "stage2": r2, "stage1_seconds": t1 - t0, "stage2_seconds": t2 - t1, "root": root}


def random_frame(rng: np.random.Generator) -> np.ndarray:
    """A jittered canonical face of a random identity."""
    from emocue import geometry as geo

    shape = cp.IdentityShape.random(rng)
    pts = cp.face_points(shape, eye_scale=rng.uniform(0.6, 1.4), mouth_open=rng.uniform(0, 0.07))
    pts = pts + rng.normal(0, 0.002, size=pts.shape)
    return geo.renormalize(pts)
