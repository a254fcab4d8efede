"""Emotion-conditioned auto-regressive cue generators, their training loops
and end-to-end synthesis."""

from .models import (
    KEYPOINT_DIM,
    LANDMARK_DIM,
    POSE_DIM,
    CueSequentializer,
    EmotionClassifier,
    GazeSequentializer,
    KeypointSequentializer,
    LandmarkSequentializer,
    ModelConfig,
    PoseSequentializer,
    Stage1Model,
    Stage2Model,
    audio_windows,
    classify_emotion,
    gaze_step,
    keypoint_step,
    landmark_step,
    pose_step,
)
from .synthesis import (
    SynthesisBundle,
    bundle_from_record,
    bundle_hash,
    read_bundle,
    synthesize,
    synthesize_batch,
    wrap_pose,
    write_bundle,
)
from .training import (
    STAGE1_COMPONENTS,
    STAGE2_COMPONENTS,
    FeatureStandardizer,
    TrainConfig,
    TrainedModel,
    TrainingResult,
    chunk_plan,
    evaluate_stage1,
    evaluate_stage2,
    load_trained,
    relocated_sequence,
    stage1_forward,
    stage2_forward,
    train_stage1,
    train_stage2,
)
