"""Emotion-conditioned facial cue generation from speech: normalized 3D
landmarks, head pose and discretized gaze, relocation to image space and
latent keypoints, with a synthetic oracle corpus and evaluation metrics."""

__version__ = "0.1.0"
