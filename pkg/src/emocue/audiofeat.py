"""MFCC features aligned one-to-one with 30 FPS video frames.

Frame ``n`` is analysed over a 30 ms Hann window centred on the middle of the
video frame interval, ``(n + 0.5) / fps`` seconds. The signal is zero-padded
at both ends so every video frame gets a full window.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dct, rfft
from scipy.io import wavfile

from .errors import DataError, DomainError

SAMPLE_RATE = 16000
FPS = 30
N_MFCC = 28


@dataclass(frozen=True)
class MfccConfig:
    window_ms: float = 30.0
    preemphasis: float = 0.97
    n_fft: int = 512
    n_mels: int = 40
    n_mfcc: int = N_MFCC
    fmin: float = 0.0
    fmax: float | None = None
    log_floor: float = 1e-10


@dataclass(frozen=True)
class Waveform:
    samples: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        if s.ndim != 1:
            raise DataError(f"waveform must be mono, got shape {s.shape}")
        if not np.all(np.isfinite(s)):
            raise DataError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", s)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def mel_filterbank(sample_rate: int, n_fft: int, n_mels: int, fmin: float, fmax: float) -> np.ndarray:
    """Triangular filters on the HTK mel scale, evaluated at the FFT bin
    frequencies; shape (n_mels, n_fft // 2 + 1)."""
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def frame_count(n_samples: int, sample_rate: int = SAMPLE_RATE, fps: int = FPS) -> int:
    """round(duration * fps), halves rounded up; exact integer arithmetic."""
    return (2 * n_samples * fps + sample_rate) // (2 * sample_rate)


def frame_centers(n_frames: int, sample_rate: int = SAMPLE_RATE, fps: int = FPS) -> np.ndarray:
    n = np.arange(n_frames)
    return ((2 * n + 1) * sample_rate + fps) // (2 * fps)


def mfcc_sequence(w: Waveform, fps: int = FPS, config: MfccConfig = MfccConfig()) -> np.ndarray:
    """(n_frames, n_mfcc) array, one row per video frame, 0th coefficient kept."""
    if w.sample_rate != SAMPLE_RATE:
        raise DomainError(f"expected {SAMPLE_RATE} Hz audio, got {w.sample_rate} Hz (no resampling)")
    x = w.samples
    hop = w.sample_rate / fps
    if len(x) <= hop:
        raise DomainError(f"audio too short: {len(x)} samples, need more than one hop ({hop:.1f})")
    n_frames = frame_count(len(x), w.sample_rate, fps)

    emph = x.copy()
    emph[1:] -= config.preemphasis * x[:-1]

    win_len = int(round(config.window_ms * 1e-3 * w.sample_rate))
    if win_len > config.n_fft:
        raise DomainError(f"window of {win_len} samples exceeds n_fft={config.n_fft}")
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win_len) / win_len)
    padded = np.concatenate([np.zeros(win_len), emph, np.zeros(win_len)])
    starts = frame_centers(n_frames, w.sample_rate, fps) - win_len // 2 + win_len
    frames = padded[starts[:, None] + np.arange(win_len)] * window

    power = np.abs(rfft(frames, n=config.n_fft, axis=1)) ** 2
    fmax = config.fmax if config.fmax is not None else w.sample_rate / 2
    fb = mel_filterbank(w.sample_rate, config.n_fft, config.n_mels, config.fmin, fmax)
    log_mel = np.log(np.maximum(power @ fb.T, config.log_floor))
    return dct(log_mel, type=2, norm="ortho", axis=1)[:, : config.n_mfcc]


def align_lengths(features, target_frame_count: int) -> np.ndarray:
    """Truncate or edge-pad to exactly ``target_frame_count`` rows (at most 2 off)."""
    f = np.asarray(features, dtype=float)
    diff = len(f) - target_frame_count
    if abs(diff) > 2:
        raise DataError(f"audio/video misaligned by {diff} frames (limit 2)")
    if diff >= 0:
        return f[:target_frame_count].copy()
    return np.concatenate([f, np.repeat(f[-1:], -diff, axis=0)])


def read_wav(path) -> Waveform:
    rate, data = wavfile.read(path)
    if data.ndim != 1:
        raise DataError(f"{path}: expected single-channel audio, got {data.shape[1]} channels")
    if data.dtype == np.int16:
        samples = data.astype(float) / 32768.0
    elif np.issubdtype(data.dtype, np.floating):
        samples = data.astype(float)
    else:
        raise DataError(f"{path}: unsupported sample format {data.dtype}")
    return Waveform(samples, int(rate))


def quantize_pcm16(samples) -> np.ndarray:
    """Round to the 16-bit grid, so features survive a WAV round trip bit-exactly."""
    q = np.clip(np.round(np.asarray(samples, dtype=float) * 32768.0), -32768, 32767)
    return q / 32768.0


def write_wav(path, w: Waveform) -> None:
    pcm = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype(np.int16)
    wavfile.write(path, w.sample_rate, pcm)


def write_features(path, features) -> None:
    with open(path, "w") as fh:
        for n, row in enumerate(np.asarray(features, dtype=float)):
            fh.write(json.dumps({"n": n, "mfcc": row.tolist()}) + "\n")


def read_features(path) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            rec = json.loads(line)
            if rec["n"] != len(rows):
                raise DataError(f"{path}:{lineno}: expected frame {len(rows)}, got {rec['n']}")
            rows.append(rec["mfcc"])
    return np.array(rows, dtype=float)

