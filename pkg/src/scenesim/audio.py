"""Sample-level audio primitives.

Clips are immutable mono float64 buffers. Level math works on RMS values in
linear amplitude and event-to-background ratios (EBR) in decibels:

    EBR = 20 * log10(event_rms / background_rms)

File I/O is RIFF/WAVE only (PCM 16-bit or IEEE 32-bit float, mono); see
docs/wav-format.md for the exact header policy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import AudioFormatError

PCM16_SCALE = 32768.0


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Immutable mono sample buffer plus its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64, copy=True)
        if samples.ndim != 1:
            raise ValueError(f"clip must be mono (1-D), got shape {samples.shape}")
        sr = int(self.sample_rate)
        if sr <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", sr)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        """Length in seconds."""
        return self.samples.size / self.sample_rate

    @classmethod
    def silence(cls, n_samples: int, sample_rate: int) -> "AudioClip":
        return cls(np.zeros(int(n_samples)), sample_rate)


def rms(clip: AudioClip, start: int = 0, length: int | None = None) -> float:
    """Root mean square over a sample window, sqrt(mean(x^2)).

    `start`/`length` select a window; by default the whole clip is used.
    """
    n = len(clip)
    if length is None:
        length = n - start
    if length < 1:
        raise ValueError(f"window length must be >= 1, got {length}")
    if start < 0 or start + length > n:
        raise IndexError(
            f"window [{start}, {start + length}) out of bounds for clip of {n} samples"
        )
    window = clip.samples[start : start + length]
    return float(np.sqrt(np.mean(np.square(window))))


def ebr_db(event_rms: float, background_rms: float) -> float:
    """Event-to-background ratio in dB between two RMS levels."""
    if event_rms <= 0:
        raise ValueError(f"event RMS must be positive, got {event_rms} (silent stem?)")
    if background_rms <= 0:
        raise ValueError(
            f"background RMS must be positive, got {background_rms} (silent stem?)"
        )
    return 20.0 * math.log10(event_rms / background_rms)


def gain_for_target_ebr(clip_rms: float, background_rms: float, target_db: float) -> float:
    """Linear gain that brings a clip to `target_db` EBR against a background."""
    if clip_rms <= 0:
        raise ValueError(f"clip RMS must be positive, got {clip_rms}")
    if background_rms <= 0:
        raise ValueError(f"background RMS must be positive, got {background_rms}")
    return 10.0 ** (target_db / 20.0) * background_rms / clip_rms


def _raised_cosine_ramp(n: int) -> np.ndarray:
    # 0 -> 1 inclusive over n samples; midpoint is exactly 0.5 for odd spans.
    if n <= 0:
        return np.zeros(0)
    if n == 1:
        return np.zeros(1)
    return 0.5 * (1.0 - np.cos(np.pi * np.arange(n) / (n - 1)))


def apply_fade(clip: AudioClip, fade_in: float, fade_out: float) -> AudioClip:
    """Apply raised-cosine onset/offset fades, durations in seconds."""
    if fade_in < 0 or fade_out < 0:
        raise ValueError("fade durations must be non-negative")
    sr = clip.sample_rate
    n_in = int(round(fade_in * sr))
    n_out = int(round(fade_out * sr))
    if n_in + n_out > len(clip):
        raise ValueError(
            f"fades ({fade_in}s + {fade_out}s) exceed clip duration {clip.duration:.6f}s"
        )
    if n_in == 0 and n_out == 0:
        return clip
    samples = clip.samples.copy()
    if n_in:
        samples[:n_in] *= _raised_cosine_ramp(n_in)
    if n_out:
        samples[len(samples) - n_out :] *= _raised_cosine_ramp(n_out)[::-1]
    return AudioClip(samples, sr)


def crossfade_concat(clips: list[AudioClip], overlap: float) -> AudioClip:
    """Concatenate clips with equal-power crossfades at every joint.

    In each overlap region the outgoing clip is weighted cos(theta) and the
    incoming one sin(theta), theta sweeping 0..pi/2, so squared weights sum
    to one at every sample. Every clip must be strictly longer than the
    overlap and all must share a sample rate.
    """
    if not clips:
        raise ValueError("need at least one clip to concatenate")
    sr = clips[0].sample_rate
    if any(c.sample_rate != sr for c in clips):
        rates = sorted({c.sample_rate for c in clips})
        raise ValueError(f"mixed sample rates in crossfade: {rates}")
    if overlap < 0:
        raise ValueError("overlap must be non-negative")
    m = int(round(overlap * sr))
    for k, c in enumerate(clips):
        if len(c) <= m:
            raise ValueError(
                f"clip {k} ({c.duration:.3f}s) is not longer than the overlap ({overlap}s)"
            )
    if len(clips) == 1:
        return clips[0]

    total = sum(len(c) for c in clips) - (len(clips) - 1) * m
    out = np.zeros(total)
    theta = np.linspace(0.0, np.pi / 2.0, m)
    w_out = np.cos(theta)
    w_in = np.sin(theta)

    out[: len(clips[0])] = clips[0].samples
    pos = len(clips[0])
    for clip in clips[1:]:
        joint = pos - m
        if m:
            out[joint:pos] *= w_out
        incoming = clip.samples.copy()
        if m:
            incoming[:m] *= w_in
        out[joint : joint + len(clip)] += incoming
        pos = joint + len(clip)
    return AudioClip(out, sr)


def mix(stems: list[AudioClip], length: int | None = None) -> AudioClip:
    """Sample-wise sum of stems, left to right, padded/truncated to `length`.

    No normalization is applied; the caller owns the clipping policy.
    """
    if not stems:
        raise ValueError("need at least one stem to mix")
    sr = stems[0].sample_rate
    if any(s.sample_rate != sr for s in stems):
        rates = sorted({s.sample_rate for s in stems})
        raise ValueError(f"mixed sample rates in mix: {rates}")
    if length is None:
        length = max(len(s) for s in stems)
    out = np.zeros(int(length))
    for stem in stems:
        n = min(len(stem), length)
        out[:n] += stem.samples[:n]
    return AudioClip(out, sr)


def read_audio(path: str | Path, if_stereo: str = "error") -> AudioClip:
    """Read a mono WAV file (PCM16 or float32/float64) into an AudioClip.

    `if_stereo` is "error" (reject multichannel input, the default) or
    "downmix" (average the channels).
    """
    path = Path(path)
    if not path.exists():
        raise AudioFormatError(f"no such audio file: {path}")
    try:
        sr, data = wavfile.read(str(path))
    except Exception as exc:
        raise AudioFormatError(f"cannot read WAV file {path}: {exc}") from exc
    if data.ndim == 2:
        if if_stereo == "downmix":
            data = data.astype(np.float64).mean(axis=1)
        else:
            raise AudioFormatError(
                f"{path} has {data.shape[1]} channels; pass if_stereo='downmix' to fold"
            )
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / PCM16_SCALE
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise AudioFormatError(
            f"{path}: unsupported sample format {data.dtype}; expected int16 or float32"
        )
    return AudioClip(samples, int(sr))


def write_audio(path: str | Path, clip: AudioClip, audio_format: str = "float32") -> None:
    """Write a clip as mono WAV, either IEEE float32 (lossless for our range)
    or PCM16 (quantized, max error one LSB)."""
    path = Path(path)
    if audio_format == "float32":
        data = clip.samples.astype(np.float32)
    elif audio_format == "pcm16":
        quantized = np.round(clip.samples * PCM16_SCALE)
        data = np.clip(quantized, -32768, 32767).astype(np.int16)
    else:
        raise ValueError(f"unknown audio format {audio_format!r}; use float32 or pcm16")
    path.parent.mkdir(parents=True, exist_ok=True)
    wavfile.write(str(path), clip.sample_rate, data)
