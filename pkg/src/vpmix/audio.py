"""Waveform container, WAV I/O and elementary signal arithmetic."""

from __future__ import annotations

import math
import os
import struct
import wave
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.signal import resample_poly

from .validation import INGEST_RATES, check_sample_rate, check_samples

ANALYSIS_RATE = 16000
MIN_RESAMPLE_RATE = 8000

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    """Base class for WAV decoding problems."""


class MalformedWavError(WavError):
    """The RIFF/WAVE structure is broken (bad magic, truncated chunk, missing chunk)."""


class UnsupportedWavError(WavError):
    """The file is well-formed but uses a codec, width, layout or rate we do not read."""


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Monaural waveform with its sample rate. Samples are immutable float64."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        object.__setattr__(self, "samples", check_samples(self.samples))
        object.__setattr__(self, "sample_rate", check_sample_rate(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class SourceSpan:
    """A ``[start_s, start_s + duration_s)`` window into a catalog source."""

    source_id: str
    start_s: float
    duration_s: float

    def __post_init__(self):
        if self.start_s < 0:
            raise ValueError(f"start_s must be non-negative, got {self.start_s}")
        if self.duration_s <= 0:
            raise ValueError(f"duration_s must be positive, got {self.duration_s}")

    def to_dict(self) -> dict:
        return {"source_id": self.source_id, "start_s": self.start_s, "duration_s": self.duration_s}

    @classmethod
    def from_dict(cls, d: dict) -> "SourceSpan":
        return cls(str(d["source_id"]), float(d["start_s"]), float(d["duration_s"]))


# -- WAV I/O --


def _read_chunks(data: bytes, path) -> dict:
    if len(data) < 12:
        raise MalformedWavError(f"{path}: file too short for a RIFF header")
    riff, _, wave_id = struct.unpack("<4sI4s", data[:12])
    if riff != b"RIFF":
        raise MalformedWavError(f"{path}: chunk id is {riff!r}, expected b'RIFF'")
    if wave_id != b"WAVE":
        raise MalformedWavError(f"{path}: form type is {wave_id!r}, expected b'WAVE'")
    chunks = {}
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack("<4sI", data[pos:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size and cid != b"data":
            raise MalformedWavError(f"{path}: chunk {cid!r} truncated ({len(body)} of {size} bytes)")
        chunks.setdefault(cid, body)
        pos += 8 + size + (size & 1)
    return chunks


def read_wav(path) -> AudioClip:
    """Read a PCM16 or float32 WAV file, downmixing stereo by channel mean.

    16-bit codes are mapped to [-1, 1) by dividing by 32768.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such WAV file: {path}")
    with open(path, "rb") as fh:
        data = fh.read()
    chunks = _read_chunks(data, path)
    if b"fmt " not in chunks:
        raise MalformedWavError(f"{path}: missing 'fmt ' chunk")
    if b"data" not in chunks:
        raise MalformedWavError(f"{path}: missing 'data' chunk")
    fmt = chunks[b"fmt "]
    if len(fmt) < 16:
        raise MalformedWavError(f"{path}: 'fmt ' chunk is {len(fmt)} bytes, need 16")
    tag, channels, rate, _, block_align, bits = struct.unpack("<HHIIHH", fmt[:16])
    if tag == _WAVE_FORMAT_EXTENSIBLE:
        if len(fmt) < 26:
            raise MalformedWavError(f"{path}: extensible 'fmt ' chunk too short")
        tag = struct.unpack("<H", fmt[24:26])[0]

    if tag == _WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 32768.0
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise UnsupportedWavError(f"{path}: format tag {tag:#06x} with bits_per_sample={bits} is not PCM16/float32")
    if channels not in (1, 2):
        raise UnsupportedWavError(f"{path}: channels={channels}, only mono or stereo supported")
    if rate not in INGEST_RATES:
        raise UnsupportedWavError(f"{path}: sample_rate={rate} not in {INGEST_RATES}")
    if block_align != channels * dtype.itemsize:
        raise MalformedWavError(f"{path}: block_align={block_align} inconsistent with channels and bit depth")

    raw = chunks[b"data"]
    n_frames = len(raw) // block_align
    if n_frames == 0:
        raise MalformedWavError(f"{path}: data chunk holds no sample frames")
    x = np.frombuffer(raw[:n_frames * block_align], dtype=dtype).astype(np.float64) / scale
    x = x.reshape(n_frames, channels).mean(axis=1)
    return AudioClip(x, rate)


def write_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as a mono PCM16 file. Samples must already lie in [-1, 1]."""
    if np.max(np.abs(clip.samples)) > 1.0:
        raise ValueError(f"sample out of [-1, 1] (peak {peak(clip):.6g}); apply a peak limit first")
    codes = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    with wave.open(os.fspath(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(codes.tobytes())


# -- signal arithmetic --


def resample(clip: AudioClip, target_hz: int) -> AudioClip:
    """Polyphase windowed-sinc resampling; output has ``round(n * target / source)`` samples."""
    target_hz = check_sample_rate(target_hz)
    if target_hz < MIN_RESAMPLE_RATE:
        raise ValueError(f"target rate {target_hz} Hz is below {MIN_RESAMPLE_RATE} Hz")
    if target_hz == clip.sample_rate:
        return clip
    ratio = Fraction(target_hz, clip.sample_rate)
    y = resample_poly(clip.samples, ratio.numerator, ratio.denominator)
    n_out = int(round(len(clip) * target_hz / clip.sample_rate))
    if y.size >= n_out:
        y = y[:n_out]
    else:
        y = np.pad(y, (0, n_out - y.size))
    return AudioClip(y, target_hz)


def to_analysis_rate(clip: AudioClip) -> AudioClip:
    return resample(clip, ANALYSIS_RATE)


def rms(clip: AudioClip) -> float:
    return float(np.sqrt(np.mean(np.square(clip.samples))))


def peak(clip: AudioClip) -> float:
    return float(np.max(np.abs(clip.samples)))


def scale(clip: AudioClip, gain: float) -> AudioClip:
    if gain == 1.0:
        return clip
    return AudioClip(clip.samples * gain, clip.sample_rate)


def span_to_samples(span: SourceSpan, rate: int) -> tuple[int, int]:
    """Start index and length in samples for ``span`` at ``rate``."""
    return int(round(span.start_s * rate)), int(round(span.duration_s * rate))


def excerpt(clip: AudioClip, span: SourceSpan) -> AudioClip:
    start, n = span_to_samples(span, clip.sample_rate)
    if n <= 0:
        raise ValueError(f"span {span} is shorter than one sample")
    if start + n > len(clip):
        raise ValueError(
            f"span [{span.start_s}, {span.start_s + span.duration_s}) s exceeds "
            f"source duration {clip.duration_s:.6f} s"
        )
    return AudioClip(clip.samples[start:start + n], clip.sample_rate)


def mix_at(base: AudioClip, overlay: AudioClip, offset_samples: int) -> AudioClip:
    """Sum ``overlay`` into ``base`` starting at ``offset_samples``.

    The result covers both signals: its length is ``max(len(base), offset + len(overlay))``.
    """
    if base.sample_rate != overlay.sample_rate:
        raise ValueError(f"sample rate mismatch: {base.sample_rate} vs {overlay.sample_rate}")
    if offset_samples < 0:
        raise ValueError(f"offset_samples must be non-negative, got {offset_samples}")
    n = max(len(base), offset_samples + len(overlay))
    out = np.zeros(n)
    out[:len(base)] += base.samples
    out[offset_samples:offset_samples + len(overlay)] += overlay.samples
    return AudioClip(out, base.sample_rate)


def silence(duration_s: float, sample_rate: int) -> AudioClip:
    return AudioClip(np.zeros(int(math.ceil(duration_s * sample_rate))), sample_rate)
