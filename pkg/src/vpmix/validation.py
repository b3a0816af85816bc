"""Input validation helpers shared by the estimators and the plain functions."""

from __future__ import annotations

import numbers

import numpy as np

INGEST_RATES = (16000, 22050, 44100, 48000)


def check_samples(samples) -> np.ndarray:
    """Return ``samples`` as a read-only 1-D float64 array, or raise ValueError."""
    arr = np.array(samples, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"samples must be 1-D, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError("samples must be non-empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples contain NaN or Inf")
    arr.setflags(write=False)
    return arr


def check_sample_rate(rate) -> int:
    if isinstance(rate, bool) or not isinstance(rate, numbers.Integral):
        raise TypeError(f"sample rate must be an integer, got {rate!r}")
    if rate <= 0:
        raise ValueError(f"sample rate must be positive, got {rate}")
    return int(rate)


def check_positive(value, name: str) -> float:
    value = float(value)
    if not np.isfinite(value) or value <= 0:
        raise ValueError(f"{name} must be a positive finite number, got {value}")
    return value


def check_non_negative_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TypeError(f"{name} must be an integer, got {value!r}")
    if value < 0:
        raise ValueError(f"{name} must be non-negative, got {value}")
    return int(value)


def check_chroma(X) -> np.ndarray:
    """Coerce chroma input to a 2-D ``(n, 12)`` array of non-negative weights."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.shape[1] != 12:
        raise ValueError(f"chroma must have 12 columns, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("chroma weights must be finite and non-negative")
    if np.any(arr.sum(axis=1) <= 0):
        raise ValueError("chroma rows must have positive mass")
    return arr


def check_clips(X) -> list:
    """Accept a single AudioClip or an iterable of them; always return a list."""
    from .audio import AudioClip

    if isinstance(X, AudioClip):
        return [X]
    clips = list(X)
    for c in clips:
        if not isinstance(c, AudioClip):
            raise TypeError(f"expected AudioClip, got {type(c).__name__}")
    return clips
