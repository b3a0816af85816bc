"""Spectral features: STFT magnitude, spectral-flux onsets, chroma and key estimation.

The plain functions are the primary API. ``OnsetDetector``, ``ChromaExtractor``
and ``KeyEstimator`` wrap them as scikit-learn estimators so the thresholds are
ordinary hyper-parameters (``get_params``/``set_params``) and the steps compose
in a ``Pipeline``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import get_window
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .audio import ANALYSIS_RATE, AudioClip, rms, to_analysis_rate
from .midi import OnsetGrid
from .validation import check_chroma, check_clips

N_FFT = 2048
HOP_LENGTH = 512

PITCH_CLASS_NAMES = ("C", "C#", "D", "Eb", "E", "F", "F#", "G", "Ab", "A", "Bb", "B")

# Krumhansl-Kessler probe-tone ratings, tonic first
KK_MAJOR = np.array([6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88])
KK_MINOR = np.array([6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17])


class SilentInputError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Spectrogram:
    hop_s: float
    magnitudes: np.ndarray  # (n_frames, n_bins)
    bin_freqs_hz: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[0]


@dataclass(frozen=True, order=True)
class KeyLabel:
    tonic: int
    mode: str  # "major" | "minor"

    def __post_init__(self):
        if not 0 <= self.tonic < 12:
            raise ValueError(f"tonic must be a pitch class 0-11, got {self.tonic}")
        if self.mode not in ("major", "minor"):
            raise ValueError(f"mode must be 'major' or 'minor', got {self.mode!r}")

    def __str__(self):
        return PITCH_CLASS_NAMES[self.tonic] + ("m" if self.mode == "minor" else "")

    def transpose(self, k: int) -> "KeyLabel":
        return KeyLabel((self.tonic + k) % 12, self.mode)

    @classmethod
    def parse(cls, text: str) -> "KeyLabel":
        """Parse names like ``"E"``, ``"Am"``, ``"F#m"``, ``"Bb"``, ``"C# minor"``."""
        s = text.strip().replace(" ", "")
        mode = "major"
        low = s.lower()
        for suffix, m in (("minor", "minor"), ("min", "minor"), ("major", "major"), ("maj", "major"), ("m", "minor")):
            if low.endswith(suffix) and len(s) > len(suffix):
                s, mode = s[: -len(suffix)], m
                break
        letter = {"C": 0, "D": 2, "E": 4, "F": 5, "G": 7, "A": 9, "B": 11}.get(s[:1].upper())
        if letter is None:
            raise ValueError(f"cannot parse key {text!r}")
        for acc in s[1:]:
            if acc == "#":
                letter += 1
            elif acc == "b":
                letter -= 1
            else:
                raise ValueError(f"cannot parse key {text!r}")
        return cls(letter % 12, mode)


ALL_KEYS = tuple(KeyLabel(t, m) for t in range(12) for m in ("major", "minor"))


# -- spectral analysis --


def stft_magnitude(clip: AudioClip, n_fft: int = N_FFT, hop_length: int = HOP_LENGTH) -> Spectrogram:
    """Hann-windowed magnitude STFT without padding.

    Frame ``k`` covers samples ``[k * hop, k * hop + n_fft)``, so there are
    ``1 + (len - n_fft) // hop`` frames.
    """
    x = clip.samples
    if x.size < n_fft:
        raise ValueError(f"clip has {x.size} samples, shorter than one {n_fft}-sample window")
    window = get_window("hann", n_fft)
    frames = np.lib.stride_tricks.sliding_window_view(x, n_fft)[::hop_length]
    mags = np.abs(np.fft.rfft(frames * window, axis=1))
    freqs = np.fft.rfftfreq(n_fft, 1.0 / clip.sample_rate)
    return Spectrogram(hop_length / clip.sample_rate, mags, freqs)


def onset_envelope(clip: AudioClip, log_compression: float = 100.0) -> np.ndarray:
    """Half-wave-rectified spectral flux of ``log(1 + C * |X|)`` on centred frames."""
    clip = to_analysis_rate(clip)
    padded = AudioClip(np.pad(clip.samples, N_FFT // 2), clip.sample_rate)
    logmag = np.log1p(log_compression * stft_magnitude(padded).magnitudes)
    flux = np.zeros(logmag.shape[0])
    flux[1:] = np.maximum(np.diff(logmag, axis=0), 0.0).sum(axis=1)
    # centred windows peak about one hop before the onset; the one-frame delay puts
    # peaks in the frame that contains the onset, matching MIDI-derived grids
    return np.concatenate([[0.0], flux[:-1]])


def peak_pick(envelope, pre_max=1, post_max=1, pre_avg=3, post_avg=3, delta=0.07, wait=1) -> np.ndarray:
    """Indices that are local maxima, exceed the local mean by ``delta`` and respect ``wait``.

    Windows are inclusive and truncated at the edges.
    """
    x = np.asarray(envelope, dtype=float)
    n = x.size
    picked = []
    last = None
    for k in range(n):
        if x[k] < x[max(0, k - pre_max):min(n, k + post_max + 1)].max():
            continue
        if x[k] < x[max(0, k - pre_avg):min(n, k + post_avg + 1)].mean() + delta:
            continue
        if last is not None and k - last < wait:
            continue
        picked.append(k)
        last = k
    return np.array(picked, dtype=np.int64)


def detect_onsets(clip: AudioClip, pre_max=1, post_max=1, pre_avg=3, post_avg=3,
                  delta=0.07, wait=1, log_compression=100.0) -> OnsetGrid:
    """Estimate note onsets on the 32 ms analysis grid (512 samples at 16 kHz).

    The flux envelope is max-normalized before peak picking, so ``delta`` is a
    fraction of the strongest onset. Digital silence yields an empty grid.
    """
    env = onset_envelope(clip, log_compression)
    hop_s = HOP_LENGTH / ANALYSIS_RATE
    top = env.max()
    if top <= 0:
        return OnsetGrid(hop_s, np.empty(0, dtype=np.int64), env.size)
    frames = peak_pick(env / top, pre_max, post_max, pre_avg, post_avg, delta, wait)
    return OnsetGrid(hop_s, frames, env.size)


def chromagram(clip: AudioClip) -> np.ndarray:
    """Time-summed pitch-class energy profile, L1-normalized, indexed C=0 ... B=11.

    Each STFT bin's squared magnitude goes to the pitch class of its nearest
    MIDI pitch; bins nearest to pitches outside 24-108 are ignored.
    """
    clip = to_analysis_rate(clip)
    if rms(clip) <= 1e-6:
        raise SilentInputError("cannot compute chroma of a silent clip")
    spec = stft_magnitude(clip) if len(clip) >= N_FFT else stft_magnitude(
        AudioClip(np.pad(clip.samples, (0, N_FFT - len(clip))), clip.sample_rate))
    energy = np.square(spec.magnitudes).sum(axis=0)
    freqs = spec.bin_freqs_hz
    valid = freqs > 0
    midi = np.full(freqs.shape, -1)
    midi[valid] = np.round(69 + 12 * np.log2(freqs[valid] / 440.0)).astype(int)
    keep = (midi >= 24) & (midi <= 108)
    chroma = np.bincount(midi[keep] % 12, weights=energy[keep], minlength=12)
    total = chroma.sum()
    if total <= 0:
        raise SilentInputError("no spectral energy inside the MIDI 24-108 range")
    return chroma / total


# -- key estimation --


def key_templates(major=KK_MAJOR, minor=KK_MINOR) -> np.ndarray:
    """The 24 rotated profiles, row order matching ``ALL_KEYS``."""
    rows = []
    for t in range(12):
        rows.append(np.roll(major, t))
        rows.append(np.roll(minor, t))
    return np.array(rows)


def key_correlations(chroma, templates=None) -> np.ndarray:
    """Pearson correlation of each chroma row against each template row, shape ``(n, 24)``."""
    X = check_chroma(chroma)
    T = key_templates() if templates is None else np.asarray(templates, dtype=float)
    Xc = X - X.mean(axis=1, keepdims=True)
    Tc = T - T.mean(axis=1, keepdims=True)
    num = Xc @ Tc.T
    den = np.linalg.norm(Xc, axis=1)[:, None] * np.linalg.norm(Tc, axis=1)[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / den, 0.0)
    return r


def estimate_key(chroma) -> KeyLabel:
    """Best-correlated Krumhansl-Kessler key. Ties go to the lower tonic, then major."""
    return ALL_KEYS[int(np.argmax(key_correlations(chroma)[0]))]


def compatible_keys(piano_key: KeyLabel) -> frozenset:
    """Violin keys accepted for a piano excerpt in ``piano_key``.

    Major tonic T: T, its dominant and subdominant majors, and the subdominant minor.
    Minor tonic t: t minor, the (harmonic-minor) dominant major, and the
    subdominant and dominant minors.
    """
    t = piano_key.tonic
    if piano_key.mode == "major":
        keys = (KeyLabel(t, "major"), KeyLabel((t + 7) % 12, "major"),
                KeyLabel((t + 5) % 12, "major"), KeyLabel((t + 5) % 12, "minor"))
    else:
        keys = (KeyLabel(t, "minor"), KeyLabel((t + 7) % 12, "major"),
                KeyLabel((t + 5) % 12, "minor"), KeyLabel((t + 7) % 12, "minor"))
    return frozenset(keys)


# -- estimator wrappers --


class OnsetDetector(TransformerMixin, BaseEstimator):
    """Stateless transformer: clips in, one ``OnsetGrid`` per clip out."""

    def __init__(self, pre_max=1, post_max=1, pre_avg=3, post_avg=3, delta=0.07, wait=1,
                 log_compression=100.0):
        self.pre_max = pre_max
        self.post_max = post_max
        self.pre_avg = pre_avg
        self.post_avg = post_avg
        self.delta = delta
        self.wait = wait
        self.log_compression = log_compression

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> list:
        return [detect_onsets(c, **self.get_params()) for c in check_clips(X)]

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags


class ChromaExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer: clips in, ``(n_clips, 12)`` chroma matrix out."""

    def fit(self, X=None, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        return np.vstack([chromagram(c) for c in check_clips(X)])

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags


class KeyEstimator(BaseEstimator):
    """Template-correlation key classifier over 12-bin chroma vectors.

    ``fit`` only materializes the 24 rotated templates; no data is learned, so
    ``X`` and ``y`` are ignored.
    """

    def __init__(self, major_profile=None, minor_profile=None):
        self.major_profile = major_profile
        self.minor_profile = minor_profile

    def fit(self, X=None, y=None):
        major = KK_MAJOR if self.major_profile is None else np.asarray(self.major_profile, float)
        minor = KK_MINOR if self.minor_profile is None else np.asarray(self.minor_profile, float)
        if major.shape != (12,) or minor.shape != (12,):
            raise ValueError("key profiles must have 12 entries")
        self.templates_ = key_templates(major, minor)
        self.classes_ = np.array(ALL_KEYS, dtype=object)
        return self

    def decision_function(self, X) -> np.ndarray:
        check_is_fitted(self, "templates_")
        return key_correlations(X, self.templates_)

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "templates_")
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
