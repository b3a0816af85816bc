"""Loudness-controlled, musically matched mixing of a piano excerpt with a violin excerpt."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .audio import AudioClip, SourceSpan, mix_at, peak, resample, rms, scale
from .features import KeyLabel, compatible_keys, detect_onsets
from .midi import HOP_S, NoteList, OnsetGrid, n_frames_for, notes_to_onset_grid, shift_notes

STRATEGIES = ("random", "key", "onset", "key_onset", "original_pair")
ONSET_STRATEGIES = ("onset", "key_onset")
KEY_STRATEGIES = ("key", "key_onset")

_SILENCE_RMS = 1e-6


class MixError(ValueError):
    """A pair of excerpts cannot be mixed; the caller should draw another pair."""


class SilentExcerptError(MixError):
    pass


class GeometryError(MixError):
    pass


@dataclass(frozen=True)
class MixParams:
    """Mixing hyper-parameters.

    ``rms_ratio`` fixes the piano/violin RMS ratio (evaluation setting); when it
    is None the ratio is drawn uniformly from ``rms_range`` (training setting).
    """

    rms_ratio: float | None = None
    rms_range: tuple[float, float] = (0.3, 1.2)
    piano_excerpt_s: float = 20.0
    violin_extra_s: float = 5.5
    peak_cap: float = 0.99
    onset_tolerance_frames: int = 0
    key_retry_limit: int = 100
    hop_s: float = HOP_S
    rng_seed: int = 0
    onset_params: dict = field(default_factory=dict)

    def __post_init__(self):
        lo, hi = self.rms_range
        if not 0 < lo <= hi:
            raise ValueError(f"rms_range must satisfy 0 < lo <= hi, got {self.rms_range}")
        if self.rms_ratio is not None and not self.rms_ratio > 0:
            raise ValueError(f"rms_ratio must be positive, got {self.rms_ratio}")
        if not 0 < self.peak_cap <= 1:
            raise ValueError(f"peak_cap must lie in (0, 1], got {self.peak_cap}")
        if not self.piano_excerpt_s > 0:
            raise ValueError("piano_excerpt_s must be positive")
        if self.violin_extra_s < 0:
            raise ValueError("violin_extra_s must be non-negative")
        if self.onset_tolerance_frames < 0:
            raise ValueError("onset_tolerance_frames must be non-negative")
        if self.key_retry_limit < 1:
            raise ValueError("key_retry_limit must be positive")

    @property
    def violin_excerpt_s(self) -> float:
        return self.piano_excerpt_s + self.violin_extra_s

    @property
    def max_shift_frames(self) -> int:
        return int(math.floor(self.violin_extra_s / self.hop_s + 1e-9))


def _key_to_str(key):
    return None if key is None else str(key)


def _key_from_str(text):
    return None if text is None else KeyLabel.parse(text)


@dataclass(frozen=True)
class MixRecipe:
    """Everything needed to rebuild one mixture from its sources."""

    strategy: str
    piano_span: SourceSpan
    violin_span: SourceSpan
    rms_ratio: float
    violin_gain: float
    shift_frames: int
    post_gain: float
    seed: int
    sample_rate: int
    hop_s: float = HOP_S
    piano_key: KeyLabel | None = None
    violin_key: KeyLabel | None = None
    overlap_count: int | None = None
    key_fallback: bool = False

    @property
    def offset_samples(self) -> int:
        return int(round(self.shift_frames * self.hop_s * self.sample_rate))

    @property
    def label_shift_s(self) -> float:
        return self.shift_frames * self.hop_s

    def to_dict(self) -> dict:
        return {
            "strategy": self.strategy,
            "piano_span": self.piano_span.to_dict(),
            "violin_span": self.violin_span.to_dict(),
            "rms_ratio": self.rms_ratio,
            "violin_gain": self.violin_gain,
            "shift_frames": self.shift_frames,
            "post_gain": self.post_gain,
            "seed": self.seed,
            "sample_rate": self.sample_rate,
            "hop_s": self.hop_s,
            "piano_key": _key_to_str(self.piano_key),
            "violin_key": _key_to_str(self.violin_key),
            "overlap_count": self.overlap_count,
            "key_fallback": self.key_fallback,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MixRecipe":
        return cls(
            strategy=d["strategy"],
            piano_span=SourceSpan.from_dict(d["piano_span"]),
            violin_span=SourceSpan.from_dict(d["violin_span"]),
            rms_ratio=float(d["rms_ratio"]),
            violin_gain=float(d["violin_gain"]),
            shift_frames=int(d["shift_frames"]),
            post_gain=float(d["post_gain"]),
            seed=int(d["seed"]),
            sample_rate=int(d["sample_rate"]),
            hop_s=float(d.get("hop_s", HOP_S)),
            piano_key=_key_from_str(d.get("piano_key")),
            violin_key=_key_from_str(d.get("violin_key")),
            overlap_count=d.get("overlap_count"),
            key_fallback=bool(d.get("key_fallback", False)),
        )


class MixResult(NamedTuple):
    clip: AudioClip
    notes: NoteList
    recipe: MixRecipe


# -- loudness --


def draw_rms_ratio(params: MixParams, rng: np.random.Generator) -> float:
    if params.rms_ratio is not None:
        return float(params.rms_ratio)
    lo, hi = params.rms_range
    return float(rng.uniform(lo, hi))


def compute_violin_gain(piano: AudioClip, violin: AudioClip, ratio: float) -> float:
    """Gain ``g`` with ``rms(piano) / rms(g * violin) == ratio``. The piano is left alone."""
    if not ratio > 0:
        raise ValueError(f"ratio must be positive, got {ratio}")
    rp, rv = rms(piano), rms(violin)
    if rp <= _SILENCE_RMS:
        raise SilentExcerptError(f"piano excerpt is silent (rms {rp:.3g})")
    if rv <= _SILENCE_RMS:
        raise SilentExcerptError(f"violin excerpt is silent (rms {rv:.3g})")
    return rp / (ratio * rv)


def apply_peak_limit(clip: AudioClip, cap: float = 0.99) -> tuple[AudioClip, float]:
    """Scale the whole clip so its peak does not exceed ``cap``; returns ``(clip, post_gain)``."""
    if not 0 < cap <= 1:
        raise ValueError(f"cap must lie in (0, 1], got {cap}")
    p = peak(clip)
    if p <= cap:
        return clip, 1.0
    gain = cap / p
    out = scale(clip, gain)
    # cap / p can round up by an ulp; step down until the bound holds exactly
    while peak(out) > cap:
        gain = float(np.nextafter(gain, 0.0))
        out = scale(clip, gain)
    return out, gain


# -- onset alignment --


def _check_grids(piano: OnsetGrid, violin: OnsetGrid):
    if not math.isclose(piano.hop_s, violin.hop_s, rel_tol=1e-9):
        raise ValueError(f"onset grids use different hops: {piano.hop_s} vs {violin.hop_s}")


def _dilated_violin(violin: OnsetGrid, tol_frames: int, length: int) -> np.ndarray:
    """Boolean mask over frames within ``tol_frames`` of any violin onset."""
    mask = np.zeros(length, dtype=bool)
    for d in range(-tol_frames, tol_frames + 1):
        idx = violin.onset_frames + d
        idx = idx[(idx >= 0) & (idx < length)]
        mask[idx] = True
    return mask


def count_overlap(piano: OnsetGrid, violin: OnsetGrid, shift_frames: int, tol_frames: int = 0) -> int:
    """Number of piano onsets that, moved by ``shift_frames``, land within ``tol_frames``
    of some violin onset. Each piano onset counts at most once."""
    _check_grids(piano, violin)
    if shift_frames < 0 or tol_frames < 0:
        raise ValueError("shift_frames and tol_frames must be non-negative")
    if len(piano) == 0 or len(violin) == 0:
        return 0
    length = int(violin.onset_frames[-1]) + tol_frames + 1
    mask = _dilated_violin(violin, tol_frames, length)
    pos = piano.onset_frames + shift_frames
    pos = pos[pos < length]
    return int(mask[pos].sum())


def best_shift(piano: OnsetGrid, violin: OnsetGrid, max_shift_frames: int, tol_frames: int = 0) -> tuple[int, int]:
    """Exhaustive scan of shifts ``0..max_shift_frames``; returns ``(shift, overlap)``.

    Ties resolve to the smallest shift.
    """
    _check_grids(piano, violin)
    if max_shift_frames < 0:
        raise ValueError("max_shift_frames must be non-negative")
    if len(piano) == 0 or len(violin) == 0:
        return 0, 0
    length = int(violin.onset_frames[-1]) + tol_frames + 1
    mask = np.append(_dilated_violin(violin, tol_frames, length), False)
    shifts = np.arange(max_shift_frames + 1)
    pos = piano.onset_frames[None, :] + shifts[:, None]
    pos = np.where(pos < length, pos, length)  # index ``length`` is the appended False
    counts = mask[pos].sum(axis=1)
    k = int(np.argmax(counts))
    return k, int(counts[k])


# -- excerpt selection --


def sample_span(sources: Sequence, duration_s: float, rng: np.random.Generator) -> SourceSpan:
    """Uniform source, then uniform start, among sources at least ``duration_s`` long.

    ``sources`` items need ``source_id`` and ``duration_s`` attributes.
    """
    eligible = [s for s in sources if s.duration_s >= duration_s]
    if not eligible:
        raise GeometryError(f"no source is at least {duration_s} s long")
    src = eligible[int(rng.integers(len(eligible)))]
    start = float(rng.uniform(0.0, src.duration_s - duration_s))
    return SourceSpan(src.source_id, start, duration_s)


def select_violin_excerpt(
    piano_key: KeyLabel,
    violin_catalog: Sequence,
    duration_s: float,
    rng: np.random.Generator,
    key_of: Callable[[SourceSpan], KeyLabel],
    retry_limit: int = 100,
) -> tuple[SourceSpan, KeyLabel, bool]:
    """Draw violin excerpts until one's key is compatible with ``piano_key``.

    Returns ``(span, key, fallback)``. After ``retry_limit`` rejected draws the
    last draw is returned with ``fallback=True``.
    """
    if not violin_catalog:
        raise ValueError("violin catalog is empty")
    allowed = compatible_keys(piano_key)
    for _ in range(retry_limit):
        span = sample_span(violin_catalog, duration_s, rng)
        key = key_of(span)
        if key in allowed:
            return span, key, False
    return span, key, True


# -- mixing --


def _onset_grid(clip: AudioClip, notes: NoteList | None, hop_s: float, onset_params: dict) -> OnsetGrid:
    if notes is not None:
        return notes_to_onset_grid(notes, hop_s, n_frames_for(clip.duration_s, hop_s))
    return detect_onsets(clip, **onset_params)


def render_mix(piano: AudioClip, violin: AudioClip, violin_gain: float, offset_samples: int,
               post_gain: float | None = None, peak_cap: float = 0.99) -> tuple[AudioClip, float]:
    """Violin scaled by ``violin_gain`` with the piano inserted at ``offset_samples``.

    With ``post_gain`` None the peak limit is computed, otherwise the given
    gain is applied verbatim (replay).
    """
    mixed = mix_at(scale(violin, violin_gain), piano, offset_samples)
    if post_gain is None:
        return apply_peak_limit(mixed, peak_cap)
    return scale(mixed, post_gain), post_gain


def mix_pair(
    piano: AudioClip,
    piano_notes: NoteList | None,
    violin: AudioClip,
    violin_notes: NoteList | None,
    strategy: str,
    params: MixParams,
    rng: np.random.Generator,
    *,
    piano_span: SourceSpan | None = None,
    violin_span: SourceSpan | None = None,
    piano_key: KeyLabel | None = None,
    violin_key: KeyLabel | None = None,
    key_fallback: bool = False,
    seed: int | None = None,
) -> MixResult:
    """Mix one piano excerpt with one violin excerpt.

    The violin is gain-matched to the drawn RMS ratio, the piano is placed at
    shift 0 (random/key/original_pair) or at the onset-overlap-maximizing shift
    (onset/key_onset), and the sum is peak-limited. Onset grids come from the
    note lists when given, otherwise from ``detect_onsets``. Returned labels are
    the piano notes moved by the same shift.
    """
    if strategy not in STRATEGIES:
        raise ValueError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
    if violin.sample_rate != piano.sample_rate:
        violin = resample(violin, piano.sample_rate)
    rate = piano.sample_rate
    hop = params.hop_s

    slack = len(violin) - len(piano)
    if strategy in ONSET_STRATEGIES:
        need = int(round(params.violin_extra_s * rate))
        if slack < need:
            raise GeometryError(
                f"violin excerpt {violin.duration_s:.3f} s is shorter than piano "
                f"{piano.duration_s:.3f} s + {params.violin_extra_s} s")
    elif slack < 0:
        raise GeometryError("violin excerpt is shorter than the piano excerpt")

    ratio = draw_rms_ratio(params, rng)
    gain = compute_violin_gain(piano, violin, ratio)

    shift, overlap = 0, None
    if strategy in ONSET_STRATEGIES:
        p_grid = _onset_grid(piano, piano_notes, hop, params.onset_params)
        v_grid = _onset_grid(violin, violin_notes, hop, params.onset_params)
        max_shift = params.max_shift_frames
        while max_shift > 0 and int(round(max_shift * hop * rate)) > slack:
            max_shift -= 1
        shift, overlap = best_shift(p_grid, v_grid, max_shift, params.onset_tolerance_frames)

    offset = int(round(shift * hop * rate))
    clip, post_gain = render_mix(piano, violin, gain, offset, peak_cap=params.peak_cap)
    notes = shift_notes(piano_notes, shift * hop) if piano_notes is not None else NoteList()

    recipe = MixRecipe(
        strategy=strategy,
        piano_span=piano_span or SourceSpan("<piano>", 0.0, piano.duration_s),
        violin_span=violin_span or SourceSpan("<violin>", 0.0, violin.duration_s),
        rms_ratio=ratio,
        violin_gain=gain,
        shift_frames=shift,
        post_gain=post_gain,
        seed=params.rng_seed if seed is None else seed,
        sample_rate=rate,
        hop_s=hop,
        piano_key=piano_key,
        violin_key=violin_key,
        overlap_count=overlap,
        key_fallback=key_fallback,
    )
    return MixResult(clip, notes, recipe)


def replay_mix(recipe: MixRecipe, piano: AudioClip, violin: AudioClip) -> AudioClip:
    """Rebuild a mixture from its recipe and the two excerpts it names."""
    if violin.sample_rate != recipe.sample_rate:
        violin = resample(violin, recipe.sample_rate)
    if piano.sample_rate != recipe.sample_rate:
        piano = resample(piano, recipe.sample_rate)
    clip, _ = render_mix(piano, violin, recipe.violin_gain, recipe.offset_samples, post_gain=recipe.post_gain)
    return clip

