"""Musically controlled violin-piano mixing for piano transcription training data,
plus mir_eval-style transcription metrics."""

__version__ = "0.1.0"

from .audio import AudioClip, SourceSpan, excerpt, mix_at, peak, read_wav, resample, rms, scale, write_wav
from .evaluation import MatchConfig, MetricReport, PRF, evaluate, frame_prf, match_notes, note_prf
from .features import (
    ChromaExtractor, KeyEstimator, KeyLabel, OnsetDetector, chromagram, compatible_keys,
    detect_onsets, estimate_key, stft_magnitude,
)
from .midi import (
    NoteEvent, NoteList, OnsetGrid, PianoRoll, notes_to_onset_grid, notes_to_piano_roll,
    parse_midi, shift_notes, write_midi,
)
from .mixer import (
    MixParams, MixRecipe, apply_peak_limit, best_shift, compute_violin_gain, count_overlap,
    mix_pair, replay_mix, select_violin_excerpt,
)

__all__ = [
    "AudioClip", "SourceSpan", "excerpt", "mix_at", "peak", "read_wav", "resample", "rms", "scale", "write_wav",
    "MatchConfig", "MetricReport", "PRF", "evaluate", "frame_prf", "match_notes", "note_prf",
    "ChromaExtractor", "KeyEstimator", "KeyLabel", "OnsetDetector", "chromagram", "compatible_keys",
    "detect_onsets", "estimate_key", "stft_magnitude",
    "NoteEvent", "NoteList", "OnsetGrid", "PianoRoll", "notes_to_onset_grid", "notes_to_piano_roll",
    "parse_midi", "shift_notes", "write_midi",
    "MixParams", "MixRecipe", "apply_peak_limit", "best_shift", "compute_violin_gain", "count_overlap",
    "mix_pair", "replay_mix", "select_violin_excerpt",
]
