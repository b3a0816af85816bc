"""Note events, Standard MIDI File I/O, and rasterization onto frame grids."""

from __future__ import annotations

import math
import os
import warnings
from dataclasses import dataclass
from typing import Iterable, Iterator, Sequence

import mido
import numpy as np

HOP_S = 0.032
PIANO_MIN_PITCH = 21
PIANO_MAX_PITCH = 108
N_PIANO_KEYS = PIANO_MAX_PITCH - PIANO_MIN_PITCH + 1

WRITE_PPQ = 480
WRITE_TEMPO = 500000  # microseconds per quarter, i.e. 120 BPM
_TICKS_PER_SECOND = WRITE_PPQ * 1_000_000 / WRITE_TEMPO

# absorbs float error in t / hop so that exact multiples of the hop land on their own frame
_FRAME_EPS = 1e-9


class MidiFormatError(ValueError):
    pass


@dataclass(frozen=True)
class NoteEvent:
    pitch: int
    onset_s: float
    offset_s: float
    velocity: int = 64

    def __post_init__(self):
        if not 0 <= self.pitch <= 127:
            raise ValueError(f"pitch {self.pitch} outside 0-127")
        if not 1 <= self.velocity <= 127:
            raise ValueError(f"velocity {self.velocity} outside 1-127")
        if not (math.isfinite(self.onset_s) and math.isfinite(self.offset_s)):
            raise ValueError("note times must be finite")
        if self.onset_s < 0:
            raise ValueError(f"onset {self.onset_s} is negative")
        if not self.offset_s > self.onset_s:
            raise ValueError(f"offset {self.offset_s} must exceed onset {self.onset_s}")

    @property
    def duration_s(self) -> float:
        return self.offset_s - self.onset_s


class NoteList(Sequence):
    """Immutable note sequence kept sorted by ``(onset_s, pitch)``."""

    __slots__ = ("_notes",)

    def __init__(self, notes: Iterable[NoteEvent] = ()):
        self._notes = tuple(sorted(notes, key=lambda n: (n.onset_s, n.pitch, n.offset_s, n.velocity)))

    @classmethod
    def from_tuples(cls, rows) -> "NoteList":
        """Build from ``(pitch, onset_s, offset_s, velocity)`` tuples."""
        return cls(NoteEvent(int(p), float(on), float(off), int(v)) for p, on, off, v in rows)

    def __getitem__(self, i):
        return self._notes[i]

    def __len__(self):
        return len(self._notes)

    def __iter__(self) -> Iterator[NoteEvent]:
        return iter(self._notes)

    def __eq__(self, other):
        return isinstance(other, NoteList) and self._notes == other._notes

    def __hash__(self):
        return hash(self._notes)

    def __repr__(self):
        return f"NoteList({len(self)} notes)"

    @property
    def pitches(self) -> np.ndarray:
        return np.array([n.pitch for n in self._notes], dtype=int)

    @property
    def onsets(self) -> np.ndarray:
        return np.array([n.onset_s for n in self._notes], dtype=float)

    @property
    def offsets(self) -> np.ndarray:
        return np.array([n.offset_s for n in self._notes], dtype=float)

    @property
    def velocities(self) -> np.ndarray:
        return np.array([n.velocity for n in self._notes], dtype=int)

    @property
    def end_s(self) -> float:
        return max((n.offset_s for n in self._notes), default=0.0)


@dataclass(frozen=True, eq=False)
class OnsetGrid:
    """Sorted unique onset frame indices on a grid of ``n_frames`` frames of ``hop_s`` seconds."""

    hop_s: float
    onset_frames: np.ndarray
    n_frames: int

    def __post_init__(self):
        if not self.hop_s > 0:
            raise ValueError(f"hop_s must be positive, got {self.hop_s}")
        frames = np.asarray(self.onset_frames, dtype=np.int64).ravel()
        if frames.size and (np.any(np.diff(frames) <= 0) or frames[0] < 0):
            raise ValueError("onset_frames must be strictly increasing and non-negative")
        if frames.size and frames[-1] >= self.n_frames:
            raise ValueError(f"onset frame {frames[-1]} is beyond n_frames={self.n_frames}")
        frames.setflags(write=False)
        object.__setattr__(self, "onset_frames", frames)
        object.__setattr__(self, "n_frames", int(self.n_frames))

    def __len__(self):
        return self.onset_frames.size

    def __eq__(self, other):
        return (
            isinstance(other, OnsetGrid)
            and self.hop_s == other.hop_s
            and self.n_frames == other.n_frames
            and np.array_equal(self.onset_frames, other.onset_frames)
        )

    @property
    def times_s(self) -> np.ndarray:
        return self.onset_frames * self.hop_s


@dataclass(frozen=True, eq=False)
class PianoRoll:
    """Boolean ``(n_frames, 88)`` activity matrix; column 0 is MIDI pitch 21."""

    hop_s: float
    activity: np.ndarray

    def __post_init__(self):
        act = np.asarray(self.activity, dtype=bool)
        if act.ndim != 2 or act.shape[1] != N_PIANO_KEYS:
            raise ValueError(f"activity must be (n_frames, {N_PIANO_KEYS}), got {act.shape}")
        object.__setattr__(self, "activity", act)

    @property
    def n_frames(self) -> int:
        return self.activity.shape[0]


# -- reading --


def parse_midi(path) -> NoteList:
    """Parse an SMF (type 0 or 1) into notes, applying sustain-pedal extension.

    While CC64 is held (value >= 64) on a channel, released keys keep sounding
    until the pedal is lifted or the same pitch is struck again, whichever
    comes first. A note-on with velocity 0 is a note-off.
    """
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(f"no such MIDI file: {path}")
    try:
        mid = mido.MidiFile(path)
    except (OSError, EOFError, ValueError, KeyError, IndexError) as exc:
        raise MidiFormatError(f"{path}: malformed Standard MIDI File ({exc})") from exc
    if mid.type not in (0, 1):
        raise MidiFormatError(f"{path}: SMF type {mid.type} is not supported")

    notes: list[NoteEvent] = []
    held: dict[tuple[int, int], tuple[float, int]] = {}
    sustained: dict[tuple[int, int], tuple[float, int]] = {}
    pedal = [False] * 16

    def close(start: tuple[float, int], pitch: int, t: float):
        onset, vel = start
        if t > onset:
            notes.append(NoteEvent(pitch, onset, t, vel))

    t = 0.0
    try:
        messages = list(mid)
    except (ValueError, KeyError) as exc:
        raise MidiFormatError(f"{path}: cannot resolve tempo map ({exc})") from exc
    for msg in messages:
        t += msg.time
        if msg.type == "note_on" and msg.velocity > 0:
            key = (msg.channel, msg.note)
            if key in sustained:
                close(sustained.pop(key), msg.note, t)
            if key in held:
                close(held.pop(key), msg.note, t)
            held[key] = (t, msg.velocity)
        elif msg.type in ("note_off", "note_on"):
            key = (msg.channel, msg.note)
            if key in held:
                start = held.pop(key)
                if pedal[msg.channel]:
                    sustained[key] = start
                else:
                    close(start, msg.note, t)
        elif msg.type == "control_change" and msg.control == 64:
            down = msg.value >= 64
            if pedal[msg.channel] and not down:
                for key in [k for k in sustained if k[0] == msg.channel]:
                    close(sustained.pop(key), key[1], t)
            pedal[msg.channel] = down

    if held:
        warnings.warn(f"{path}: {len(held)} note(s) without note-off closed at end of track", stacklevel=2)
    for (_, pitch), start in list(held.items()) + list(sustained.items()):
        close(start, pitch, t)
    return NoteList(notes)


# -- writing --


def write_midi(notes: NoteList, path) -> None:
    """Write notes as a type-0 SMF at 480 PPQ and a fixed 120 BPM."""
    events = []
    for n in notes:
        on = int(round(n.onset_s * _TICKS_PER_SECOND))
        off = max(int(round(n.offset_s * _TICKS_PER_SECOND)), on + 1)
        events.append((on, 1, mido.Message("note_on", note=n.pitch, velocity=n.velocity)))
        events.append((off, 0, mido.Message("note_off", note=n.pitch, velocity=0)))
    # offs sort ahead of ons at the same tick so a re-struck pitch is not cut short
    events.sort(key=lambda e: (e[0], e[1], e[2].note))

    track = mido.MidiTrack()
    track.append(mido.MetaMessage("set_tempo", tempo=WRITE_TEMPO, time=0))
    last = 0
    for tick, _, msg in events:
        track.append(msg.copy(time=tick - last))
        last = tick
    track.append(mido.MetaMessage("end_of_track", time=0))
    mid = mido.MidiFile(type=0, ticks_per_beat=WRITE_PPQ)
    mid.tracks.append(track)
    mid.save(os.fspath(path))


# -- transforms --


def shift_notes(notes: NoteList, delta_s: float) -> NoteList:
    if delta_s < 0:
        raise ValueError(f"delta_s must be non-negative, got {delta_s}")
    if delta_s == 0:
        return notes
    return NoteList(
        NoteEvent(n.pitch, n.onset_s + delta_s, n.offset_s + delta_s, n.velocity) for n in notes
    )


def excerpt_notes(notes: NoteList, start_s: float, duration_s: float) -> NoteList:
    """Notes whose onset falls in the window, re-based to its start with offsets clipped to its end."""
    end_s = start_s + duration_s
    out = []
    for n in notes:
        if start_s <= n.onset_s < end_s:
            out.append(NoteEvent(n.pitch, n.onset_s - start_s, min(n.offset_s, end_s) - start_s, n.velocity))
    return NoteList(out)


def n_frames_for(duration_s: float, hop_s: float = HOP_S) -> int:
    return int(math.ceil(duration_s / hop_s - _FRAME_EPS))


def notes_to_onset_grid(notes: NoteList, hop_s: float = HOP_S, n_frames: int | None = None) -> OnsetGrid:
    """Quantize onsets to ``floor(onset / hop)``; duplicates collapse and out-of-grid frames drop."""
    if not hop_s > 0:
        raise ValueError(f"hop_s must be positive, got {hop_s}")
    if n_frames is None:
        n_frames = n_frames_for(notes.end_s, hop_s)
    frames = np.floor(notes.onsets / hop_s + _FRAME_EPS).astype(np.int64)
    frames = np.unique(frames[frames < n_frames])
    return OnsetGrid(hop_s, frames, n_frames)


def notes_to_piano_roll(notes: NoteList, hop_s: float = HOP_S, n_frames: int | None = None) -> PianoRoll:
    """Frame ``f`` is active for a note iff ``f * hop_s`` lies in ``[onset, offset)``."""
    if n_frames is None:
        n_frames = n_frames_for(notes.end_s, hop_s)
    roll = np.zeros((n_frames, N_PIANO_KEYS), dtype=bool)
    times = np.arange(n_frames) * hop_s
    dropped = 0
    for n in notes:
        if not PIANO_MIN_PITCH <= n.pitch <= PIANO_MAX_PITCH:
            dropped += 1
            continue
        lo = np.searchsorted(times, n.onset_s, side="left")
        hi = np.searchsorted(times, n.offset_s, side="left")
        roll[lo:hi, n.pitch - PIANO_MIN_PITCH] = True
    if dropped:
        warnings.warn(f"{dropped} note(s) outside the piano range dropped from piano roll", stacklevel=2)
    return PianoRoll(hop_s, roll)
