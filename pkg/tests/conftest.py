import numpy as np
import pytest

from vpmix.audio import AudioClip
from vpmix.midi import NoteEvent, NoteList

SR = 16000


def sine(freq, dur=1.0, sr=SR, amp=0.5):
    t = np.arange(int(round(dur * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq * t), sr)


def click_train(times, dur, sr=SR, amps=None):
    x = np.zeros(int(round(dur * sr)))
    for k, t in enumerate(times):
        x[int(round(t * sr))] = 0.8 if amps is None else amps[k]
    return AudioClip(x, sr)


def noise(rng, dur=1.0, sr=SR, amp=0.1):
    return AudioClip(amp * rng.standard_normal(int(round(dur * sr))), sr)


def random_note_pair(rng, max_notes=50):
    """A reference list and a perturbed estimate that exercises every tolerance edge."""
    n_ref = int(rng.integers(0, max_notes + 1))
    ref = []
    for _ in range(n_ref):
        on = round(float(rng.uniform(0, 8)), 3)
        dur = round(float(rng.uniform(0.03, 1.5)), 3)
        ref.append((int(rng.integers(60, 66)), on, on + dur, int(rng.integers(20, 120))))
    est = []
    for p, on, off, v in ref:
        u = rng.random()
        if u < 0.15:
            continue
        if u < 0.25:
            p = p + 1 if p < 108 else p - 1
        d_on = float(rng.choice([0.0, 0.05, -0.05, rng.uniform(-0.08, 0.08)]))
        d_off = float(rng.choice([0.0, rng.uniform(-0.4, 0.4)]))
        new_on = max(0.0, on + d_on)
        new_off = max(new_on + 0.01, off + d_off)
        new_v = int(np.clip(v + rng.integers(-25, 26), 1, 127))
        est.append((p, new_on, new_off, new_v))
    for _ in range(int(rng.integers(0, max(1, max_notes - len(est)) // 3 + 1))):
        if len(est) >= max_notes:
            break
        on = float(rng.uniform(0, 8))
        est.append((int(rng.integers(60, 66)), on, on + float(rng.uniform(0.03, 1.0)), int(rng.integers(1, 128))))
    return NoteList.from_tuples(ref), NoteList.from_tuples(est)


def as_tuples(notes):
    return [(n.pitch, n.onset_s, n.offset_s, n.velocity) for n in notes]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def three_notes():
    return NoteList([NoteEvent(60, 0.0, 0.5, 80), NoteEvent(64, 0.5, 1.0, 70), NoteEvent(67, 1.0, 2.0, 90)])


# -- acceptance summary --

ACCEPTANCE_LINES = []


def pytest_sessionstart(session):
    import time
    session.config._vpmix_t0 = time.perf_counter()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    import time
    if not ACCEPTANCE_LINES:
        return
    elapsed = time.perf_counter() - config._vpmix_t0
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    verdict = "PASS" if elapsed < 120 else "FAIL"
    terminalreporter.write_line(f"[{verdict}] suite runtime: {elapsed:.1f} s (limit 120 s)")
