import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.signal import get_window

from vpmix.audio import AudioClip, scale
from vpmix.features import (
    ALL_KEYS, KeyLabel, SilentInputError, chromagram, compatible_keys, detect_onsets, estimate_key,
    key_correlations, peak_pick, stft_magnitude,
)

from conftest import SR, click_train, sine
from oracles import brute_key, pearson, KK_MAJOR

MAJOR_STEPS = (0, 2, 4, 5, 7, 9, 11)
HARMONIC_MINOR_STEPS = (0, 2, 3, 5, 7, 8, 11)


def scale_chroma(tonic, mode):
    v = np.zeros(12)
    steps = MAJOR_STEPS if mode == "major" else HARMONIC_MINOR_STEPS
    v[[(tonic + s) % 12 for s in steps]] = 1.0
    return v / v.sum()


class TestStft:
    def test_sine_peak_bin(self):
        spec = stft_magnitude(sine(440))
        assert abs(int(np.argmax(spec.magnitudes.mean(axis=0))) - 440 * 2048 / SR) <= 1

    def test_frame_count_and_silence(self):
        spec = stft_magnitude(AudioClip(np.zeros(SR), SR))
        assert spec.n_frames == 1 + (SR - 2048) // 512
        assert not spec.magnitudes.any()

    def test_parseval(self, rng):
        # one windowed frame: sum |x w|^2 equals the one-sided spectrum energy
        x = rng.standard_normal(2048)
        spec = stft_magnitude(AudioClip(x, SR))
        w = get_window("hann", 2048)
        mags = spec.magnitudes[0]
        two_sided = mags[0] ** 2 + 2 * np.sum(mags[1:-1] ** 2) + mags[-1] ** 2
        assert two_sided / 2048 == pytest.approx(np.sum((x * w) ** 2), rel=0.05)

    def test_too_short(self):
        with pytest.raises(ValueError):
            stft_magnitude(AudioClip(np.zeros(100), SR))


class TestOnsets:
    def test_single_click(self):
        g = detect_onsets(click_train([1.0], 2.0))
        assert len(g) == 1
        assert abs(int(g.onset_frames[0]) - 31) <= 1

    def test_two_clicks_spacing(self):
        g = detect_onsets(click_train([0.5, 1.5], 2.5))
        assert len(g) == 2
        assert abs(int(np.diff(g.onset_frames)[0]) - 31) <= 1

    def test_silence(self):
        assert len(detect_onsets(AudioClip(np.zeros(2 * SR), SR))) == 0

    def test_other_rate_is_resampled(self):
        clip = click_train([1.0], 2.0, sr=44100)
        g = detect_onsets(clip)
        assert g.hop_s == pytest.approx(0.032)
        assert len(g) == 1 and abs(int(g.onset_frames[0]) - 31) <= 1

    def test_peak_pick_wait(self):
        env = np.array([0, 1, 0, 1, 0, 0, 0, 0], dtype=float)
        assert peak_pick(env, wait=1).tolist() == [1, 3]
        assert peak_pick(env, wait=3).tolist() == [1]


class TestChroma:
    def test_c4_sine(self):
        c = chromagram(sine(261.63))
        assert c[0] > 0.5
        assert c.sum() == pytest.approx(1.0, abs=1e-9)

    def test_semitone_rotation(self):
        a = chromagram(sine(261.63))
        b = chromagram(sine(261.63 * 2 ** (1 / 12)))
        assert int(np.argmax(b)) == (int(np.argmax(a)) + 1) % 12

    def test_fifth(self):
        x = sine(261.63).samples + sine(392.0).samples
        c = chromagram(AudioClip(x, SR))
        assert set(np.argsort(c)[-2:].tolist()) == {0, 7}

    def test_gain_invariance(self):
        c = sine(330.0)
        np.testing.assert_allclose(chromagram(c), chromagram(scale(c, 0.1)), atol=1e-9)

    def test_silence_raises(self):
        with pytest.raises(SilentInputError):
            chromagram(AudioClip(np.zeros(SR), SR))


class TestKeys:
    def test_label_parse_and_str(self):
        assert str(KeyLabel.parse("Am")) == "Am"
        assert KeyLabel.parse("F#m") == KeyLabel(6, "minor")
        assert KeyLabel.parse("Bb") == KeyLabel(10, "major")
        assert KeyLabel.parse("C# minor") == KeyLabel(1, "minor")
        with pytest.raises(ValueError):
            KeyLabel.parse("H")

    def test_correlation_matches_oracle(self, rng):
        v = rng.random(12)
        r = key_correlations(v)[0]
        assert r[0] == pytest.approx(pearson(list(v), KK_MAJOR), abs=1e-12)

    @pytest.mark.parametrize("key", ALL_KEYS, ids=str)
    def test_scales_classify(self, key):
        v = scale_chroma(key.tonic, key.mode)
        assert estimate_key(v) == key
        assert brute_key(list(v)) == (key.tonic, key.mode)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(0.01, 1.0), min_size=12, max_size=12), st.integers(1, 11))
    def test_scores_rotate_with_chroma(self, values, k):
        v = np.array(values)
        r, rr = key_correlations(v)[0], key_correlations(np.roll(v, k))[0]
        # rotating chroma by k semitones moves each key's score k tonics up (two rows per tonic)
        np.testing.assert_allclose(rr, np.roll(r, 2 * k), atol=1e-12)

    def test_label_rotation_equivariance(self, rng):
        for _ in range(50):
            v = rng.dirichlet(np.ones(12))
            k = int(rng.integers(1, 12))
            assert estimate_key(np.roll(v, k)) == estimate_key(v).transpose(k)

    def test_compatible_examples(self):
        p = KeyLabel.parse
        assert compatible_keys(p("E")) == {p("E"), p("B"), p("A"), p("Am")}
        assert compatible_keys(p("Am")) == {p("Am"), p("E"), p("Dm"), p("Em")}
        assert compatible_keys(p("C")) == {p("C"), p("G"), p("F"), p("Fm")}

    @pytest.mark.parametrize("key", ALL_KEYS, ids=str)
    def test_compatible_shape(self, key):
        keys = compatible_keys(key)
        assert len(keys) == 4 and key in keys
        assert compatible_keys(key.transpose(3)) == {k.transpose(3) for k in keys}


def test_detected_onsets_line_up_with_midi_grid(rng):
    from synth import render_notes
    from vpmix.midi import NoteList, notes_to_onset_grid

    times = 0.3 + np.cumsum(rng.uniform(0.3, 0.6, 8))
    notes = NoteList.from_tuples([(60 + 2 * k, t, t + 0.2, 90) for k, t in enumerate(times)])
    clip = AudioClip(render_notes(notes, float(times[-1]) + 0.5), SR)
    detected = detect_onsets(clip)
    midi = notes_to_onset_grid(notes, detected.hop_s, detected.n_frames)
    assert len(detected) == len(midi)
    assert np.all(np.abs(detected.onset_frames - midi.onset_frames) <= 1)
