import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vpmix.audio import AudioClip, mix_at, peak, rms, scale
from vpmix.features import KeyLabel
from vpmix.midi import NoteList, OnsetGrid
from vpmix.mixer import (
    GeometryError, MixParams, MixRecipe, SilentExcerptError, apply_peak_limit, best_shift,
    compute_violin_gain, count_overlap, draw_rms_ratio, mix_pair, replay_mix, sample_span,
    select_violin_excerpt,
)

from conftest import SR, noise
from oracles import brute_best_shift, brute_count_overlap

HOP = 0.032


def grid(frames, n=None):
    frames = sorted(set(frames))
    return OnsetGrid(HOP, np.array(frames, dtype=np.int64), n or (frames[-1] + 1 if frames else 1))


def onset_notes(frames, pitch=60):
    return NoteList.from_tuples([(pitch, f * HOP, f * HOP + 0.1, 80) for f in frames])


class _Src:
    def __init__(self, source_id, duration_s):
        self.source_id, self.duration_s = source_id, duration_s


class TestLoudness:
    def test_gain_example(self):
        piano = AudioClip(np.full(100, 0.2), SR)
        violin = AudioClip(np.full(100, 0.1), SR)
        assert compute_violin_gain(piano, violin, 0.5) == pytest.approx(4.0)

    def test_silent_excerpt(self):
        with pytest.raises(SilentExcerptError):
            compute_violin_gain(AudioClip(np.full(10, 0.2), SR), AudioClip(np.zeros(10), SR), 0.5)

    def test_fixed_and_drawn_ratio(self, rng):
        assert draw_rms_ratio(MixParams(rms_ratio=0.5), rng) == 0.5
        draws = [draw_rms_ratio(MixParams(), rng) for _ in range(1000)]
        assert 0.3 <= min(draws) and max(draws) <= 1.2

    def test_peak_limit_example(self):
        out, g = apply_peak_limit(AudioClip([1.5, -0.3, 0.2], SR))
        assert g == pytest.approx(0.66, abs=1e-12)
        assert peak(out) <= 0.99

    def test_peak_limit_noop(self):
        c = AudioClip([0.5, -0.2], SR)
        out, g = apply_peak_limit(c)
        assert out is c and g == 1.0

    @settings(max_examples=100, deadline=None)
    @given(st.floats(1e-3, 50.0), st.integers(0, 2**32 - 1))
    def test_peak_limit_is_exact(self, amp, seed):
        c = AudioClip(amp * np.random.default_rng(seed).standard_normal(333), SR)
        out, g = apply_peak_limit(c)
        assert peak(out) <= 0.99
        assert 0 < g <= 1


class TestOverlap:
    def test_examples(self):
        p, v = grid([0, 10, 20]), grid([5, 15, 25])
        assert count_overlap(p, v, 5) == 3
        assert count_overlap(p, v, 0) == 0
        assert best_shift(p, v, 10) == (5, 3)

    def test_tolerance_counts_each_piano_onset_once(self):
        assert count_overlap(grid([0, 1]), grid([1]), 0, tol_frames=1) == 2
        assert count_overlap(grid([0]), grid([0, 1]), 0, tol_frames=1) == 1

    def test_empty(self):
        assert best_shift(grid([]), grid([3]), 10) == (0, 0)
        assert count_overlap(grid([1]), grid([]), 0) == 0

    def test_tie_goes_to_smallest_shift(self):
        assert best_shift(grid([0]), grid([3, 7]), 10) == (3, 1)

    def test_hop_mismatch(self):
        with pytest.raises(ValueError):
            count_overlap(grid([0]), OnsetGrid(0.01, np.array([0]), 1), 0)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.integers(0, 300), max_size=40), st.lists(st.integers(0, 300), max_size=40),
           st.integers(0, 80), st.integers(0, 3))
    def test_matches_brute_force(self, p, v, max_shift, tol):
        gp, gv = grid(p, 400), grid(v, 400)
        shift, count = best_shift(gp, gv, max_shift, tol)
        assert (shift, count) == brute_best_shift(sorted(set(p)), sorted(set(v)), max_shift, tol)
        assert count_overlap(gp, gv, shift, tol) == count
        assert count <= min(len(set(p)), len(set(v)) * (2 * tol + 1))


class TestSelection:
    def test_sample_span_bounds(self, rng):
        srcs = [_Src("a", 10.0), _Src("b", 3.0)]
        for _ in range(100):
            s = sample_span(srcs, 5.0, rng)
            assert s.source_id == "a" and 0 <= s.start_s <= 5.0
        with pytest.raises(GeometryError):
            sample_span(srcs, 11.0, rng)

    def test_accepts_compatible_first_try(self, rng):
        calls = []

        def key_of(span):
            calls.append(span)
            return KeyLabel.parse("B")

        span, key, fallback = select_violin_excerpt(KeyLabel.parse("E"), [_Src("v", 30.0)], 25.5, rng, key_of)
        assert key == KeyLabel.parse("B") and not fallback and len(calls) == 1

    def test_falls_back_after_retry_limit(self, rng):
        calls = []

        def key_of(span):
            calls.append(span)
            return KeyLabel.parse("F#")

        _, key, fallback = select_violin_excerpt(KeyLabel.parse("C"), [_Src("v", 30.0)], 25.5, rng, key_of)
        assert fallback and len(calls) == 100 and key == KeyLabel.parse("F#")


def _pair(rng, piano_s=2.0, extra_s=5.5):
    return noise(rng, piano_s), noise(rng, piano_s + extra_s, amp=0.3)


def small_params(**kw):
    return MixParams(piano_excerpt_s=2.0, **kw)


class TestMixPair:
    def test_onset_alignment_example(self, rng):
        piano, violin = _pair(rng)
        res = mix_pair(piano, onset_notes([0, 10]), violin, onset_notes([3, 13]), "onset", small_params(), rng)
        assert res.recipe.shift_frames == 3 and res.recipe.overlap_count == 2
        assert res.notes.onsets.tolist() == pytest.approx([3 * HOP, 13 * HOP])
        assert len(res.clip) == len(violin)

    def test_random_strategy_uses_shift_zero(self, rng):
        piano, violin = _pair(rng)
        res = mix_pair(piano, onset_notes([0, 10]), violin, onset_notes([3, 13]), "random", small_params(), rng)
        assert res.recipe.shift_frames == 0 and res.recipe.overlap_count is None
        assert res.notes == onset_notes([0, 10])

    def test_deterministic_given_seed(self):
        a = mix_pair(*_interleave(np.random.default_rng(5)), "onset", small_params(), np.random.default_rng(9))
        b = mix_pair(*_interleave(np.random.default_rng(5)), "onset", small_params(), np.random.default_rng(9))
        assert np.array_equal(a.clip.samples, b.clip.samples) and a.recipe == b.recipe

    def test_loudness_law_and_cap(self, rng):
        piano, violin = _pair(rng)
        res = mix_pair(piano, None, violin, None, "random", small_params(rms_ratio=0.5), rng)
        assert rms(piano) / rms(scale(violin, res.recipe.violin_gain)) == pytest.approx(0.5, abs=1e-6)
        assert peak(res.clip) <= 0.99

    def test_geometry(self, rng):
        piano, violin = noise(rng, 2.0), noise(rng, 4.0)
        with pytest.raises(GeometryError):
            mix_pair(piano, None, violin, None, "onset", small_params(), rng)
        with pytest.raises(GeometryError):
            mix_pair(violin, None, piano, None, "random", small_params(), rng)

    def test_unknown_strategy(self, rng):
        piano, violin = _pair(rng)
        with pytest.raises(ValueError):
            mix_pair(piano, None, violin, None, "loudest", small_params(), rng)

    def test_replay_is_bit_exact(self, rng):
        piano, violin = _pair(rng)
        res = mix_pair(piano, onset_notes([0, 10]), violin, onset_notes([3, 13]), "onset", small_params(), rng)
        recipe = MixRecipe.from_dict(res.recipe.to_dict())
        assert recipe == res.recipe
        assert np.array_equal(replay_mix(recipe, piano, violin).samples, res.clip.samples)

    def test_violin_resampled_to_piano_rate(self, rng):
        piano = noise(rng, 2.0)
        violin = AudioClip(0.3 * rng.standard_normal(int(7.5 * 22050)), 22050)
        res = mix_pair(piano, None, violin, None, "random", small_params(), rng)
        assert res.clip.sample_rate == SR and len(res.clip) == 7.5 * SR

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_onset_never_worse_than_zero_shift(self, seed):
        r = np.random.default_rng(seed)
        pf = sorted(set(r.integers(0, 60, 8).tolist()))
        vf = sorted(set(r.integers(0, 230, 20).tolist()))
        piano, violin = _pair(r)
        res = mix_pair(piano, onset_notes(pf), violin, onset_notes(vf), "onset", small_params(), r)
        assert res.recipe.overlap_count >= brute_count_overlap(pf, vf, 0, 0)


def _interleave(rng):
    piano, violin = _pair(rng)
    return piano, onset_notes([0, 5, 40]), violin, onset_notes([7, 12, 47, 90])


def test_mix_at_order_matches_render(rng):
    piano, violin = _pair(rng)
    res = mix_pair(piano, None, violin, None, "random", small_params(), rng)
    expected = scale(mix_at(scale(violin, res.recipe.violin_gain), piano, 0), res.recipe.post_gain)
    assert np.array_equal(expected.samples, res.clip.samples)
