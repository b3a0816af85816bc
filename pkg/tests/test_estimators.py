import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

from vpmix.features import ALL_KEYS, ChromaExtractor, KeyEstimator, KeyLabel, OnsetDetector
from vpmix.audio import AudioClip

from conftest import SR, click_train, sine


def test_onset_detector_params_round_trip():
    det = OnsetDetector(delta=0.1, wait=2)
    assert det.get_params()["delta"] == 0.1
    twin = clone(det)
    assert twin.get_params() == det.get_params() and twin is not det
    det.set_params(pre_max=2)
    assert det.pre_max == 2


def test_onset_detector_transform():
    grids = OnsetDetector().fit_transform([click_train([0.5], 1.5), click_train([0.5, 1.0], 1.5)])
    assert [len(g) for g in grids] == [1, 2]


def test_key_estimator_requires_fit():
    with pytest.raises(NotFittedError):
        KeyEstimator().predict(np.ones((1, 12)))


def test_key_estimator_predicts_and_scores():
    est = KeyEstimator().fit()
    assert len(est.classes_) == 24
    scores = est.decision_function(np.eye(12))
    assert scores.shape == (12, 24)
    assert est.predict(np.roll(np.eye(12)[0] + 0, 0)[None, :])[0] in ALL_KEYS


def test_key_estimator_rejects_bad_profile():
    with pytest.raises(ValueError):
        KeyEstimator(major_profile=[1, 2, 3]).fit()


def test_chroma_then_key_pipeline():
    # a C major triad should come out as C major
    x = sum(sine(f).samples for f in (261.63, 329.63, 392.0))
    pipe = make_pipeline(ChromaExtractor(), KeyEstimator())
    pipe.fit([AudioClip(x, SR)])
    assert pipe.predict([AudioClip(x, SR)])[0] == KeyLabel(0, "major")


def test_rejects_non_clips():
    with pytest.raises((TypeError, ValueError)):
        ChromaExtractor().transform([np.zeros(10)])
