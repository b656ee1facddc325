"""Evaluation metrics against brute-force oracles."""

from __future__ import annotations

import numpy as np
import pytest

from fedssl.data import Dataset, make_blobs
from fedssl.metrics import auc_binary, evaluate, midranks
from fedssl.nn import ModelSpec, ParamVector

from reference import brute_force_auc


class TestAucBinary:
    def test_hand_computed_binary_case(self):
        # scores [0.1, 0.4, 0.35, 0.8], labels [0, 0, 1, 1]: of the four
        # positive/negative pairs exactly three are ordered correctly.
        pos = np.array([0.35, 0.8])
        neg = np.array([0.1, 0.4])
        assert auc_binary(pos, neg) == pytest.approx(0.75, abs=1e-15)
        assert brute_force_auc(pos, neg) == 0.75

    def test_constant_scores_are_half(self):
        assert auc_binary(np.full(5, 0.3), np.full(7, 0.3)) == pytest.approx(0.5, abs=1e-15)

    def test_perfect_and_inverted_ordering(self):
        assert auc_binary(np.array([0.9, 0.8]), np.array([0.1, 0.2])) == 1.0
        assert auc_binary(np.array([0.1, 0.2]), np.array([0.9, 0.8])) == 0.0

    def test_matches_brute_force_with_ties(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n_pos = int(rng.integers(1, 12))
            n_neg = int(rng.integers(1, 12))
            # quantized scores force plenty of ties
            pos = rng.integers(0, 5, n_pos) / 4.0
            neg = rng.integers(0, 5, n_neg) / 4.0
            assert auc_binary(pos, neg) == pytest.approx(
                brute_force_auc(pos, neg), abs=1e-12
            )


def test_midranks_average_ties():
    ranks = midranks(np.array([0.2, 0.1, 0.2, 0.5]))
    assert np.array_equal(ranks, [2.5, 1.0, 2.5, 4.0])


class TestEvaluate:
    def _linear_model(self, dim: int, classes: int, weights: np.ndarray) -> ParamVector:
        spec = ModelSpec(dim, (), classes)
        values = np.zeros(spec.total_parameters)
        values[: dim * classes] = weights.reshape(-1)
        return ParamVector(values, spec)

    def test_perfect_classifier_scores_one_everywhere(self):
        ds = make_blobs(3, 3, 100, 12.0, seed=0)
        # projecting onto the class means separates these blobs exactly
        centers = np.zeros((3, 3))
        centers[np.arange(3), np.arange(3)] = 12.0 / np.sqrt(2.0)
        params = self._linear_model(3, 3, centers.T.copy())
        report = evaluate(params, ds)
        assert report.accuracy == 1.0
        assert report.auc_macro_ovr == 1.0
        assert report.precision_macro == 1.0
        assert report.recall_macro == 1.0

    def test_constant_model_has_half_auc(self):
        ds = make_blobs(4, 4, 25, 3.0, seed=1)
        spec = ModelSpec(4, (), 4)
        report = evaluate(ParamVector(np.zeros(spec.total_parameters), spec), ds)
        assert report.auc_macro_ovr == pytest.approx(0.5, abs=1e-12)

    def test_absent_class_excluded_from_macro(self):
        # class 2 never appears in the labels; macro averages ignore it
        features = np.array([[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [0.1, 0.9]])
        labels = np.array([0, 0, 1, 1])
        ds = Dataset(features, labels, num_classes=3)
        weights = np.array([[5.0, 0.0, 0.0], [0.0, 5.0, 0.0]])
        report = evaluate(self._linear_model(2, 3, weights), ds)
        assert report.accuracy == 1.0
        assert report.precision_macro == 1.0
        assert report.recall_macro == 1.0
        assert report.auc_macro_ovr == 1.0

    def test_zero_over_zero_precision_maps_to_zero(self):
        # the model never predicts class 1, and class 1 is present but
        # never correctly retrieved: precision contribution 0, recall 0
        features = np.array([[2.0, 0.0], [2.0, 0.2], [1.9, -0.1], [2.2, 0.1]])
        labels = np.array([0, 0, 1, 1])
        ds = Dataset(features, labels, num_classes=2)
        weights = np.array([[3.0, -3.0], [0.0, 0.0]])
        report = evaluate(self._linear_model(2, 2, weights), ds)
        assert report.accuracy == 0.5
        assert report.precision_macro == pytest.approx(0.25)
        assert report.recall_macro == pytest.approx(0.5)

    def test_macro_auc_matches_brute_force_on_model_scores(self):
        ds = make_blobs(3, 3, 40, 2.0, seed=2)
        rng = np.random.default_rng(3)
        spec = ModelSpec(3, (5,), 3)
        params = ParamVector(rng.standard_normal(spec.total_parameters), spec)
        from fedssl.nn import forward_batch

        scores = forward_batch(params, ds.features)
        expected = np.mean(
            [
                brute_force_auc(scores[ds.labels == c, c], scores[ds.labels != c, c])
                for c in range(3)
            ]
        )
        assert evaluate(params, ds).auc_macro_ovr == pytest.approx(expected, abs=1e-12)

    def test_empty_test_set_rejected(self):
        spec = ModelSpec(2, (), 2)
        params = ParamVector(np.zeros(spec.total_parameters), spec)
        ds = make_blobs(2, 2, 5, 2.0, seed=4)
        with pytest.raises(ValueError):
            evaluate(params, ds.subset(np.array([], dtype=np.int64)))
