"""Aggregation math: plain, weight-adjusted, and distance-reweighted."""

from __future__ import annotations

import numpy as np
import pytest

from fedssl.aggregation import (
    WeightedModel,
    consensus_mean,
    dma_aggregate,
    dma_weights,
    fedavg,
    model_distance,
    weight_adjusted_avg,
)
from fedssl.nn import ModelSpec, ParamVector

SCALARISH = ModelSpec(1, (), 2)  # 4 parameters; smallest legal vector


def _pv(values, spec=None) -> ParamVector:
    spec = spec or SCALARISH
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(spec.total_parameters, float(arr))
    return ParamVector(arr, spec)


class TestFedAvg:
    def test_single_model_unchanged(self):
        pv = _pv(3.25)
        out = fedavg([WeightedModel(pv, 17)])
        assert np.array_equal(out.values, pv.values)

    def test_size_weighted_average(self):
        out = fedavg([WeightedModel(_pv(1.0), 1), WeightedModel(_pv(3.0), 3)])
        assert np.allclose(out.values, 2.5, atol=1e-15)

    def test_symmetric_cancellation(self):
        out = fedavg([WeightedModel(_pv(4.0), 5), WeightedModel(_pv(-4.0), 5)])
        assert np.allclose(out.values, 0.0, atol=1e-15)

    def test_spec_mismatch_and_empty(self):
        other = ParamVector(np.zeros(17), ModelSpec(2, (3,), 2))
        with pytest.raises(ValueError):
            fedavg([WeightedModel(_pv(1.0), 1), WeightedModel(other, 1)])
        with pytest.raises(ValueError):
            fedavg([])


class TestWeightAdjustedAvg:
    def test_single_labeled_client_gets_half(self):
        labeled = [WeightedModel(_pv(1.0), 50)]
        unlabeled = [WeightedModel(_pv(0.0), n) for n in (10, 20, 30, 40, 50, 60, 70, 80, 90)]
        out = weight_adjusted_avg(labeled, unlabeled, 0.5)
        assert np.array_equal(out.values, np.full(4, 0.5))

    def test_within_group_proportional_split(self):
        # Probe coefficients with indicator vectors: labeled N = [1, 3]
        # under share 0.5 must weigh in at [0.125, 0.375].
        e = np.eye(4)
        labeled = [WeightedModel(_pv(e[0]), 1), WeightedModel(_pv(e[1]), 3)]
        unlabeled = [WeightedModel(_pv(e[2]), 7)]
        out = weight_adjusted_avg(labeled, unlabeled, 0.5)
        assert np.allclose(out.values, [0.125, 0.375, 0.5, 0.0], atol=1e-15)

    def test_natural_share_reduces_to_fedavg(self):
        models = [WeightedModel(_pv(float(i)), 10 * (i + 1)) for i in range(4)]
        labeled, unlabeled = models[:2], models[2:]
        natural = (10 + 20) / (10 + 20 + 30 + 40)
        adjusted = weight_adjusted_avg(labeled, unlabeled, natural)
        plain = fedavg(models)
        assert np.allclose(adjusted.values, plain.values, atol=1e-12)

    def test_empty_group_rejected(self):
        with pytest.raises(ValueError):
            weight_adjusted_avg([], [WeightedModel(_pv(0.0), 1)])
        with pytest.raises(ValueError):
            weight_adjusted_avg([WeightedModel(_pv(0.0), 1)], [])


class TestModelDistance:
    def test_zero_for_identical(self):
        assert model_distance(_pv(1.5), _pv(1.5)) == 0.0

    def test_three_four_five(self):
        spec = ModelSpec(1, (), 2)
        a = ParamVector(np.array([3.0, 4.0, 0.0, 0.0]), spec)
        b = ParamVector(np.zeros(4), spec)
        assert model_distance(a, b) == pytest.approx(5.0, abs=1e-15)

    def test_symmetric(self):
        rng = np.random.default_rng(0)
        for _ in range(10):
            a, b = _pv(rng.standard_normal(4)), _pv(rng.standard_normal(4))
            assert model_distance(a, b) == model_distance(b, a)


class TestDmaWeights:
    def test_beta_zero_equals_size_weights(self):
        models = [WeightedModel(_pv(float(i)), 10 + 7 * i) for i in range(4)]
        sizes = np.array([m.data_size for m in models], dtype=np.float64)
        expected = sizes / sizes.sum()
        expected = expected / expected.sum()
        assert np.array_equal(dma_weights(models, 0.0), expected)

    def test_identical_models_keep_size_weights(self):
        models = [WeightedModel(_pv(2.0), n) for n in (5, 10, 25)]
        weights = dma_weights(models, 50.0)
        sizes = np.array([5.0, 10.0, 25.0])
        assert np.allclose(weights, sizes / sizes.sum(), atol=1e-15)

    def test_scalar_instance_against_hand_computed_values(self):
        # theta [0], [1] with sizes 100, 300 and beta 100:
        # avg = 0.75; w1 = 0.25 exp(-0.75); w2 = 0.75 exp(-1/12).
        spec = ModelSpec(1, (), 2)
        a = ParamVector(np.array([0.0, 0.0, 0.0, 0.0]), spec)
        b = ParamVector(np.array([1.0, 0.0, 0.0, 0.0]), spec)
        weights = dma_weights([WeightedModel(a, 100), WeightedModel(b, 300)], 100.0)
        raw = [0.25 * np.exp(-100.0 * 0.75 / 100.0), 0.75 * np.exp(-100.0 * 0.25 / 300.0)]
        oracle = np.array(raw) / sum(raw)
        assert np.allclose(weights, oracle, atol=1e-12)
        assert np.allclose(weights, [0.146131, 0.853869], atol=1e-5)

    def test_sums_to_one_and_positive(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            k = int(rng.integers(1, 6))
            models = [
                WeightedModel(_pv(rng.standard_normal(4)), int(rng.integers(1, 200)))
                for _ in range(k)
            ]
            beta = float(rng.uniform(0.0, 100.0))
            weights = dma_weights(models, beta)
            assert abs(weights.sum() - 1.0) <= 1e-12
            assert np.all(weights > 0.0)

    def test_huge_beta_does_not_underflow_to_nothing(self):
        # beta = 10,000 with O(1) distances: naive exp would flush every
        # weight to zero; the max-shift keeps the result normalized.
        models = [WeightedModel(_pv(0.0), 100), WeightedModel(_pv(1.0), 100)]
        weights = dma_weights(models, 10_000.0)
        assert abs(weights.sum() - 1.0) <= 1e-12
        assert np.isfinite(weights).all()

    def test_moving_one_model_away_decreases_its_weight(self):
        # K = 3 scalar instance; the effect is recomputed from the formulas
        # directly (including the shifted average) at each radius.
        sizes = [50, 80, 120]

        def weights_at(extra: float):
            vals = [1.0 + extra, 0.0, 0.5]
            models = [WeightedModel(_pv(v), n) for v, n in zip(vals, sizes)]
            lib = dma_weights(models, 25.0)
            # independent scalar route: distances are |v - avg| * sqrt(4)
            # because the full 4-long vector moves uniformly
            n_total = sum(sizes)
            avg = sum(n / n_total * v for v, n in zip(vals, sizes))
            raw = [
                (n / n_total) * np.exp(-25.0 * abs(v - avg) * 2.0 / n)
                for v, n in zip(vals, sizes)
            ]
            oracle = np.array(raw) / sum(raw)
            assert np.allclose(lib, oracle, atol=1e-12)
            return lib[0]

        previous = weights_at(0.0)
        for extra in (0.5, 1.0, 2.0, 4.0):
            current = weights_at(extra)
            assert current < previous
            previous = current

    def test_extreme_beta_concentrates_on_minimizer(self):
        # Unique minimizer of distance/size takes essentially all the mass.
        models = [
            WeightedModel(_pv(0.0), 100),
            WeightedModel(_pv(1.0), 100),
            WeightedModel(_pv(3.0), 100),
        ]
        weights = dma_weights(models, 1e6)
        distances_over_size = []
        avg = fedavg(models)
        for m in models:
            distances_over_size.append(model_distance(m.params, avg) / m.data_size)
        winner = int(np.argmin(distances_over_size))
        assert weights[winner] > 0.999

    def test_permutation_invariance(self):
        rng = np.random.default_rng(8)
        models = [
            WeightedModel(_pv(rng.standard_normal(4)), int(rng.integers(1, 50)))
            for _ in range(5)
        ]
        weights = dma_weights(models, 12.0)
        perm = [3, 0, 4, 1, 2]
        permuted = dma_weights([models[i] for i in perm], 12.0)
        assert np.allclose(weights[perm], permuted, atol=1e-15)


class TestDmaAggregate:
    def test_beta_zero_equals_fedavg_bitwise(self):
        rng = np.random.default_rng(10)
        for _ in range(20):
            models = [
                WeightedModel(_pv(rng.standard_normal(4)), int(rng.integers(1, 100)))
                for _ in range(int(rng.integers(1, 6)))
            ]
            assert np.array_equal(dma_aggregate(models, 0.0).values, fedavg(models).values)

    def test_single_model_returned(self):
        pv = _pv([0.4, -1.0, 2.0, 0.0])
        out = dma_aggregate([WeightedModel(pv, 9)], 55.0)
        assert np.allclose(out.values, pv.values, atol=1e-15)

    def test_output_in_convex_hull(self):
        rng = np.random.default_rng(11)
        for _ in range(30):
            models = [
                WeightedModel(_pv(rng.standard_normal(4) * 3), int(rng.integers(1, 60)))
                for _ in range(int(rng.integers(2, 6)))
            ]
            beta = float(rng.uniform(0.0, 50.0))
            out = dma_aggregate(models, beta).values
            stacked = np.stack([m.params.values for m in models])
            assert np.all(out >= stacked.min(axis=0) - 1e-12)
            assert np.all(out <= stacked.max(axis=0) + 1e-12)


class TestConsensusMean:
    def test_single_input_identity(self):
        pv = _pv([1.0, 2.0, 3.0, 4.0])
        assert np.array_equal(consensus_mean([pv]).values, pv.values)

    def test_midpoint(self):
        out = consensus_mean([_pv(0.0), _pv(2.0)])
        assert np.allclose(out.values, 1.0, atol=1e-15)

    def test_permutation_invariant(self):
        rng = np.random.default_rng(12)
        subs = [_pv(rng.standard_normal(4)) for _ in range(4)]
        a = consensus_mean(subs)
        b = consensus_mean([subs[2], subs[0], subs[3], subs[1]])
        assert np.allclose(a.values, b.values, atol=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            consensus_mean([])
