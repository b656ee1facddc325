"""Model core: initialization, forward, losses, sharpening, EMA, backprop."""

from __future__ import annotations

import numpy as np
import pytest

from fedssl.nn import (
    ModelSpec,
    ParamVector,
    Prediction,
    backprop,
    ema_update,
    forward,
    forward_batch,
    init_params,
    load_checkpoint,
    loss_ce,
    loss_mse_consistency,
    save_checkpoint,
    sgd_step,
    sharpen,
)

from reference import (
    central_difference_grad,
    max_relative_error,
    ref_ce_loss,
    ref_consistency_loss,
)


def _random_params(spec: ModelSpec, seed: int, scale: float = 0.6) -> ParamVector:
    rng = np.random.default_rng(seed)
    return ParamVector(rng.standard_normal(spec.total_parameters) * scale, spec)


class TestModelSpec:
    def test_parameter_count_by_layer_arithmetic(self):
        # (4+1)*8 + (8+1)*8 + (8+1)*3, counted per layer by hand
        assert ModelSpec(4, (8, 8), 3).total_parameters == 40 + 72 + 27 == 139

    def test_layer_chain_consistency(self):
        spec = ModelSpec(2, (3,), 2)
        assert spec.layer_shapes() == [(2, 3), (3, 2)]
        assert spec.total_parameters == 17

    def test_rejects_bad_dims(self):
        with pytest.raises(ValueError):
            ModelSpec(0, (3,), 2)
        with pytest.raises(ValueError):
            ModelSpec(2, (0,), 2)
        with pytest.raises(ValueError):
            ModelSpec(2, (3,), 1)


class TestInitParams:
    def test_deterministic_for_fixed_seed(self):
        spec = ModelSpec(2, (3,), 2)
        a = init_params(spec, 7)
        b = init_params(spec, 7)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, init_params(spec, 8).values)

    def test_biases_exactly_zero(self):
        spec = ModelSpec(2, (3,), 2)
        pv = init_params(spec, 7)
        w0 = 2 * 3
        assert np.all(pv.values[w0 : w0 + 3] == 0.0)
        assert np.all(pv.values[w0 + 3 + 3 * 2 :] == 0.0)

    def test_weights_within_glorot_bound(self):
        spec = ModelSpec(5, (11,), 4)
        pv = init_params(spec, 3)
        bound0 = np.sqrt(6.0 / (5 + 11))
        assert np.abs(pv.values[: 5 * 11]).max() <= bound0

    def test_length_matches_spec(self):
        spec = ModelSpec(4, (8, 8), 3)
        assert len(init_params(spec, 0)) == 139


class TestParamVector:
    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            ParamVector(np.zeros(5), ModelSpec(2, (3,), 2))

    def test_rejects_non_finite(self):
        values = np.zeros(17)
        values[3] = np.nan
        with pytest.raises(ValueError):
            ParamVector(values, ModelSpec(2, (3,), 2))

    def test_immutable(self):
        pv = init_params(ModelSpec(2, (3,), 2), 0)
        with pytest.raises(ValueError):
            pv.values[0] = 1.0


class TestForward:
    def test_zero_params_give_uniform_probs(self):
        spec = ModelSpec(3, (4,), 5)
        pv = ParamVector(np.zeros(spec.total_parameters), spec)
        pred = forward(pv, np.array([1.0, -2.0, 0.5]))
        assert np.allclose(pred.probs, 0.2, atol=1e-15)

    def test_extreme_logits_stay_finite(self):
        # Single linear layer producing logits [10, -10] for x = [1].
        spec = ModelSpec(1, (), 2)
        pv = ParamVector(np.array([10.0, -10.0, 0.0, 0.0]), spec)
        pred = forward(pv, np.array([1.0]))
        assert pred.probs[1] == pytest.approx(np.exp(-20.0), rel=1e-9)
        assert pred.probs[0] == pytest.approx(1.0, abs=1e-8)
        # No overflow even at logit magnitude 1e3.
        huge = ParamVector(np.array([1e3, -1e3, 0.0, 0.0]), spec)
        assert np.isfinite(forward(huge, np.array([1.0])).probs).all()

    def test_probs_sum_to_one_for_random_inputs(self):
        spec = ModelSpec(6, (9, 7), 4)
        for seed in range(10):
            pv = _random_params(spec, seed, scale=2.0)
            x = np.random.default_rng(100 + seed).standard_normal(6) * 50.0
            assert abs(forward(pv, x).probs.sum() - 1.0) <= 1e-9

    def test_dimension_mismatch_rejected(self):
        pv = init_params(ModelSpec(3, (4,), 2), 0)
        with pytest.raises(ValueError):
            forward(pv, np.zeros(4))


class TestLossCE:
    def test_perfect_prediction_is_zero(self):
        loss, grad = loss_ce(Prediction(np.array([0.0, 1.0, 0.0])), 1)
        assert loss == 0.0
        assert np.allclose(grad, [0.0, 0.0, 0.0])

    def test_uniform_four_classes(self):
        loss, _ = loss_ce(Prediction(np.full(4, 0.25)), 2)
        assert loss == pytest.approx(np.log(4.0), abs=1e-12)

    def test_zero_probability_clamped(self):
        loss, _ = loss_ce(Prediction(np.array([1.0, 0.0])), 1)
        assert loss == pytest.approx(-np.log(1e-12), rel=1e-12)
        assert np.isfinite(loss)

    def test_gradient_is_probs_minus_onehot(self):
        probs = np.array([0.2, 0.5, 0.3])
        _, grad = loss_ce(Prediction(probs), 0)
        assert np.allclose(grad, probs - np.array([1.0, 0.0, 0.0]))

    def test_nonnegative_on_random_predictions(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            probs = rng.dirichlet(np.ones(5))
            loss, _ = loss_ce(Prediction(probs), int(rng.integers(5)))
            assert loss >= 0.0

    def test_label_out_of_range(self):
        with pytest.raises(ValueError):
            loss_ce(Prediction(np.array([0.5, 0.5])), 2)


class TestSharpen:
    def test_identity_temperature_exact(self):
        p = Prediction(np.array([0.3, 0.45, 0.25]))
        assert np.array_equal(sharpen(p, 1.0).probs, p.probs)

    def test_two_class_half_temperature(self):
        # [0.36, 0.16] / 0.52 worked out by hand
        out = sharpen(Prediction(np.array([0.6, 0.4])), 0.5)
        assert np.allclose(out.probs, [0.36 / 0.52, 0.16 / 0.52], atol=1e-12)

    def test_symmetric_input_unchanged(self):
        for tau in (0.1, 0.5, 1.0):
            out = sharpen(Prediction(np.array([0.5, 0.5])), tau)
            assert np.allclose(out.probs, [0.5, 0.5], atol=1e-15)

    def test_preserves_argmax_and_normalization(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            probs = rng.dirichlet(np.ones(6))
            tau = float(rng.uniform(0.05, 1.0))
            out = sharpen(Prediction(probs), tau)
            assert out.probs.argmax() == probs.argmax()
            assert abs(out.probs.sum() - 1.0) <= 1e-9

    def test_lower_temperature_concentrates_more(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            probs = rng.dirichlet(np.ones(4))
            a = sharpen(Prediction(probs), 0.3).probs.max()
            b = sharpen(Prediction(probs), 0.8).probs.max()
            assert a >= b - 1e-12

    def test_invalid_temperature(self):
        with pytest.raises(ValueError):
            sharpen(Prediction(np.array([0.5, 0.5])), 0.0)
        with pytest.raises(ValueError):
            sharpen(Prediction(np.array([0.5, 0.5])), -1.0)


class TestLossMSE:
    def test_identical_predictions_zero(self):
        p = Prediction(np.array([0.25, 0.75]))
        loss, grad = loss_mse_consistency(p, p)
        assert loss == 0.0
        assert np.allclose(grad, 0.0)

    def test_maximal_disagreement_two_classes(self):
        loss, _ = loss_mse_consistency(
            Prediction(np.array([1.0, 0.0])), Prediction(np.array([0.0, 1.0]))
        )
        assert loss == pytest.approx(2.0, abs=1e-15)

    def test_hand_computed_value(self):
        loss, _ = loss_mse_consistency(
            Prediction(np.array([0.7, 0.3])), Prediction(np.array([0.5, 0.5]))
        )
        assert loss == pytest.approx(0.08, abs=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            loss_mse_consistency(
                Prediction(np.array([0.5, 0.5])), Prediction(np.array([0.4, 0.3, 0.3]))
            )


class TestSgdStep:
    def test_zero_gradient_is_identity(self):
        spec = ModelSpec(2, (3,), 2)
        pv = _random_params(spec, 0)
        out = sgd_step(pv, ParamVector(np.zeros(17), spec), 0.1)
        assert np.array_equal(out.values, pv.values)

    def test_scalar_arithmetic(self):
        spec = ModelSpec(1, (), 2)
        params = ParamVector(np.array([1.0, 1.0, 1.0, 1.0]), spec)
        grads = ParamVector(np.array([2.0, 2.0, 2.0, 2.0]), spec)
        assert np.array_equal(sgd_step(params, grads, 0.5).values, np.zeros(4))

    def test_monotone_decrease_on_convex_quadratic(self):
        # Oracle: loss(v) = ||v - target||^2, grad = 2 (v - target).
        spec = ModelSpec(2, (3,), 2)
        target = np.linspace(-1.0, 1.0, spec.total_parameters)
        pv = _random_params(spec, 5)
        prev = float(((pv.values - target) ** 2).sum())
        for _ in range(20):
            grads = ParamVector(2.0 * (pv.values - target), spec)
            pv = sgd_step(pv, grads, 0.1)
            cur = float(((pv.values - target) ** 2).sum())
            assert cur < prev
            prev = cur

    def test_rejects_non_finite_grads_and_spec_mismatch(self):
        spec = ModelSpec(2, (3,), 2)
        pv = _random_params(spec, 0)
        bad = np.zeros(17)
        bad[0] = np.inf
        grads = ParamVector.__new__(ParamVector)
        object.__setattr__(grads, "values", bad)
        object.__setattr__(grads, "spec", spec)
        with pytest.raises(ValueError):
            sgd_step(pv, grads, 0.1)
        other = _random_params(ModelSpec(2, (4,), 2), 0)
        with pytest.raises(ValueError):
            sgd_step(pv, other, 0.1)


class TestEmaUpdate:
    def test_alpha_zero_keeps_teacher(self):
        spec = ModelSpec(2, (3,), 2)
        teacher, student = _random_params(spec, 0), _random_params(spec, 1)
        assert np.array_equal(ema_update(teacher, student, 0.0).values, teacher.values)

    def test_alpha_one_copies_student(self):
        spec = ModelSpec(2, (3,), 2)
        teacher, student = _random_params(spec, 0), _random_params(spec, 1)
        assert np.array_equal(ema_update(teacher, student, 1.0).values, student.values)

    def test_paper_momentum_arithmetic(self):
        # teacher 0, student 1, alpha 0.001 -> 0.001 exactly
        spec = ModelSpec(1, (), 2)
        teacher = ParamVector(np.zeros(4), spec)
        student = ParamVector(np.ones(4), spec)
        out = ema_update(teacher, student, 0.001)
        assert np.array_equal(out.values, np.full(4, 0.001))

    def test_affine_combination_bounds(self):
        spec = ModelSpec(3, (5,), 3)
        rng = np.random.default_rng(9)
        for _ in range(20):
            teacher, student = _random_params(spec, 10), _random_params(spec, 11)
            alpha = float(rng.uniform(0.0, 1.0))
            out = ema_update(teacher, student, alpha).values
            lo = np.minimum(teacher.values, student.values)
            hi = np.maximum(teacher.values, student.values)
            assert np.all(out >= lo - 1e-15) and np.all(out <= hi + 1e-15)


class TestBackprop:
    def test_matches_finite_differences_ce(self):
        spec = ModelSpec(3, (5,), 4)
        pv = _random_params(spec, 2)
        rng = np.random.default_rng(3)
        x = rng.standard_normal((1, 3))
        y = np.array([2])
        grads = backprop(pv, x, y, "cross_entropy").values
        fd = central_difference_grad(
            lambda v: ref_ce_loss(v, spec.layer_shapes(), x, y), pv.values.copy()
        )
        assert max_relative_error(fd, grads) < 1e-4

    def test_matches_finite_differences_consistency(self):
        spec = ModelSpec(4, (6,), 3)
        pv = _random_params(spec, 4)
        rng = np.random.default_rng(5)
        x = rng.standard_normal((3, 4))
        targets = rng.dirichlet(np.ones(3), 3)
        grads = backprop(pv, x, targets, "consistency").values
        fd = central_difference_grad(
            lambda v: ref_consistency_loss(v, spec.layer_shapes(), x, targets), pv.values.copy()
        )
        assert max_relative_error(fd, grads) < 1e-4

    def test_duplicated_batch_equals_single_sample(self):
        spec = ModelSpec(3, (4,), 3)
        pv = _random_params(spec, 6)
        x = np.random.default_rng(7).standard_normal((1, 3))
        y = np.array([1])
        single = backprop(pv, x, y).values
        batch = backprop(pv, np.repeat(x, 5, axis=0), np.repeat(y, 5)).values
        assert np.allclose(single, batch, rtol=1e-12, atol=1e-15)

    def test_zero_network_gradient_pattern(self):
        # All-zero weights: hidden activations vanish, so the only nonzero
        # gradient is the output-layer bias (uniform probs minus onehot).
        spec = ModelSpec(3, (4,), 3)
        pv = ParamVector(np.zeros(spec.total_parameters), spec)
        x = np.array([[0.3, -0.7, 1.1]])
        grads = backprop(pv, x, np.array([0])).values
        out_bias = slice(spec.total_parameters - 3, spec.total_parameters)
        expected_bias = np.full(3, 1.0 / 3.0) - np.array([1.0, 0.0, 0.0])
        assert np.allclose(grads[out_bias], expected_bias, atol=1e-15)
        rest = grads.copy()
        rest[out_bias] = 0.0
        assert np.all(rest == 0.0)

    def test_empty_batch_rejected(self):
        pv = init_params(ModelSpec(2, (3,), 2), 0)
        with pytest.raises(ValueError):
            backprop(pv, np.zeros((0, 2)), np.zeros(0, dtype=int))


def test_checkpoint_round_trip(tmp_path):
    spec = ModelSpec(4, (8, 8), 3)
    pv = _random_params(spec, 12)
    path = tmp_path / "model.json"
    save_checkpoint(pv, path)
    loaded = load_checkpoint(path)
    assert loaded.spec == spec
    assert np.array_equal(loaded.values, pv.values)


def test_forward_batch_matches_forward():
    spec = ModelSpec(5, (7,), 4)
    pv = _random_params(spec, 13)
    x = np.random.default_rng(14).standard_normal((6, 5))
    batched = forward_batch(pv, x)
    for i in range(6):
        assert np.allclose(batched[i], forward(pv, x[i]).probs, atol=1e-15)
