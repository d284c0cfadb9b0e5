import logging

import numpy as np
import pytest

from rumorpipe import nn
from rumorpipe.nn import (
    AdamState,
    BatchNormLayer,
    Conv1DLayer,
    DegenerateBatchError,
    DenseLayer,
    LossSpec,
    NumericError,
    ShapeError,
    Tensor,
    adam_step,
    add,
    backward,
    batchnorm_forward,
    channel_concat,
    conv1d_forward,
    dense_forward,
    dropout,
    global_avg_pool,
    glorot_uniform,
    grads_of,
    log_clamped,
    masked_avg_pool,
    matmul,
    mul,
    parameter,
    pow_scalar,
    relu,
    softmax,
    sum_all,
    weighted_cross_entropy,
    zero_grad,
)

# ---------------------------------------------------------------------------
# numeric gradient oracle: central finite differences in float64


def numeric_grad(scalar_fn, param, h=1e-5):
    base = param.data
    assert base.dtype == np.float64, "finite differences need float64 parameters"
    grad = np.zeros_like(base)
    it = np.nditer(base, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        saved = base[idx]
        base[idx] = saved + h
        f_plus = scalar_fn()
        base[idx] = saved - h
        f_minus = scalar_fn()
        base[idx] = saved
        grad[idx] = (f_plus - f_minus) / (2.0 * h)
    return grad


def rel_err(a, b):
    scale = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), 1e-10)
    return np.abs(a - b).max(initial=0.0) / scale


def assert_grads_match(params, build_loss, rel_tol=1e-4):
    zero_grad(params)
    backward(build_loss())
    analytic = grads_of(params)
    for p, a in zip(params, analytic):
        num = numeric_grad(lambda: build_loss().item(), p)
        assert rel_err(a, num) < rel_tol, f"{p.name}: rel err {rel_err(a, num):.3e}"


def away_from_relu_kink(x, margin=0.05):
    """Nudge values off zero so the finite-difference probe never crosses it."""
    out = x.copy()
    small = np.abs(out) < margin
    out[small] = margin * np.where(out[small] >= 0, 1.0, -1.0)
    return out


def rng64(seed=0):
    return np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# elementary ops


class TestOps:
    def test_add_broadcast_gradient(self):
        a = parameter(np.ones((3, 4)), "a")
        b = parameter(np.ones(4), "b")
        backward(sum_all(add(a, b)))
        np.testing.assert_array_equal(a.grad, np.ones((3, 4)))
        np.testing.assert_array_equal(b.grad, np.full(4, 3.0))

    def test_mul_by_constant(self):
        a = parameter(np.array([1.0, 2.0]), "a")
        out = mul(a, 3.0)
        np.testing.assert_array_equal(out.data, [3.0, 6.0])
        backward(sum_all(out))
        np.testing.assert_array_equal(a.grad, [3.0, 3.0])

    def test_matmul_shape_check(self):
        a = Tensor(np.ones((2, 3)))
        b = Tensor(np.ones((4, 2)))
        with pytest.raises(ShapeError, match="matmul"):
            matmul(a, b)

    def test_relu_hand_case(self):
        out = relu(Tensor(np.array([-1.0, 0.0, 2.0])))
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])

    def test_relu_gradient_is_gate(self):
        x = parameter(np.array([-2.0, 3.0]), "x")
        backward(sum_all(relu(x)))
        np.testing.assert_array_equal(x.grad, [0.0, 1.0])

    def test_softmax_hand_case(self):
        out = softmax(Tensor(np.array([[1.0, 0.0]])))
        np.testing.assert_allclose(out.data, [[0.73105858, 0.26894142]], atol=1e-8)

    def test_softmax_rows_sum_to_one(self):
        out = softmax(Tensor(rng64(1).standard_normal((5, 7))))
        np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(5), atol=1e-12)

    def test_softmax_is_stable_for_huge_logits(self):
        out = softmax(Tensor(np.array([[1000.0, 999.0]])))
        assert np.all(np.isfinite(out.data))

    def test_gather_and_log_compose(self):
        probs = parameter(np.array([[0.2, 0.8], [0.5, 0.5]]), "p")
        picked = nn.gather_rows(probs, np.array([1, 0]))
        np.testing.assert_allclose(picked.data, [0.8, 0.5])
        backward(sum_all(log_clamped(picked)))
        np.testing.assert_allclose(probs.grad, [[0.0, 1 / 0.8], [1 / 0.5, 0.0]])

    def test_log_clamp_warns_and_zeroes_gradient(self, caplog):
        probs = parameter(np.array([[0.0, 1.0]]), "p")
        with caplog.at_level(logging.WARNING, logger="rumorpipe.nn"):
            out = log_clamped(nn.gather_rows(probs, np.array([0])))
        assert "clamped 1" in caplog.text
        backward(sum_all(out))
        assert probs.grad[0, 0] == 0.0

    def test_diamond_graph_accumulates(self):
        x = parameter(np.array([2.0]), "x")
        square = mul(x, x)
        backward(sum_all(add(square, square)))
        np.testing.assert_array_equal(x.grad, [8.0])

    def test_backward_requires_scalar(self):
        x = parameter(np.ones(3), "x")
        with pytest.raises(ShapeError, match="scalar"):
            backward(mul(x, 2.0))

    def test_grads_of_before_backward(self):
        x = parameter(np.ones(3), "x")
        with pytest.raises(ValueError, match="run backward first"):
            grads_of([x])

    def test_zero_grad_clears(self):
        x = parameter(np.ones(3), "x")
        backward(sum_all(x))
        zero_grad([x])
        assert x.grad is None

    def test_repeated_backward_accumulates_into_grad(self):
        x = parameter(np.ones(3), "x")
        backward(sum_all(x))
        backward(sum_all(x))
        np.testing.assert_array_equal(x.grad, np.full(3, 2.0))


class TestNumericGuards:
    def test_forward_overflow_names_op(self):
        a = parameter(np.array([1e300]), "a")
        with np.errstate(over="ignore"):
            with pytest.raises(NumericError, match="mul"):
                mul(a, a)

    def test_backward_nonfinite_names_parameter(self):
        x = parameter(np.array([0.0, 4.0]), "stuck_weight")
        out = sum_all(pow_scalar(x, 0.5))
        with np.errstate(divide="ignore"):
            with pytest.raises(NumericError, match="stuck_weight"):
                backward(out)


# ---------------------------------------------------------------------------
# convolution


class TestConv:
    def test_hand_case_k2(self):
        layer = Conv1DLayer(2, 2, 1, rng=rng64(), dtype=np.float64)
        layer.weights.data = np.array([[[1.0], [0.0]], [[0.0], [1.0]]])
        layer.bias.data = np.array([0.5])
        x = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]]))
        out = conv1d_forward(x, layer)
        np.testing.assert_allclose(out.data[0, :, 0], [5.5, 9.5, 5.5])

    def test_k1_is_pointwise(self):
        layer = Conv1DLayer(1, 1, 1, rng=rng64(), dtype=np.float64)
        layer.weights.data = np.array([[[1.0]]])
        layer.bias.data = np.array([0.0])
        x = Tensor(rng64(2).standard_normal((2, 4, 1)))
        out = conv1d_forward(x, layer)
        np.testing.assert_allclose(out.data, x.data)

    def test_zero_input_yields_bias(self):
        layer = Conv1DLayer(3, 2, 4, rng=rng64(), dtype=np.float64)
        layer.bias.data = np.arange(4.0)
        out = conv1d_forward(Tensor(np.zeros((1, 5, 2))), layer)
        np.testing.assert_allclose(out.data, np.broadcast_to(np.arange(4.0), (1, 5, 4)))

    def test_even_kernel_pads_on_the_right(self):
        layer = Conv1DLayer(2, 1, 1, rng=rng64(), dtype=np.float64)
        layer.weights.data = np.array([[[0.0]], [[1.0]]])
        layer.bias.data = np.array([0.0])
        x = Tensor(np.array([[[10.0], [20.0], [30.0]]]))
        out = conv1d_forward(x, layer)
        np.testing.assert_allclose(out.data[0, :, 0], [20.0, 30.0, 0.0])

    def test_output_preserves_length(self):
        for k in (1, 2, 3, 4, 5):
            layer = Conv1DLayer(k, 3, 6, rng=rng64(k), dtype=np.float64)
            out = conv1d_forward(Tensor(rng64(9).standard_normal((2, 7, 3))), layer)
            assert out.shape == (2, 7, 6)

    def test_input_shape_check(self):
        layer = Conv1DLayer(2, 3, 4, rng=rng64(), dtype=np.float64)
        with pytest.raises(ShapeError, match="expected"):
            conv1d_forward(Tensor(np.zeros((2, 7, 5))), layer)

    @pytest.mark.parametrize("kernel", [2, 3])
    def test_gradients_match_finite_differences(self, kernel):
        rng = rng64(kernel)
        layer = Conv1DLayer(kernel, 3, 2, rng=rng, dtype=np.float64)
        layer.bias.data = rng.standard_normal(2)
        x = parameter(rng.standard_normal((2, 5, 3)), "x")
        coefs = rng.standard_normal((2, 5, 2))

        def build():
            return sum_all(mul(conv1d_forward(x, layer), coefs))

        assert_grads_match([x, layer.weights, layer.bias], build)

    def test_channel_concat_checks(self):
        a = Tensor(np.zeros((2, 3, 4)))
        b = Tensor(np.zeros((2, 4, 4)))
        with pytest.raises(ShapeError, match="channel_concat"):
            channel_concat([])
        with pytest.raises(ShapeError, match="mismatched"):
            channel_concat([a, b])

    def test_channel_concat_stacks_last_axis(self):
        a = Tensor(np.zeros((2, 3, 4)))
        b = Tensor(np.ones((2, 3, 2)))
        assert channel_concat([a, b]).shape == (2, 3, 6)


# ---------------------------------------------------------------------------
# batch normalization


class TestBatchNorm:
    def test_two_point_batch_standardizes(self):
        layer = BatchNormLayer(1, dtype=np.float64)
        out = batchnorm_forward(Tensor(np.array([[1.0], [3.0]])), layer, training=True)
        np.testing.assert_allclose(out.data, [[-1.0], [1.0]], atol=1e-5)

    def test_training_output_is_standardized(self):
        layer = BatchNormLayer(3, dtype=np.float64)
        x = Tensor(rng64(4).standard_normal((64, 3)) * 5.0 + 2.0)
        out = batchnorm_forward(x, layer, training=True)
        np.testing.assert_allclose(out.data.mean(axis=0), np.zeros(3), atol=1e-10)
        np.testing.assert_allclose(out.data.var(axis=0), np.ones(3), atol=1e-4)

    def test_applies_over_batch_and_time(self):
        layer = BatchNormLayer(2, dtype=np.float64)
        x = Tensor(rng64(5).standard_normal((4, 6, 2)))
        out = batchnorm_forward(x, layer, training=True)
        flat = out.data.reshape(-1, 2)
        np.testing.assert_allclose(flat.mean(axis=0), np.zeros(2), atol=1e-10)

    def test_batch_of_one_is_degenerate_in_training(self):
        layer = BatchNormLayer(2, dtype=np.float64)
        with pytest.raises(DegenerateBatchError, match="batch size >= 2"):
            batchnorm_forward(Tensor(np.zeros((1, 2))), layer, training=True)

    def test_running_stats_use_momentum(self):
        layer = BatchNormLayer(1, dtype=np.float64)
        x = np.array([[2.0], [6.0]])
        batchnorm_forward(Tensor(x), layer, training=True)
        np.testing.assert_allclose(layer.running_mean, [0.9 * 0.0 + 0.1 * 4.0])
        np.testing.assert_allclose(layer.running_var, [0.9 * 1.0 + 0.1 * 4.0])

    def test_inference_uses_running_stats_and_allows_batch_of_one(self):
        layer = BatchNormLayer(1, dtype=np.float64)
        layer.running_mean = np.array([4.0])
        layer.running_var = np.array([9.0])
        out = batchnorm_forward(Tensor(np.array([[10.0]])), layer, training=False)
        expected = (10.0 - 4.0) / np.sqrt(9.0 + layer.epsilon)
        np.testing.assert_allclose(out.data, [[expected]], rtol=1e-12)

    def test_scale_and_shift_apply(self):
        layer = BatchNormLayer(1, dtype=np.float64)
        layer.scale.data = np.array([3.0])
        layer.shift.data = np.array([7.0])
        out = batchnorm_forward(Tensor(np.array([[1.0], [3.0]])), layer, training=True)
        np.testing.assert_allclose(out.data, [[-3.0 + 7.0], [3.0 + 7.0]], atol=1e-4)

    def test_channel_mismatch(self):
        layer = BatchNormLayer(3, dtype=np.float64)
        with pytest.raises(ShapeError, match="channels"):
            batchnorm_forward(Tensor(np.zeros((2, 2))), layer, training=True)

    def test_gradients_match_finite_differences(self):
        rng = rng64(6)
        layer = BatchNormLayer(3, dtype=np.float64)
        layer.scale.data = rng.uniform(0.5, 1.5, 3)
        layer.shift.data = rng.standard_normal(3)
        x = parameter(rng.standard_normal((5, 3)), "x")
        coefs = rng.standard_normal((5, 3))

        def build():
            return sum_all(mul(batchnorm_forward(x, layer, training=True), coefs))

        assert_grads_match([x, layer.scale, layer.shift], build)


# ---------------------------------------------------------------------------
# pooling


class TestPooling:
    def test_global_pool_hand_case(self):
        out = global_avg_pool(Tensor(np.array([[[1.0, 2.0], [3.0, 4.0]]])))
        np.testing.assert_allclose(out.data, [[2.0, 3.0]])

    def test_masked_pool_excludes_padding(self):
        x = Tensor(np.array([[[1.0, 2.0], [3.0, 4.0], [100.0, 200.0]]]))
        mask = np.array([[True, True, False]])
        np.testing.assert_allclose(masked_avg_pool(x, mask).data, [[2.0, 3.0]])

    def test_masked_pool_equals_global_when_unmasked(self):
        x = Tensor(rng64(7).standard_normal((3, 4, 2)))
        mask = np.ones((3, 4), dtype=bool)
        np.testing.assert_allclose(masked_avg_pool(x, mask).data, global_avg_pool(x).data)

    def test_fully_masked_sequence_rejected(self):
        x = Tensor(np.zeros((2, 3, 1)))
        mask = np.array([[True, True, True], [False, False, False]])
        with pytest.raises(ShapeError, match="unmasked position"):
            masked_avg_pool(x, mask)

    def test_mask_shape_check(self):
        with pytest.raises(ShapeError, match="mask"):
            masked_avg_pool(Tensor(np.zeros((2, 3, 1))), np.ones((2, 4), dtype=bool))

    def test_masked_pool_gradients(self):
        rng = rng64(8)
        x = parameter(rng.standard_normal((2, 4, 3)), "x")
        mask = np.array([[True, True, True, False], [True, True, False, False]])
        coefs = rng.standard_normal((2, 3))

        def build():
            return sum_all(mul(masked_avg_pool(x, mask), coefs))

        assert_grads_match([x], build)

    def test_masked_positions_get_zero_gradient(self):
        x = parameter(np.ones((1, 3, 2)), "x")
        mask = np.array([[True, False, True]])
        backward(sum_all(masked_avg_pool(x, mask)))
        np.testing.assert_array_equal(x.grad[0, 1], [0.0, 0.0])


# ---------------------------------------------------------------------------
# dense + dropout


class TestDense:
    def test_forward_hand_case(self):
        layer = DenseLayer(2, 1, rng=rng64(), dtype=np.float64)
        layer.weights.data = np.array([[2.0], [3.0]])
        layer.bias.data = np.array([1.0])
        out = dense_forward(Tensor(np.array([[1.0, 1.0]])), layer)
        np.testing.assert_allclose(out.data, [[6.0]])

    def test_input_shape_check(self):
        layer = DenseLayer(3, 2, rng=rng64(), dtype=np.float64)
        with pytest.raises(ShapeError, match="expected"):
            dense_forward(Tensor(np.zeros((2, 4))), layer)

    def test_gradients_match_finite_differences(self):
        rng = rng64(9)
        layer = DenseLayer(6, 3, rng=rng, dtype=np.float64)
        layer.bias.data = rng.standard_normal(3)
        x = parameter(rng.standard_normal((4, 6)), "x")
        coefs = rng.standard_normal((4, 3))

        def build():
            return sum_all(mul(dense_forward(x, layer), coefs))

        assert_grads_match([x, layer.weights, layer.bias], build)

    def test_gradients_through_relu(self):
        rng = rng64(10)
        layer = DenseLayer(4, 3, rng=rng, dtype=np.float64)
        x_data = away_from_relu_kink(rng.standard_normal((5, 4)))
        x = parameter(x_data, "x")
        coefs = rng.standard_normal((5, 3))
        pre = dense_forward(x, layer)
        if np.abs(pre.data).min() < 1e-3:
            layer.bias.data = layer.bias.data + 0.1

        def build():
            return sum_all(mul(relu(dense_forward(x, layer)), coefs))

        assert_grads_match([x, layer.weights, layer.bias], build)


class TestDropout:
    def test_rate_zero_is_identity(self):
        x = Tensor(np.ones((3, 3)))
        assert dropout(x, 0.0, training=True, rng=rng64()) is x

    def test_inference_is_identity(self):
        x = Tensor(np.ones((3, 3)))
        assert dropout(x, 0.5, training=False, rng=rng64()) is x

    @pytest.mark.parametrize("rate", [-0.1, 1.0, 1.5])
    def test_invalid_rate(self, rate):
        with pytest.raises(ValueError, match="dropout rate"):
            dropout(Tensor(np.ones(3)), rate, training=True, rng=rng64())

    def test_survivors_are_rescaled(self):
        x = Tensor(np.ones((100, 100)))
        out = dropout(x, 0.5, training=True, rng=rng64(3)).data
        assert set(np.unique(out)) == {0.0, 2.0}

    def test_expectation_is_preserved(self):
        x = Tensor(np.ones((400, 500)))
        out = dropout(x, 0.5, training=True, rng=rng64(4)).data
        assert abs(out.mean() - 1.0) < 0.01

    def test_gradient_uses_same_mask(self):
        x = parameter(np.ones((50, 50)), "x")
        out = dropout(x, 0.5, training=True, rng=rng64(5))
        backward(sum_all(out))
        np.testing.assert_array_equal(x.grad, out.data)


# ---------------------------------------------------------------------------
# loss


class TestLoss:
    def uniform_probs(self, batch, classes):
        return Tensor(np.full((batch, classes), 1.0 / classes))

    def test_perfect_prediction_is_zero(self):
        probs = Tensor(np.array([[1.0, 0.0], [0.0, 1.0]]))
        loss = weighted_cross_entropy(probs, np.array([0, 1]), LossSpec(class_weights=(1.0, 1.0)))
        assert loss.item() == 0.0

    def test_uniform_probs_weighted_hand_value(self):
        spec = LossSpec(class_weights=(1.0, 1.0, 1.0, 0.2))
        loss = weighted_cross_entropy(self.uniform_probs(3, 4), np.array([3, 3, 3]), spec)
        assert loss.item() == pytest.approx(0.2 * np.log(4.0), rel=1e-12)

    def test_weights_scale_per_class_terms(self):
        probs = Tensor(np.array([[0.5, 0.5], [0.5, 0.5]]))
        labels = np.array([0, 1])
        base = weighted_cross_entropy(probs, labels, LossSpec(class_weights=(1.0, 1.0))).item()
        bumped = weighted_cross_entropy(probs, labels, LossSpec(class_weights=(2.0, 1.0))).item()
        assert bumped == pytest.approx(base * 1.5, rel=1e-12)

    def test_l2_penalty_added_manually(self):
        w = parameter(np.array([[1.0, 2.0], [3.0, 4.0]]), "w")
        spec = LossSpec(class_weights=(1.0, 1.0), l2_weight=0.01)
        loss = weighted_cross_entropy(self.uniform_probs(2, 2), np.array([0, 1]), spec, l2_params=[w])
        assert loss.item() == pytest.approx(np.log(2.0) + 0.01 * 30.0, rel=1e-12)

    def test_l2_gradient_reaches_weights(self):
        w = parameter(np.array([[1.0, -2.0]]), "w")
        spec = LossSpec(class_weights=(1.0, 1.0), l2_weight=0.5)
        loss = weighted_cross_entropy(self.uniform_probs(1, 2), np.array([0]), spec, l2_params=[w])
        backward(loss)
        np.testing.assert_allclose(w.grad, [[1.0, -2.0]])

    def test_weight_count_mismatch(self):
        with pytest.raises(ShapeError, match="class weights"):
            weighted_cross_entropy(self.uniform_probs(1, 3), np.array([0]), LossSpec(class_weights=(1.0, 1.0)))

    def test_label_out_of_range(self):
        with pytest.raises(ValueError, match="class index"):
            weighted_cross_entropy(self.uniform_probs(2, 2), np.array([0, 2]), LossSpec(class_weights=(1.0, 1.0)))

    def test_rows_must_sum_to_one(self):
        probs = Tensor(np.array([[0.9, 0.3]]))
        with pytest.raises(ValueError, match="sum to 1"):
            weighted_cross_entropy(probs, np.array([0]), LossSpec(class_weights=(1.0, 1.0)))

    def test_spec_validation(self):
        with pytest.raises(ValueError, match="positive"):
            LossSpec(class_weights=(1.0, 0.0))
        with pytest.raises(ValueError, match="nonnegative"):
            LossSpec(class_weights=(1.0,), l2_weight=-0.1)

    def test_gradients_through_softmax_and_loss(self):
        rng = rng64(11)
        logits = parameter(rng.standard_normal((4, 3)), "logits")
        labels = np.array([0, 2, 1, 2])
        w = parameter(rng.standard_normal((2, 2)), "w")
        spec = LossSpec(class_weights=(1.0, 2.0, 0.5), l2_weight=0.01)

        def build():
            return weighted_cross_entropy(softmax(logits), labels, spec, l2_params=[w])

        assert_grads_match([logits, w], build)


# ---------------------------------------------------------------------------
# optimizer


def reference_adam(p0, grad_sequence, lr, b1=0.9, b2=0.999, eps=1e-8):
    p = p0.copy()
    m = np.zeros_like(p0)
    v = np.zeros_like(p0)
    for t, g in enumerate(grad_sequence, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        p = p - lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
    return p


class TestAdam:
    def test_first_step_is_signed_learning_rate(self):
        p = parameter(np.array([1.0, -1.0, 2.0]), "p")
        g = np.array([0.5, -2.0, 1.0])
        state = AdamState.for_params([p], learning_rate=0.1)
        adam_step([p], [g], state)
        np.testing.assert_allclose(p.data, [1.0 - 0.1, -1.0 + 0.1, 2.0 - 0.1], atol=1e-8)

    def test_zero_gradient_leaves_parameter_unchanged(self):
        p = parameter(np.array([3.0]), "p")
        state = AdamState.for_params([p], learning_rate=0.1)
        adam_step([p], [np.zeros(1)], state)
        np.testing.assert_array_equal(p.data, [3.0])

    def test_five_steps_match_reference(self):
        rng = rng64(12)
        p0 = rng.standard_normal(6)
        grads = [rng.standard_normal(6) for _ in range(5)]
        p = parameter(p0.copy(), "p")
        state = AdamState.for_params([p], learning_rate=0.01)
        for g in grads:
            adam_step([p], [g], state)
        np.testing.assert_allclose(p.data, reference_adam(p0, grads, lr=0.01), atol=1e-12)

    def test_state_must_match_parameter_list(self):
        p = parameter(np.zeros(3), "p")
        q = parameter(np.zeros(3), "q")
        state = AdamState.for_params([p], learning_rate=0.1)
        with pytest.raises(ShapeError, match="optimizer state"):
            adam_step([p, q], [np.zeros(3), np.zeros(3)], state)

    def test_gradient_shape_must_match(self):
        p = parameter(np.zeros(3), "p")
        state = AdamState.for_params([p], learning_rate=0.1)
        with pytest.raises(ShapeError, match="gradient shape"):
            adam_step([p], [np.zeros(4)], state)

    def test_step_counter_advances(self):
        p = parameter(np.zeros(2), "p")
        state = AdamState.for_params([p], learning_rate=0.1)
        adam_step([p], [np.ones(2)], state)
        adam_step([p], [np.ones(2)], state)
        assert state.step == 2


# ---------------------------------------------------------------------------
# initialization


class TestInit:
    def test_glorot_bounds(self):
        fan_in, fan_out = 30, 50
        values = glorot_uniform((fan_in, fan_out), fan_in, fan_out, rng64(13), np.float64)
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        assert np.abs(values).max() <= bound
        assert abs(values.mean()) < bound / 10

    def test_same_seed_same_init(self):
        a = Conv1DLayer(3, 4, 5, rng=rng64(14), dtype=np.float32)
        b = Conv1DLayer(3, 4, 5, rng=rng64(14), dtype=np.float32)
        np.testing.assert_array_equal(a.weights.data, b.weights.data)

    def test_dtype_respected(self):
        layer = DenseLayer(4, 4, rng=rng64(15), dtype=np.float32)
        assert layer.weights.data.dtype == np.float32
        assert layer.bias.data.dtype == np.float32
