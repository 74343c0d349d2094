"""Forward-value and gradient checks for the autodiff engine."""

import numpy as np
import pytest

from amcnet import autodiff as ad
from amcnet.errors import GraphConsumedError, MaskedRowError, ShapeError

from conftest import gradcheck, projection_loss, relative_error


class TestMatmul:
    def test_identity(self):
        out = ad.matmul(np.eye(2), [[3.0], [4.0]])
        assert np.array_equal(out.data, [[3.0], [4.0]])

    def test_by_hand(self):
        out = ad.matmul([[1.0, 2.0]], [[3.0], [4.0]])
        assert np.array_equal(out.data, [[11.0]])

    def test_gradient(self, rng):
        a = ad.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
        b = ad.Tensor(rng.standard_normal((4, 2)), requires_grad=True)
        proj = rng.standard_normal((3, 2))
        err = gradcheck(lambda: projection_loss(ad.matmul(a, b), proj), [a, b])
        assert err < 1e-6

    def test_batched_broadcast_gradient(self, rng):
        a = ad.Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
        b = ad.Tensor(rng.standard_normal((4, 5)), requires_grad=True)
        proj = rng.standard_normal((2, 3, 5))
        err = gradcheck(lambda: projection_loss(ad.matmul(a, b), proj), [a, b])
        assert err < 1e-6

    def test_shape_mismatch_names_both_shapes(self):
        with pytest.raises(ShapeError) as exc:
            ad.matmul(np.zeros((2, 3)), np.zeros((2, 3)))
        assert "(2, 3)" in str(exc.value)


class TestConv1d:
    def test_identity_kernel(self):
        x = np.array([[[1.0, 2.0, 3.0]]])
        w = np.array([[[1.0]]])
        out = ad.conv1d(x, w, np.zeros(1))
        assert np.array_equal(out.data, x)

    def test_pairwise_sums(self):
        x = np.array([[[1.0, 2.0, 3.0, 4.0]]])
        w = np.array([[[1.0, 1.0]]])
        out = ad.conv1d(x, w, np.zeros(1), stride=2)
        assert np.array_equal(out.data, [[[3.0, 7.0]]])

    def test_output_length(self):
        out = ad.conv1d(np.zeros((1, 2, 16)), np.zeros((3, 2, 5)), np.zeros(3), stride=2, padding=2)
        assert out.shape == (1, 3, 8)

    def test_gradient(self, rng):
        x = ad.Tensor(rng.standard_normal((2, 2, 16)), requires_grad=True)
        w = ad.Tensor(rng.standard_normal((3, 2, 5)), requires_grad=True)
        b = ad.Tensor(rng.standard_normal(3), requires_grad=True)
        proj = rng.standard_normal((2, 3, 8))
        err = gradcheck(lambda: projection_loss(ad.conv1d(x, w, b, stride=2, padding=2), proj), [x, w, b])
        assert err < 1e-5

    def test_kernel_larger_than_padded_input(self):
        with pytest.raises(ShapeError):
            ad.conv1d(np.zeros((1, 1, 3)), np.zeros((1, 1, 5)), np.zeros(1))


class TestBatchNorm:
    def test_constant_input_zeroes(self):
        x = np.full((2, 3, 4), 5.0)
        state = ad.BatchNormState(3)
        out = ad.batchnorm1d(x, np.ones(3), np.zeros(3), state, mode="train")
        assert np.allclose(out.data, 0.0)

    def test_already_normalized(self):
        x = np.tile(np.array([-1.0, 1.0]), (1, 1, 4))[..., :8].reshape(1, 1, 8)
        state = ad.BatchNormState(1)
        out = ad.batchnorm1d(x, np.ones(1), np.zeros(1), state, mode="train")
        assert np.allclose(out.data, x, atol=1e-4)

    def test_gradient(self, rng):
        x = ad.Tensor(rng.standard_normal((2, 3, 5)), requires_grad=True)
        gamma = ad.Tensor(rng.standard_normal(3) + 1.0, requires_grad=True)
        beta = ad.Tensor(rng.standard_normal(3), requires_grad=True)
        proj = rng.standard_normal((2, 3, 5))

        def make_loss():
            state = ad.BatchNormState(3)
            return projection_loss(ad.batchnorm1d(x, gamma, beta, state, mode="train"), proj)

        assert gradcheck(make_loss, [x, gamma, beta]) < 1e-4

    def test_eval_uses_running_stats(self, rng):
        state = ad.BatchNormState(2)
        x = rng.standard_normal((4, 2, 8)) * 3.0 + 1.0
        for _ in range(50):
            ad.batchnorm1d(x, np.ones(2), np.zeros(2), state, mode="train")
        out = ad.batchnorm1d(x, np.ones(2), np.zeros(2), state, mode="eval")
        assert abs(out.data.mean()) < 0.1
        state_before = state.running_mean.copy()
        ad.batchnorm1d(x, np.ones(2), np.zeros(2), state, mode="eval")
        assert np.array_equal(state.running_mean, state_before)

    def test_degenerate_batch(self):
        state = ad.BatchNormState(2)
        with pytest.raises(ShapeError):
            ad.batchnorm1d(np.zeros((1, 2, 1)), np.ones(2), np.zeros(2), state, mode="train")


class TestLayerNorm:
    def test_constant_row(self):
        out = ad.layernorm(np.array([[3.0, 3.0, 3.0]]), np.ones(3), np.zeros(3))
        assert np.allclose(out.data, 0.0)

    def test_already_normalized(self):
        out = ad.layernorm(np.array([[-1.0, 1.0]]), np.ones(2), np.zeros(2))
        assert np.allclose(out.data, [[-1.0, 1.0]], atol=1e-4)

    def test_gradient(self, rng):
        x = ad.Tensor(rng.standard_normal((2, 4, 8)), requires_grad=True)
        gamma = ad.Tensor(rng.standard_normal(8) + 1.0, requires_grad=True)
        beta = ad.Tensor(rng.standard_normal(8), requires_grad=True)
        proj = rng.standard_normal((2, 4, 8))
        err = gradcheck(lambda: projection_loss(ad.layernorm(x, gamma, beta), proj), [x, gamma, beta])
        assert err < 1e-5


class TestSoftmax:
    def test_symmetry(self):
        out = ad.softmax_lastdim(np.array([0.0, 0.0]))
        assert np.allclose(out.data, [0.5, 0.5])

    def test_mask_sentinel_exact_zero(self):
        out = ad.softmax_lastdim(np.array([0.0, -1e9]))
        assert out.data[0] == 1.0
        assert out.data[1] == 0.0

    def test_gradient(self, rng):
        x = ad.Tensor(rng.standard_normal(7), requires_grad=True)
        proj = rng.standard_normal(7)
        err = gradcheck(lambda: projection_loss(ad.softmax_lastdim(x), proj), [x])
        assert err < 1e-6

    def test_fully_masked_row(self):
        with pytest.raises(MaskedRowError):
            ad.softmax_lastdim(np.array([[-1e9, -1e9]]))

    def test_rows_sum_to_one(self, rng):
        for _ in range(20):
            out = ad.softmax_lastdim(rng.standard_normal((4, 9)) * 5.0)
            assert np.all(out.data >= 0.0) and np.all(out.data <= 1.0)
            assert np.allclose(out.data.sum(axis=-1), 1.0, atol=1e-9)


class TestActivations:
    def test_relu_values(self):
        out = ad.relu(np.array([-1.0, 0.0, 2.0]))
        assert np.array_equal(out.data, [0.0, 0.0, 2.0])

    def test_relu_grad_at_zero_is_zero(self):
        x = ad.Tensor(np.array([0.0]), requires_grad=True)
        ad.backward(ad.sum_all(ad.relu(x)))
        assert x.grad[0] == 0.0

    def test_gelu_at_zero(self):
        assert ad.gelu(np.array([0.0])).data[0] == 0.0

    def test_gelu_gradient(self):
        x = ad.Tensor(np.array([-2.0, -0.5, 0.5, 2.0]), requires_grad=True)
        proj = np.array([1.0, 1.0, 1.0, 1.0])
        err = gradcheck(lambda: projection_loss(ad.gelu(x), proj), [x])
        assert err < 1e-6


class TestDropout:
    def test_p_zero_identity(self, rng):
        x = ad.Tensor(rng.standard_normal(10))
        assert ad.dropout(x, 0.0, "train", rng) is x

    def test_eval_identity(self, rng):
        x = ad.Tensor(rng.standard_normal(10))
        assert ad.dropout(x, 0.5, "eval", rng) is x

    def test_expectation_preserved(self):
        rng = np.random.default_rng(7)
        out = ad.dropout(ad.Tensor(np.ones(1_000_000)), 0.5, "train", rng)
        assert abs(out.data.mean() - 1.0) < 0.01

    def test_backward_uses_same_mask(self):
        rng = np.random.default_rng(3)
        x = ad.Tensor(np.ones(1000), requires_grad=True)
        out = ad.dropout(x, 0.5, "train", rng)
        ad.backward(ad.sum_all(out))
        assert np.array_equal(x.grad, out.data)

    def test_invalid_p(self, rng):
        with pytest.raises(ValueError):
            ad.dropout(ad.Tensor(np.ones(3)), 1.0, "train", rng)


class TestCrossEntropy:
    def test_uniform_two_class(self):
        loss = ad.cross_entropy(np.array([[0.0, 0.0]]), [0])
        assert abs(float(loss.data) - np.log(2.0)) < 1e-12

    def test_large_logit_no_overflow(self):
        loss = ad.cross_entropy(np.array([[1000.0, 0.0]]), [0])
        assert np.isfinite(loss.data)
        assert float(loss.data) < 1e-12

    def test_gradient(self, rng):
        logits = ad.Tensor(rng.standard_normal((4, 11)), requires_grad=True)
        labels = rng.integers(0, 11, size=4)
        err = gradcheck(lambda: ad.cross_entropy(logits, labels), [logits])
        assert err < 1e-6

    def test_out_of_range_label(self):
        with pytest.raises(ValueError):
            ad.cross_entropy(np.zeros((2, 3)), [0, 3])


class TestBackward:
    def test_sum_grad_is_ones(self):
        x = ad.Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        ad.backward(ad.sum_all(x))
        assert np.array_equal(x.grad, [1.0, 1.0, 1.0])

    def test_sum_of_squares(self):
        x = ad.Tensor(np.array([1.0, 2.0]), requires_grad=True)
        ad.backward(ad.sum_all(ad.mul(x, x)))
        assert np.array_equal(x.grad, [2.0, 4.0])

    def test_non_scalar_loss(self):
        x = ad.Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ShapeError):
            ad.backward(ad.mul(x, 2.0))

    def test_graph_consumed(self):
        x = ad.Tensor(np.ones(3), requires_grad=True)
        loss = ad.sum_all(ad.mul(x, x))
        ad.backward(loss)
        with pytest.raises(GraphConsumedError):
            ad.backward(loss)

    def test_grads_accumulate_until_zeroed(self):
        x = ad.Tensor(np.array([1.0, 2.0]), requires_grad=True)
        ad.backward(ad.sum_all(x))
        ad.backward(ad.sum_all(x))
        assert np.array_equal(x.grad, [2.0, 2.0])
        x.zero_grad()
        ad.backward(ad.sum_all(x))
        assert np.array_equal(x.grad, [1.0, 1.0])

    def test_no_grad_suppresses_recording(self):
        x = ad.Tensor(np.ones(3), requires_grad=True)
        with ad.no_grad():
            out = ad.sum_all(ad.mul(x, x))
        assert not out.requires_grad


class TestStructuralOps:
    def test_concat_gradient(self, rng):
        a = ad.Tensor(rng.standard_normal((2, 3)), requires_grad=True)
        b = ad.Tensor(rng.standard_normal((2, 5)), requires_grad=True)
        proj = rng.standard_normal((2, 8))
        err = gradcheck(lambda: projection_loss(ad.concat([a, b], axis=-1), proj), [a, b])
        assert err < 1e-6

    def test_mean_axis_gradient(self, rng):
        x = ad.Tensor(rng.standard_normal((3, 4, 5)), requires_grad=True)
        proj = rng.standard_normal((3, 5))
        err = gradcheck(lambda: projection_loss(ad.mean_axis(x, 1), proj), [x])
        assert err < 1e-6

    def test_transpose_gradient(self, rng):
        x = ad.Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
        proj = rng.standard_normal((2, 4, 3))
        err = gradcheck(lambda: projection_loss(ad.swap_last2(x), proj), [x])
        assert err < 1e-6

    def test_broadcast_add_gradient(self, rng):
        x = ad.Tensor(rng.standard_normal((2, 3, 4)), requires_grad=True)
        b = ad.Tensor(rng.standard_normal(4), requires_grad=True)
        proj = rng.standard_normal((2, 3, 4))
        err = gradcheck(lambda: projection_loss(ad.add(x, b), proj), [x, b])
        assert err < 1e-6


def test_forward_determinism(rng):
    x = rng.standard_normal((2, 2, 16))
    w = rng.standard_normal((3, 2, 5))

    def run():
        xt = ad.Tensor(x.copy(), requires_grad=True)
        out = ad.relu(ad.conv1d(xt, ad.Tensor(w.copy(), requires_grad=True), np.zeros(3)))
        loss = ad.sum_all(ad.mul(out, out))
        ad.backward(loss)
        return out.data.tobytes(), xt.grad.tobytes()

    assert run() == run()
