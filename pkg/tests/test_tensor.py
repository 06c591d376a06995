import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hoigraph import tensor as T


def rand_param(rng, *shape):
    return T.parameter(rng.standard_normal(shape))


class TestMatmul:
    def test_identity(self):
        v = np.array([[1.0], [2.0], [3.0]])
        out = T.matmul(T.constant(np.eye(3)), T.constant(v))
        assert np.array_equal(out.data, v)

    def test_hand_case(self):
        a = T.constant([[1.0, 2.0], [3.0, 4.0]])
        b = T.constant([[1.0], [1.0]])
        assert np.array_equal(T.matmul(a, b).data, [[3.0], [7.0]])

    def test_zero_annihilates(self):
        rng = np.random.default_rng(0)
        a = T.constant(rng.standard_normal((4, 5)))
        z = T.constant(np.zeros((5, 2)))
        assert np.array_equal(T.matmul(a, z).data, np.zeros((4, 2)))

    def test_shape_mismatch(self):
        with pytest.raises(T.DimensionError):
            T.matmul(T.constant(np.ones((2, 3))), T.constant(np.ones((2, 3))))

    def test_matvec(self):
        a = T.constant([[1.0, 2.0], [3.0, 4.0]])
        v = T.constant([1.0, 1.0])
        assert np.array_equal(T.matmul(a, v).data, [3.0, 7.0])


class TestSoftmax:
    def test_symmetry(self):
        out = T.softmax(T.constant([0.0, 0.0]))
        assert np.allclose(out.data, [0.5, 0.5], atol=0)

    def test_closed_form(self):
        out = T.softmax(T.constant([math.log(2.0), 0.0]))
        assert np.allclose(out.data, [2.0 / 3.0, 1.0 / 3.0], atol=1e-15)

    @pytest.mark.parametrize("c", [-1e6, -3.5, 0.0, 7.25, 1e6])
    def test_constant_input(self, c):
        out = T.softmax(T.constant([c, c, c, c]))
        assert np.allclose(out.data, 0.25, atol=1e-15)

    def test_empty_rejected(self):
        with pytest.raises(T.DimensionError):
            T.softmax(T.constant(np.zeros(0)))

    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=12),
           st.floats(-30, 30))
    @settings(max_examples=150, deadline=None, derandomize=True)
    def test_sum_and_shift_invariance(self, values, shift):
        u = np.array(values)
        a = T.softmax(T.constant(u)).data
        b = T.softmax(T.constant(u + shift)).data
        assert abs(a.sum() - 1.0) < 1e-12
        assert np.all(a > 0)
        assert np.max(np.abs(a - b)) < 1e-12


class TestLayerNorm:
    def test_already_normalized(self):
        out = T.layer_norm(T.constant([1.0, -1.0]), T.constant([1.0, 1.0]),
                           T.constant([0.0, 0.0]), eps=1e-12)
        assert np.allclose(out.data, [1.0, -1.0], atol=1e-9)

    def test_mean1_pair(self):
        out = T.layer_norm(T.constant([2.0, 0.0]), T.constant([1.0, 1.0]),
                           T.constant([0.0, 0.0]), eps=1e-12)
        assert np.allclose(out.data, [1.0, -1.0], atol=1e-9)

    def test_constant_input_gives_bias(self):
        x = T.constant([3.0, 3.0, 3.0])
        ones = T.constant([1.0, 1.0, 1.0])
        bias = T.constant([0.5, -0.25, 2.0])
        out = T.layer_norm(x, ones, bias)
        assert np.allclose(out.data, bias.data, atol=0)

    @given(st.lists(st.floats(-100, 100), min_size=2, max_size=16))
    @settings(max_examples=150, deadline=None, derandomize=True)
    def test_output_statistics(self, values):
        x = np.array(values)
        if np.var(x) < 100.0:  # input variance must dominate eps=1e-5
            x = x + np.arange(len(x)) * 50.0
        d = len(x)
        out = T.layer_norm(T.constant(x), T.constant(np.ones(d)),
                           T.constant(np.zeros(d))).data
        assert abs(out.mean()) < 1e-9
        assert abs(out.var() - 1.0) < 1e-6


class TestElementwise:
    def test_relu(self):
        assert np.array_equal(T.relu(T.constant([-1.0, 2.0])).data, [0.0, 2.0])

    def test_sigmoid_zero(self):
        assert T.sigmoid(T.constant(0.0)).data == 0.5

    def test_sigmoid_closed_form(self):
        assert abs(T.sigmoid(T.constant(math.log(3.0))).data - 0.75) < 1e-15

    def test_sigmoid_extremes_stay_in_range(self):
        out = T.sigmoid(T.constant([-800.0, 800.0])).data
        assert out[0] >= 0.0 and out[1] <= 1.0 and np.all(np.isfinite(out))


class TestConv2d:
    def test_zero_input(self):
        x = T.constant(np.zeros((1, 6, 6)))
        k = T.constant(np.random.default_rng(1).standard_normal((2, 1, 5, 5)))
        b = T.constant(np.zeros(2))
        assert np.array_equal(T.conv2d_valid(x, k, b).data, np.zeros((2, 2, 2)))

    def test_sum_of_ones(self):
        x = T.constant(np.ones((1, 5, 5)))
        k = T.constant(np.ones((1, 1, 5, 5)))
        b = T.constant(np.zeros(1))
        assert np.array_equal(T.conv2d_valid(x, k, b).data, [[[25.0]]])

    def test_impulse_response_orientation(self):
        # cross-correlation (no kernel flip): a centered delta yields the
        # kernel rotated by 180 degrees, which distinguishes it from true
        # convolution whose impulse response is the kernel itself
        x = np.zeros((1, 9, 9))
        x[0, 4, 4] = 1.0
        rng = np.random.default_rng(2)
        k = rng.standard_normal((1, 1, 5, 5))
        out = T.conv2d_valid(T.constant(x), T.constant(k), T.constant(np.zeros(1))).data
        assert np.array_equal(out[0], k[0, 0, ::-1, ::-1])
        assert not np.array_equal(out[0], k[0, 0])

    def test_linearity(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 7, 8))
        y = rng.standard_normal((2, 7, 8))
        k = T.constant(rng.standard_normal((3, 2, 5, 5)))
        b = T.constant(np.zeros(3))
        a_c, b_c = 2.5, -1.25
        lhs = T.conv2d_valid(T.constant(a_c * x + b_c * y), k, b).data
        rhs = (a_c * T.conv2d_valid(T.constant(x), k, b).data
               + b_c * T.conv2d_valid(T.constant(y), k, b).data)
        assert np.max(np.abs(lhs - rhs)) < 1e-10

    def test_undersized_input(self):
        with pytest.raises(T.DimensionError):
            T.conv2d_valid(T.constant(np.zeros((1, 4, 9))),
                           T.constant(np.zeros((1, 1, 5, 5))),
                           T.constant(np.zeros(1)))


class TestMaxpool2:
    def test_constant(self):
        out = T.maxpool2(T.constant(np.full((3, 4, 4), 2.5)))
        assert np.array_equal(out.data, np.full((3, 2, 2), 2.5))

    def test_single_window(self):
        out = T.maxpool2(T.constant([[[1.0, 2.0], [3.0, 4.0]]]))
        assert np.array_equal(out.data, [[[4.0]]])

    def test_checkerboard(self):
        board = np.indices((4, 4)).sum(axis=0) % 2
        out = T.maxpool2(T.constant(board[None].astype(float)))
        assert np.array_equal(out.data, np.ones((1, 2, 2)))

    def test_odd_extent_rejected(self):
        with pytest.raises(T.DimensionError):
            T.maxpool2(T.constant(np.zeros((1, 3, 4))))

    @given(st.integers(0, 2 ** 31 - 1))
    @settings(max_examples=60, deadline=None, derandomize=True)
    def test_commutes_with_monotone_map(self, seed):
        rng = np.random.default_rng(seed)
        x = rng.standard_normal((2, 6, 8))
        monotone = lambda a: 3.0 * a + np.tanh(a)
        lhs = T.maxpool2(T.constant(monotone(x))).data
        rhs = monotone(T.maxpool2(T.constant(x)).data)
        assert np.array_equal(lhs, rhs)


class TestGradients:
    """finite_diff_check is the arbiter for every analytic backward pass."""

    def test_square_at_three(self):
        theta = T.parameter(np.array(3.0))
        report = T.finite_diff_check(lambda: T.mul(theta, theta), [theta])
        assert report.max_relative_error < 1e-8
        assert report.parameter_count == 1

    def test_constant_function(self):
        theta = T.parameter(np.array([1.0, 2.0]))
        report = T.finite_diff_check(lambda: T.constant(np.asarray(5.0)), [theta])
        assert report.max_relative_error == 0.0

    def test_nonfinite_loss_rejected(self):
        theta = T.parameter(np.array(1.0))
        with pytest.raises(T.NumericError):
            T.finite_diff_check(lambda: T.log(T.affine(theta, 0.0, 0.0)), [theta])

    @pytest.mark.parametrize("seed", range(4))
    def test_matmul_chain(self, seed):
        rng = np.random.default_rng(seed)
        a = rand_param(rng, 3, 4)
        b = rand_param(rng, 4, 2)
        v = T.constant(rng.standard_normal(2))

        def f():
            return T.sum_all(T.relu(T.matmul(T.matmul(a, b), v)))

        assert T.finite_diff_check(f, [a, b]).max_relative_error < 1e-4

    def test_softmax_backward(self):
        rng = np.random.default_rng(7)
        u = rand_param(rng, 6)
        w = T.constant(rng.standard_normal(6))
        f = lambda: T.dot(T.softmax(u), w)
        assert T.finite_diff_check(f, [u]).max_relative_error < 1e-4

    def test_layer_norm_backward(self):
        rng = np.random.default_rng(8)
        x = rand_param(rng, 5)
        gain = rand_param(rng, 5)
        bias = rand_param(rng, 5)
        w = T.constant(rng.standard_normal(5))
        f = lambda: T.dot(T.layer_norm(x, gain, bias), w)
        assert T.finite_diff_check(f, [x, gain, bias]).max_relative_error < 1e-4

    def test_conv_pool_backward(self):
        rng = np.random.default_rng(9)
        x = rand_param(rng, 2, 8, 8)
        k = rand_param(rng, 3, 2, 5, 5)
        b = rand_param(rng, 3)

        def f():
            out = T.maxpool2(T.relu(T.conv2d_valid(x, k, b)))
            return T.sum_all(out)

        assert T.finite_diff_check(f, [x, k, b]).max_relative_error < 1e-4

    def test_sigmoid_log_clamp_backward(self):
        rng = np.random.default_rng(10)
        x = rand_param(rng, 6)

        def f():
            s = T.clamp(T.sigmoid(x), 1e-12, 1.0 - 1e-12)
            return T.sum_all(T.log(s))

        assert T.finite_diff_check(f, [x]).max_relative_error < 1e-4

    def test_gather_concat_stack_backward(self):
        rng = np.random.default_rng(11)
        a = rand_param(rng, 4)
        b = rand_param(rng, 3)

        def f():
            joined = T.concat([a, b])
            picked = T.take(joined, [0, 2, 2, 6])
            rows = T.stack_rows([picked, T.affine(picked, 2.0)])
            w = T.softmax(T.stack_scalars([T.dot(picked, picked), T.sum_all(b)]))
            return T.sum_all(T.weighted_sum_rows(rows, w))

        assert T.finite_diff_check(f, [a, b]).max_relative_error < 1e-4

    def test_grad_accumulates_over_reuse(self):
        theta = T.parameter(np.array(2.0))
        out = T.add(T.mul(theta, theta), theta)  # d/dθ = 2θ + 1 = 5
        out.backward()
        assert theta.grad == pytest.approx(5.0)


class TestConstruction:
    def test_nan_rejected(self):
        with pytest.raises(T.NumericError):
            T.Tensor([1.0, float("nan")])

    def test_inf_rejected(self):
        with pytest.raises(T.NumericError):
            T.Tensor([float("inf")])

    def test_shape_and_dtype(self):
        t = T.Tensor([[1, 2], [3, 4]])
        assert t.shape == (2, 2)
        assert t.data.dtype == np.float64
