import numpy as np
import pytest

from dermvgg import ops

from conftest import central_difference, rel_error


class TestRelu:
    def test_scalar_negative(self):
        assert ops.relu_forward(np.array(-3.0)) == 0.0

    def test_scalar_zero(self):
        assert ops.relu_forward(np.array(0.0)) == 0.0

    def test_vector(self):
        np.testing.assert_array_equal(
            ops.relu_forward(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0]
        )

    def test_backward_mask(self):
        g = ops.relu_backward(np.array([-1.0, 2.0]), np.array([5.0, 5.0]))
        np.testing.assert_array_equal(g, [0.0, 5.0])

    def test_backward_zero_input_gives_zero(self):
        np.testing.assert_array_equal(
            ops.relu_backward(np.array([0.0]), np.array([7.0])), [0.0]
        )

    def test_backward_shape_mismatch(self):
        with pytest.raises(ValueError):
            ops.relu_backward(np.zeros(3), np.zeros(4))

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(4, 4)) + 0.01  # keep away from the kink at 0
        up = rng.normal(size=(4, 4))
        fd = central_difference(lambda z: float(np.sum(ops.relu_forward(z) * up)), x)
        assert np.max(np.abs(fd - ops.relu_backward(x, up))) < 1e-6


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(ops.softmax(np.zeros(3)), np.full(3, 1 / 3))

    def test_shift_invariance(self):
        a = ops.softmax(np.array([1.0, 2.0]))
        b = ops.softmax(np.array([1001.0, 1002.0]))
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_log_inputs(self):
        out = ops.softmax(np.log(np.array([1.0, 2.0, 3.0])))
        np.testing.assert_allclose(out, [1 / 6, 2 / 6, 3 / 6], atol=1e-12)

    def test_rows_sum_to_one(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(10, 5)) * 10
        np.testing.assert_allclose(ops.softmax(x).sum(axis=-1), np.ones(10), atol=1e-6)

    def test_nonfinite_raises(self):
        with pytest.raises(FloatingPointError):
            ops.softmax(np.array([1.0, np.inf]))

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=6)
        up = rng.normal(size=6)
        fd = central_difference(lambda z: float(np.sum(ops.softmax(z) * up)), x)
        assert rel_error(fd, ops.softmax_backward(ops.softmax(x), up)) < 1e-5


class TestCrossEntropy:
    def test_perfect_prediction(self):
        assert ops.cross_entropy(np.array([0.0, 1.0, 0.0]), np.array([0.0, 1.0, 0.0])) == 0.0

    def test_uniform_prediction(self):
        loss = ops.cross_entropy(np.array([1.0, 0.0, 0.0]), np.full(3, 1 / 3))
        assert loss == pytest.approx(np.log(3), abs=1e-9)

    def test_hand_value(self):
        loss = ops.cross_entropy(np.array([0.0, 0.0, 1.0]), np.array([0.2, 0.3, 0.5]))
        assert loss == pytest.approx(-np.log(0.5), abs=1e-4)

    def test_batch_mean(self):
        y = np.array([[1.0, 0.0], [0.0, 1.0]])
        yhat = np.array([[0.5, 0.5], [0.25, 0.75]])
        expected = (-np.log(0.5) - np.log(0.75)) / 2
        assert ops.cross_entropy(y, yhat) == pytest.approx(expected, rel=1e-9)

    def test_nonnegative_and_clamped(self):
        # confident wrong prediction hits the clamp instead of -inf
        loss = ops.cross_entropy(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
        assert np.isfinite(loss) and loss == pytest.approx(-np.log(1e-7), rel=1e-9)

    def test_not_one_hot_raises(self):
        with pytest.raises(ValueError):
            ops.cross_entropy(np.array([0.5, 0.5]), np.array([0.5, 0.5]))

    def test_shape_mismatch_raises(self):
        with pytest.raises(ValueError):
            ops.cross_entropy(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]))

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        y = np.eye(3)[rng.integers(0, 3, 4)]
        yhat = rng.uniform(0.05, 0.95, size=(4, 3))
        up = central_difference(lambda z: ops.cross_entropy(y, z), yhat)
        assert rel_error(up, ops.cross_entropy_backward(y, yhat)) < 1e-5


def naive_conv2d(x, kernel, bias):
    """Direct-summation oracle: stride 1, padding 1 cross-correlation."""
    n, c_in, h, w = x.shape
    c_out = kernel.shape[0]
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((n, c_out, h, w), dtype=np.float64)
    for b in range(n):
        for o in range(c_out):
            for i in range(h):
                for j in range(w):
                    acc = 0.0
                    for ci in range(c_in):
                        for u in range(3):
                            for v in range(3):
                                acc += xp[b, ci, i + u, j + v] * kernel[o, ci, u, v]
                    out[b, o, i, j] = acc + bias[o]
    return out


class TestConv2d:
    def test_identity_kernel(self):
        x = np.full((1, 1, 1, 1), 5.0)
        k = np.zeros((1, 1, 3, 3))
        k[0, 0, 1, 1] = 1.0
        out = ops.conv2d_forward(x, k, np.zeros(1))
        assert out[0, 0, 0, 0] == 5.0

    def test_all_ones(self):
        x = np.ones((1, 1, 3, 3))
        k = np.ones((1, 1, 3, 3))
        out = ops.conv2d_forward(x, k, np.zeros(1))[0, 0]
        np.testing.assert_array_equal(out, [[4, 6, 4], [6, 9, 6], [4, 6, 4]])

    def test_bias_only(self):
        x = np.ones((2, 2, 4, 4))
        k = np.zeros((3, 2, 3, 3))
        out = ops.conv2d_forward(x, k, np.array([1.5, -2.0, 0.25]))
        for o, b in enumerate([1.5, -2.0, 0.25]):
            assert np.all(out[:, o] == b)

    def test_channel_mismatch_raises(self):
        with pytest.raises(ValueError):
            ops.conv2d_forward(np.zeros((1, 2, 4, 4)), np.zeros((1, 3, 3, 3)), np.zeros(1))

    def test_spatial_size_preserved(self):
        for h, w in [(1, 1), (2, 5), (7, 3)]:
            out = ops.conv2d_forward(np.zeros((1, 1, h, w)), np.zeros((2, 1, 3, 3)), np.zeros(2))
            assert out.shape == (1, 2, h, w)

    def test_matches_direct_summation(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(2, 3, 5, 4))
        k = rng.normal(size=(4, 3, 3, 3))
        b = rng.normal(size=4)
        np.testing.assert_allclose(ops.conv2d_forward(x, k, b), naive_conv2d(x, k, b), atol=1e-10)

    def test_backward_zero_upstream(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(1, 2, 4, 4))
        k = rng.normal(size=(3, 2, 3, 3))
        gx, gk, gb = ops.conv2d_backward(x, k, np.zeros(3), np.zeros((1, 3, 4, 4)))
        assert not gx.any() and not gk.any() and not gb.any()

    def test_grad_bias_is_upstream_sum(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(2, 2, 3, 3))
        k = rng.normal(size=(3, 2, 3, 3))
        up = rng.normal(size=(2, 3, 3, 3))
        _, _, gb = ops.conv2d_backward(x, k, np.zeros(3), up)
        np.testing.assert_allclose(gb, up.sum(axis=(0, 2, 3)), atol=1e-12)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=(1, 2, 4, 4))
        k = rng.normal(size=(2, 2, 3, 3))
        b = rng.normal(size=2)
        up = rng.normal(size=(1, 2, 4, 4))
        gx, gk, gb = ops.conv2d_backward(x, k, b, up)
        loss = lambda xx, kk, bb: float(np.sum(ops.conv2d_forward(xx, kk, bb) * up))
        assert rel_error(central_difference(lambda z: loss(z, k, b), x), gx) < 1e-5
        assert rel_error(central_difference(lambda z: loss(x, z, b), k), gk) < 1e-5
        assert rel_error(central_difference(lambda z: loss(x, k, z), b), gb) < 1e-5


class TestMaxPool:
    def test_single_window(self):
        out, _ = ops.maxpool2x2_forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        assert out[0, 0, 0, 0] == 4.0

    def test_floor_halving_chain(self):
        x = np.zeros((1, 1, 150, 150))
        sizes = []
        for _ in range(5):
            x, _ = ops.maxpool2x2_forward(x)
            sizes.append(x.shape[2])
        assert sizes == [75, 37, 18, 9, 4]

    def test_too_small_raises(self):
        with pytest.raises(ValueError):
            ops.maxpool2x2_forward(np.zeros((1, 1, 1, 4)))

    def test_tie_routes_to_first_element(self):
        x = np.ones((1, 1, 2, 2))
        out, idx = ops.maxpool2x2_forward(x)
        assert out[0, 0, 0, 0] == 1.0
        grad = ops.maxpool2x2_backward(idx, np.array([[[[10.0]]]]))
        np.testing.assert_array_equal(grad[0, 0], [[10.0, 0.0], [0.0, 0.0]])

    def test_backward_scatter(self):
        _, idx = ops.maxpool2x2_forward(np.array([[[[1.0, 2.0], [3.0, 4.0]]]]))
        grad = ops.maxpool2x2_backward(idx, np.array([[[[10.0]]]]))
        np.testing.assert_array_equal(grad[0, 0], [[0.0, 0.0], [0.0, 10.0]])

    def test_backward_zero_upstream(self):
        rng = np.random.default_rng(4)
        _, idx = ops.maxpool2x2_forward(rng.normal(size=(1, 2, 6, 6)))
        assert not ops.maxpool2x2_backward(idx, np.zeros((1, 2, 3, 3))).any()

    def test_stale_indices_raise(self):
        _, idx = ops.maxpool2x2_forward(np.zeros((1, 1, 4, 4)))
        with pytest.raises(ValueError):
            ops.maxpool2x2_backward(idx, np.zeros((1, 1, 3, 3)))

    def test_odd_dims_drop_trailing(self):
        x = np.arange(25, dtype=np.float64).reshape(1, 1, 5, 5)
        out, idx = ops.maxpool2x2_forward(x)
        assert out.shape == (1, 1, 2, 2)
        grad = ops.maxpool2x2_backward(idx, np.ones((1, 1, 2, 2)))
        assert grad.shape == x.shape
        assert not grad[0, 0, 4].any() and not grad[0, 0, :, 4].any()

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(1, 1, 6, 6))  # continuous draws: ties have measure zero
        up = rng.normal(size=(1, 1, 3, 3))

        def loss(z):
            out, _ = ops.maxpool2x2_forward(z)
            return float(np.sum(out * up))

        _, idx = ops.maxpool2x2_forward(x)
        assert np.max(np.abs(central_difference(loss, x) - ops.maxpool2x2_backward(idx, up))) < 1e-6


class TestDense:
    def test_identity_weight(self):
        x = np.arange(6, dtype=np.float64).reshape(2, 3)
        out = ops.dense_forward(x, np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(out, x)

    def test_zero_weight_bias_only(self):
        out = ops.dense_forward(np.ones((3, 2)), np.zeros((4, 2)), np.array([1.0, 2.0, 3.0, 4.0]))
        for row in out:
            np.testing.assert_array_equal(row, [1.0, 2.0, 3.0, 4.0])

    def test_matches_naive_triple_loop(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(2, 3))
        w = rng.normal(size=(4, 3))
        b = rng.normal(size=4)
        expected = np.zeros((2, 4))
        for i in range(2):
            for o in range(4):
                acc = b[o]
                for j in range(3):
                    acc += x[i, j] * w[o, j]
                expected[i, o] = acc
        np.testing.assert_allclose(ops.dense_forward(x, w, b), expected, atol=1e-6)

    def test_dimension_mismatch_raises(self):
        with pytest.raises(ValueError):
            ops.dense_forward(np.zeros((1, 3)), np.zeros((2, 4)), np.zeros(2))

    def test_backward_zero_upstream(self):
        gx, gw, gb = ops.dense_backward(np.ones((2, 3)), np.ones((4, 3)), np.zeros(4), np.zeros((2, 4)))
        assert not gx.any() and not gw.any() and not gb.any()

    def test_grad_bias_column_sums(self):
        rng = np.random.default_rng(7)
        up = rng.normal(size=(3, 4))
        _, _, gb = ops.dense_backward(np.zeros((3, 2)), np.zeros((4, 2)), np.zeros(4), up)
        np.testing.assert_allclose(gb, up.sum(axis=0), atol=1e-12)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        x = rng.normal(size=(2, 3))
        w = rng.normal(size=(4, 3))
        b = rng.normal(size=4)
        up = rng.normal(size=(2, 4))
        gx, gw, gb = ops.dense_backward(x, w, b, up)
        loss = lambda xx, ww, bb: float(np.sum(ops.dense_forward(xx, ww, bb) * up))
        assert rel_error(central_difference(lambda z: loss(z, w, b), x), gx) < 1e-5
        assert rel_error(central_difference(lambda z: loss(x, z, b), w), gw) < 1e-5
        assert rel_error(central_difference(lambda z: loss(x, w, z), b), gb) < 1e-5


class TestDropout:
    def test_eval_is_identity(self):
        rng = np.random.default_rng(9)
        x = rng.normal(size=(5, 5)).astype(np.float32)
        out, _ = ops.dropout(x, 0.5, "eval")
        np.testing.assert_array_equal(out, x)

    def test_rate_zero_train_identity(self):
        x = np.ones((3, 3))
        out, _ = ops.dropout(x, 0.0, "train", np.random.default_rng(0))
        np.testing.assert_array_equal(out, x)

    def test_statistics(self):
        rng = np.random.default_rng(42)
        x = np.ones(100_000, dtype=np.float64)
        out, mask = ops.dropout(x, 0.5, "train", rng)
        kept = np.count_nonzero(out) / x.size
        assert abs(kept - 0.5) < 0.01
        assert abs(out.mean() - x.mean()) < 0.02 * abs(x.mean())
        np.testing.assert_array_equal(out, x * mask)

    def test_invalid_rate(self):
        for rate in (-0.1, 1.0, 1.5):
            with pytest.raises(ValueError):
                ops.dropout(np.ones(3), rate, "train", np.random.default_rng(0))

    def test_backward_uses_mask(self):
        rng = np.random.default_rng(10)
        x = rng.normal(size=(4, 4))
        out, mask = ops.dropout(x, 0.5, "train", rng)
        up = rng.normal(size=(4, 4))
        np.testing.assert_array_equal(ops.dropout_backward(mask, up), up * mask)
