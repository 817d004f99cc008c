# Tests for the network ops and the finite-difference gradient suite.

import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from affectdan.diffcore import (Mode, RunningStats, Tape, Tensor, batchnorm, conv2d, dense, finite_diff_check,
                                global_avg_pool, log_softmax, max_pool, relu, run_diffcore_suite, sigmoid,
                                softmax, tanh_op)
from affectdan.diffcore.gradcheck import all_passed
from affectdan.errors import BatchSizeError, ConfigError, DimensionError, GeometryError


def t64(values, requires_grad=False) -> Tensor:
    return Tensor(np.asarray(values, dtype=np.float64), requires_grad=requires_grad)


class TestConv2d(unittest.TestCase):

    def test_ones_kernel_sums_each_window(self):
        x = t64(np.arange(16.0).reshape(1, 1, 4, 4))
        out = conv2d(x, t64(np.ones((1, 1, 3, 3))), t64([0.5]))
        expected = np.array([[45.0, 54.0], [81.0, 90.0]]) + 0.5
        assert_allclose(out.data[0, 0], expected)

    def test_padding_keeps_extent(self):
        x = t64(np.ones((2, 3, 5, 5)))
        out = conv2d(x, t64(np.ones((4, 3, 3, 3))), t64(np.zeros(4)), padding=1)
        self.assertEqual(out.shape, (2, 4, 5, 5))
        self.assertEqual(out.data[0, 0, 2, 2], 27.0)
        self.assertEqual(out.data[0, 0, 0, 0], 12.0)

    def test_stride_two(self):
        out = conv2d(t64(np.ones((1, 1, 5, 5))), t64(np.ones((1, 1, 3, 3))), t64([0.0]), stride=2)
        self.assertEqual(out.shape, (1, 1, 2, 2))

    def test_channel_mismatch(self):
        with self.assertRaises(DimensionError):
            conv2d(t64(np.ones((1, 2, 4, 4))), t64(np.ones((1, 3, 3, 3))), t64([0.0]))

    def test_non_integral_output_extent(self):
        with self.assertRaises(GeometryError):
            conv2d(t64(np.ones((1, 1, 4, 4))), t64(np.ones((1, 1, 3, 3))), t64([0.0]), stride=2)

    def test_kernel_larger_than_input(self):
        with self.assertRaises(GeometryError):
            conv2d(t64(np.ones((1, 1, 2, 2))), t64(np.ones((1, 1, 3, 3))), t64([0.0]))

    def test_bias_gradient_counts_output_positions(self):
        b = t64([0.0, 0.0], requires_grad=True)
        with Tape() as tape:
            y = conv2d(t64(np.ones((3, 1, 4, 4))), t64(np.ones((2, 1, 3, 3))), b).sum()
        tape.backward(y)
        assert_array_equal(b.grad, [12.0, 12.0])


class TestDense(unittest.TestCase):

    def test_affine_map(self):
        out = dense(t64([[1.0, 2.0]]), t64([[1.0, 0.0, 2.0], [0.0, 1.0, 1.0]]), t64([0.0, 1.0, 0.0]))
        assert_allclose(out.data, [[1.0, 3.0, 4.0]])

    def test_feature_mismatch(self):
        with self.assertRaises(DimensionError):
            dense(t64(np.ones((2, 3))), t64(np.ones((4, 2))), t64(np.zeros(2)))


class TestBatchnorm(unittest.TestCase):

    def setUp(self):
        rng = np.random.default_rng(3)
        self.x = t64(rng.normal(2.0, 3.0, size=(16, 5)))
        self.gamma = t64(np.ones(5))
        self.beta = t64(np.zeros(5))

    def test_train_mode_standardizes_each_feature(self):
        out = batchnorm(self.x, self.gamma, self.beta, Mode.TRAIN, None)
        assert_allclose(out.data.mean(axis=0), 0.0, atol=1e-12)
        assert_allclose(out.data.var(axis=0), 1.0, rtol=1e-4)

    def test_train_mode_updates_running_statistics(self):
        running = RunningStats.fresh(5, dtype=np.float64)
        batchnorm(self.x, self.gamma, self.beta, Mode.TRAIN, running, momentum=0.1)
        assert_allclose(running.mean, 0.1 * self.x.data.mean(axis=0))
        assert_allclose(running.var, 0.9 + 0.1 * self.x.data.var(axis=0, ddof=1))

    def test_eval_mode_uses_running_statistics_without_changing_them(self):
        running = RunningStats(np.full(5, 2.0), np.full(5, 4.0))
        before = running.copy()
        out = batchnorm(self.x, self.gamma, self.beta, Mode.EVAL, running, epsilon=1e-5)
        assert_allclose(out.data, (self.x.data - 2.0) / np.sqrt(4.0 + 1e-5))
        assert_array_equal(running.mean, before.mean)
        assert_array_equal(running.var, before.var)

    def test_channel_statistics_for_feature_maps(self):
        x = t64(np.random.default_rng(0).normal(size=(4, 3, 2, 2)))
        out = batchnorm(x, t64(np.ones(3)), t64(np.zeros(3)), Mode.TRAIN, None)
        assert_allclose(out.data.mean(axis=(0, 2, 3)), 0.0, atol=1e-12)

    def test_single_sample_in_train_mode(self):
        with self.assertRaises(BatchSizeError):
            batchnorm(t64(np.ones((1, 5))), self.gamma, self.beta, Mode.TRAIN, None)

    def test_non_positive_epsilon(self):
        with self.assertRaises(ConfigError):
            batchnorm(self.x, self.gamma, self.beta, Mode.TRAIN, None, epsilon=0.0)


class TestActivations(unittest.TestCase):

    def test_relu(self):
        assert_array_equal(relu(t64([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])

    def test_sigmoid_stays_inside_open_interval_at_32_bit(self):
        y = sigmoid(Tensor(np.array([-200.0, 0.0, 200.0], dtype=np.float32))).data
        self.assertTrue(np.all(y > 0.0) and np.all(y < 1.0))
        self.assertAlmostEqual(float(y[1]), 0.5)

    def test_tanh_stays_inside_open_interval(self):
        y = tanh_op(Tensor(np.array([-50.0, 50.0], dtype=np.float32))).data
        self.assertTrue(np.all(np.abs(y) < 1.0))

    def test_softmax_rows_sum_to_one_and_match_log_softmax(self):
        x = t64(np.random.default_rng(1).normal(size=(4, 8)) * 10)
        p = softmax(x, axis=1).data
        assert_allclose(p.sum(axis=1), 1.0)
        assert_allclose(np.exp(log_softmax(x, axis=1).data), p, rtol=1e-12)

    def test_softmax_is_shift_invariant(self):
        x = np.array([[1.0, 2.0, 3.0]])
        assert_allclose(softmax(t64(x), axis=1).data, softmax(t64(x + 1000.0), axis=1).data)

    def test_softmax_rejects_multiple_axes(self):
        with self.assertRaises(DimensionError):
            softmax(t64(np.ones((2, 2))), axis=(0, 1))


class TestPooling(unittest.TestCase):

    def test_max_pool_values(self):
        x = t64(np.arange(16.0).reshape(1, 1, 4, 4))
        assert_array_equal(max_pool(x, 2).data[0, 0], [[5.0, 7.0], [13.0, 15.0]])

    def test_max_pool_ties_route_gradient_to_first_maximum(self):
        x = t64(np.ones((1, 1, 2, 2)), requires_grad=True)
        with Tape() as tape:
            y = max_pool(x, 2).sum()
        tape.backward(y)
        assert_array_equal(x.grad[0, 0], [[1.0, 0.0], [0.0, 0.0]])

    def test_max_pool_window_too_large(self):
        with self.assertRaises(GeometryError):
            max_pool(t64(np.ones((1, 1, 2, 2))), 3)

    def test_global_avg_pool(self):
        x = t64(np.arange(8.0).reshape(1, 2, 2, 2))
        assert_allclose(global_avg_pool(x).data, [[1.5, 5.5]])


class TestGradientCheck(unittest.TestCase):

    def test_finite_diff_check_needs_64_bit_input(self):
        with self.assertRaises(ConfigError):
            finite_diff_check(lambda x: x.sum(), Tensor(np.ones(3, dtype=np.float32)))

    def test_detects_a_wrong_gradient(self):
        # the exp term is built from raw data, so backward never sees it
        def f(x):
            with_grad = (x * 2.0).sum()
            return with_grad + Tensor(np.exp(x.data)).sum()
        report = finite_diff_check(f, t64([0.1, 0.2]))
        self.assertFalse(report.passed)

    def test_report_dict(self):
        report = finite_diff_check(lambda x: (x * x).sum(), t64([1.0, -2.0]))
        self.assertEqual(set(report.to_dict()), {"max_rel_err", "pass"})
        self.assertTrue(report.passed)

    def test_every_engine_op_passes(self):
        results = run_diffcore_suite(instances=20, seed=0)
        failing = [(r.name, r.max_rel_err) for r in results if not r.passed]
        self.assertEqual(failing, [])
        self.assertTrue(all_passed(results))


if __name__ == "__main__":
    unittest.main()
