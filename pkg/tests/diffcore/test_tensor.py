# Tests for the affectdan Tensor, Tape and elementwise / reduction ops.

import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from affectdan.diffcore import (CHECK_DTYPE, TRAIN_DTYPE, Tape, Tensor, default_dtype, get_default_dtype,
                                no_grad, set_debug, stack)
from affectdan.diffcore.tensor import debug_enabled
from affectdan.errors import DimensionError, NumericalError, RankError


def leaf(values, dtype=np.float64) -> Tensor:
    return Tensor(np.asarray(values, dtype=dtype), requires_grad=True)


class TestTensorBasics(unittest.TestCase):

    def test_default_dtype_is_32_bit(self):
        self.assertEqual(Tensor([1.0, 2.0]).dtype, np.dtype(TRAIN_DTYPE))

    def test_default_dtype_context_restores_previous(self):
        with default_dtype(CHECK_DTYPE):
            self.assertEqual(Tensor([1.0]).dtype, np.dtype(np.float64))
        self.assertEqual(get_default_dtype(), np.dtype(TRAIN_DTYPE))

    def test_floating_arrays_keep_their_dtype(self):
        self.assertEqual(Tensor(np.zeros(3, dtype=np.float64)).dtype, np.dtype(np.float64))

    def test_rank_above_four_is_rejected(self):
        with self.assertRaises(RankError):
            Tensor(np.zeros((1, 1, 1, 1, 1)))

    def test_broadcast_mismatch_raises_dimension_error(self):
        with self.assertRaises(DimensionError):
            Tensor(np.zeros((2, 3))) + Tensor(np.zeros((4,)))


class TestBackward(unittest.TestCase):

    def test_broadcast_add_gradient_sums_over_expanded_axes(self):
        x = leaf(np.ones((2, 3)))
        b = leaf([1.0, 2.0, 3.0])
        with Tape() as tape:
            y = (x + b).sum()
        tape.backward(y)
        assert_array_equal(b.grad, [2.0, 2.0, 2.0])
        assert_array_equal(x.grad, np.ones((2, 3)))

    def test_shared_subexpression_gradients_are_summed(self):
        x = leaf([0.5, -1.5, 2.0])
        with Tape() as tape:
            y = (x * x + x).sum()
        tape.backward(y)
        assert_allclose(x.grad, 2.0 * x.data + 1.0)

    def test_division_and_power(self):
        x = leaf([2.0, 4.0])
        with Tape() as tape:
            y = (1.0 / x + x ** 3.0).sum()
        tape.backward(y)
        assert_allclose(x.grad, -1.0 / x.data ** 2 + 3.0 * x.data ** 2)

    def test_mean_and_reshape(self):
        x = leaf(np.arange(6.0).reshape(2, 3))
        with Tape() as tape:
            y = x.reshape(3, 2).mean()
        tape.backward(y)
        assert_allclose(x.grad, np.full((2, 3), 1.0 / 6.0))

    def test_index_and_stack_scatter_back(self):
        x = leaf([1.0, 2.0, 3.0])
        with Tape() as tape:
            y = stack([x[np.array([0, 0, 2])], x[np.array([1, 1, 1])]], axis=0).sum()
        tape.backward(y)
        assert_array_equal(x.grad, [2.0, 3.0, 1.0])

    def test_leaf_gradients_accumulate_until_zeroed(self):
        x = leaf([1.0, 2.0])
        for _ in range(2):
            with Tape() as tape:
                y = (x * 3.0).sum()
            tape.backward(y)
        assert_array_equal(x.grad, [6.0, 6.0])
        x.zero_grad()
        self.assertIsNone(x.grad)

    def test_non_scalar_root_raises(self):
        x = leaf([1.0, 2.0])
        with Tape() as tape:
            y = x * 2.0
        with self.assertRaises(RankError):
            tape.backward(y)

    def test_root_outside_any_tape_raises(self):
        x = leaf([1.0, 2.0])
        y = (x * 2.0).sum()
        with self.assertRaises(RankError):
            y.backward()

    def test_root_from_another_tape_raises(self):
        x = leaf([1.0])
        with Tape():
            y = (x * 2.0).sum()
        with Tape() as other:
            pass
        with self.assertRaises(RankError):
            other.backward(y)

    def test_no_grad_records_nothing(self):
        x = leaf([1.0, 2.0])
        with Tape() as tape:
            with no_grad():
                y = (x * 2.0).sum()
        self.assertEqual(len(tape), 0)
        self.assertIsNone(y.node)

    def test_constants_are_not_recorded(self):
        with Tape() as tape:
            Tensor([1.0, 2.0]) * 2.0
        self.assertEqual(len(tape), 0)


class TestDebugMode(unittest.TestCase):

    def setUp(self):
        self._previous = debug_enabled()

    def tearDown(self):
        set_debug(self._previous)

    def test_nan_from_finite_input_raises_in_debug_mode(self):
        set_debug(True)
        with np.errstate(invalid="ignore", divide="ignore"):
            with self.assertRaises(NumericalError):
                Tensor(np.array([-1.0])).log()

    def test_nan_passes_silently_without_debug(self):
        set_debug(False)
        with np.errstate(invalid="ignore", divide="ignore"):
            out = Tensor(np.array([-1.0])).log()
        self.assertTrue(np.isnan(out.data[0]))


if __name__ == "__main__":
    unittest.main()
