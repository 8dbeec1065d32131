import numpy as np
from django.test import SimpleTestCase

from slipdetect.exceptions import ConfigError, DimensionError, TrainingAbortedError
from slipdetect.optim import Adam, AdamState, adam_step
from slipdetect.tensor import Tensor, mul, tensor_sum


class AdamStepTest(SimpleTestCase):
    def test_first_step_moves_by_learning_rate(self):
        param = Tensor([0.0])
        adam_step(param, np.array([1.0]), AdamState(lr=0.1))
        self.assertAlmostEqual(param.data[0], -0.1, places=6)

    def test_non_finite_gradient_leaves_state_untouched(self):
        param = Tensor([1.0, 2.0], name="head.bias")
        state = AdamState(lr=0.1)
        with self.assertRaises(TrainingAbortedError) as ctx:
            adam_step(param, np.array([np.nan, 1.0]), state)
        self.assertEqual(ctx.exception.context["parameter"], "head.bias")
        np.testing.assert_array_equal(param.data, [1.0, 2.0])
        self.assertEqual(state.step, 0)
        self.assertIsNone(state.m)

    def test_gradient_shape_mismatch(self):
        with self.assertRaises(DimensionError):
            adam_step(Tensor([0.0, 0.0]), np.zeros(3), AdamState(lr=0.1))

    def test_learning_rate_must_be_positive(self):
        with self.assertRaises(ConfigError):
            AdamState(lr=0.0)


class AdamOptimizerTest(SimpleTestCase):
    def test_frozen_parameters_never_move(self):
        trainable = Tensor([1.0], requires_grad=True)
        frozen = Tensor([1.0], requires_grad=False)
        optimizer = Adam({"a": trainable, "b": frozen}, lr=0.1)
        frozen.grad = np.array([1.0])
        trainable.grad = np.array([1.0])
        optimizer.step()
        self.assertEqual(frozen.data[0], 1.0)
        self.assertLess(trainable.data[0], 1.0)

    def test_minimises_a_quadratic(self):
        x = Tensor([3.0, -2.0], requires_grad=True)
        optimizer = Adam({"x": x}, lr=0.05)
        for _ in range(500):
            optimizer.zero_grad()
            tensor_sum(mul(x, x)).backward()
            optimizer.step()
        np.testing.assert_allclose(x.data, [0.0, 0.0], atol=5e-2)

    def test_missing_gradient_counts_as_zero(self):
        x = Tensor([1.0], requires_grad=True)
        optimizer = Adam({"x": x}, lr=0.1)
        optimizer.step()
        self.assertEqual(x.data[0], 1.0)
        self.assertEqual(optimizer.states["x"].step, 1)
