import numpy as np
from django.test import SimpleTestCase

from slipdetect.exceptions import ConfigError, DimensionError, InputValidationError, UsageError
from slipdetect.tensor import (
    ParameterSpec,
    Tensor,
    concat_channels,
    conv1d_causal,
    conv2d,
    initialize_parameters,
    linear,
    maxpool2d,
    mean_time,
    mul,
    relu,
    reshape,
    select_time,
    softmax_cross_entropy,
    tensor_sum,
)


class CausalConvTest(SimpleTestCase):
    def setUp(self):
        self.x = Tensor([[1.0, 2.0, 3.0, 4.0]])
        self.b = Tensor([0.0])

    def test_identity_tap(self):
        y = conv1d_causal(self.x, Tensor([[[1.0, 0.0]]]), self.b)
        np.testing.assert_allclose(y.data, [[1.0, 2.0, 3.0, 4.0]])

    def test_second_tap_looks_back_by_dilation(self):
        w = Tensor([[[0.0, 1.0]]])
        np.testing.assert_allclose(conv1d_causal(self.x, w, self.b).data, [[0.0, 1.0, 2.0, 3.0]])
        np.testing.assert_allclose(conv1d_causal(self.x, w, self.b, dilation=2).data, [[0.0, 0.0, 1.0, 2.0]])

    def test_output_never_depends_on_future_inputs(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(3, 10))
        w, b = Tensor(rng.normal(size=(4, 3, 3))), Tensor(rng.normal(size=4))
        before = conv1d_causal(Tensor(x), w, b, dilation=2).data
        x[:, 6] += 5.0
        after = conv1d_causal(Tensor(x), w, b, dilation=2).data
        np.testing.assert_allclose(before[:, :6], after[:, :6])
        self.assertFalse(np.allclose(before[:, 6], after[:, 6]))

    def test_all_ones_kernel_with_dilation_two(self):
        y = conv1d_causal(Tensor([np.ones(5)]), Tensor([[[1.0, 1.0, 1.0]]]), self.b, dilation=2)
        np.testing.assert_allclose(y.data, [[1.0, 1.0, 2.0, 2.0, 3.0]])

    def test_batched_input_keeps_length(self):
        x = Tensor(np.ones((2, 3, 7)))
        y = conv1d_causal(x, Tensor(np.ones((5, 3, 3))), Tensor(np.zeros(5)), dilation=4)
        self.assertEqual(y.shape, (2, 5, 7))

    def test_channel_mismatch_raises_dimension_error(self):
        with self.assertRaises(DimensionError) as ctx:
            conv1d_causal(Tensor(np.ones((2, 5))), Tensor(np.ones((1, 3, 2))), self.b)
        self.assertEqual(ctx.exception.op, "conv1d_causal")

    def test_zero_dilation_is_config_error(self):
        with self.assertRaises(ConfigError):
            conv1d_causal(self.x, Tensor([[[1.0]]]), self.b, dilation=0)


class Conv2dPoolTest(SimpleTestCase):
    def test_valid_conv_sums_windows(self):
        x = Tensor(np.arange(9.0).reshape(1, 3, 3))
        y = conv2d(x, Tensor(np.ones((1, 1, 2, 2))), Tensor([0.0]))
        np.testing.assert_allclose(y.data, [[[8.0, 12.0], [20.0, 24.0]]])

    def test_padding_grows_output(self):
        x = Tensor(np.ones((3, 4, 4)))
        y = conv2d(x, Tensor(np.ones((8, 3, 3, 3))), Tensor(np.zeros(8)), padding=1)
        self.assertEqual(y.shape, (8, 4, 4))
        self.assertEqual(y.data[0, 0, 0], 12.0)  # corner sees a 2x2 patch in 3 channels
        self.assertEqual(y.data[0, 1, 1], 27.0)

    def test_kernel_larger_than_input(self):
        with self.assertRaises(DimensionError):
            conv2d(Tensor(np.ones((1, 2, 2))), Tensor(np.ones((1, 1, 3, 3))), Tensor([0.0]))

    def test_pool_takes_window_max(self):
        x = Tensor(np.arange(16.0).reshape(1, 4, 4))
        np.testing.assert_allclose(maxpool2d(x).data, [[[5.0, 7.0], [13.0, 15.0]]])

    def test_pool_gradient_goes_to_first_of_ties(self):
        x = Tensor(np.ones((1, 2, 2)), requires_grad=True)
        tensor_sum(maxpool2d(x)).backward()
        np.testing.assert_allclose(x.grad, [[[1.0, 0.0], [0.0, 0.0]]])

    def test_pool_on_too_small_input(self):
        with self.assertRaises(DimensionError):
            maxpool2d(Tensor(np.ones((1, 1, 4))))


class LossAndBackwardTest(SimpleTestCase):
    def test_confident_correct_logits_give_near_zero_loss(self):
        loss = softmax_cross_entropy(Tensor([[20.0, -20.0]]), [0])
        self.assertLess(loss.item(), 1e-8)

    def test_uniform_logits_give_log_two(self):
        loss = softmax_cross_entropy(Tensor(np.zeros((4, 2))), [0, 1, 1, 0])
        self.assertAlmostEqual(loss.item(), np.log(2.0))

    def test_loss_of_a_wrong_leaning_logit_pair(self):
        loss = softmax_cross_entropy(Tensor([[1.0, 0.0]]), [1])
        self.assertAlmostEqual(loss.item(), 1.313262, places=6)

    def test_label_out_of_range(self):
        with self.assertRaises(InputValidationError):
            softmax_cross_entropy(Tensor([[1.0, 0.0]]), [2])

    def test_fractional_label(self):
        with self.assertRaises(InputValidationError):
            softmax_cross_entropy(Tensor([[1.0, 0.0]]), [0.5])

    def test_cross_entropy_gradient(self):
        logits = Tensor([[2.0, -1.0]], requires_grad=True)
        softmax_cross_entropy(logits, [1]).backward()
        p = np.exp([2.0, -1.0]) / np.exp([2.0, -1.0]).sum()
        np.testing.assert_allclose(logits.grad, [[p[0], p[1] - 1.0]])

    def test_backward_needs_scalar(self):
        with self.assertRaises(UsageError):
            Tensor([1.0, 2.0], requires_grad=True).backward()

    def test_item_needs_single_element(self):
        with self.assertRaises(UsageError):
            Tensor([1.0, 2.0]).item()

    def test_shared_input_accumulates(self):
        x = Tensor([3.0, -2.0], requires_grad=True)
        tensor_sum(mul(x, x)).backward()
        np.testing.assert_allclose(x.grad, [6.0, -4.0])

    def test_second_backward_adds_to_grad(self):
        x = Tensor([1.0, 2.0], requires_grad=True)
        tensor_sum(relu(x)).backward()
        tensor_sum(relu(x)).backward()
        np.testing.assert_allclose(x.grad, [2.0, 2.0])
        x.zero_grad()
        self.assertIsNone(x.grad)

    def test_constant_inputs_get_no_grad(self):
        x = Tensor([1.0, 2.0])
        w = Tensor([[1.0, 1.0]], requires_grad=True)
        tensor_sum(linear(x, w, Tensor([0.0]))).backward()
        self.assertIsNone(x.grad)
        np.testing.assert_allclose(w.grad, [[1.0, 2.0]])


class ShapeOpsTest(SimpleTestCase):
    def test_concat_stacks_channels(self):
        a, b = Tensor(np.zeros((2, 5))), Tensor(np.ones((3, 5)))
        out = concat_channels(a, b)
        self.assertEqual(out.shape, (5, 5))
        np.testing.assert_allclose(out.data[2:], 1.0)

    def test_concat_length_mismatch(self):
        with self.assertRaises(DimensionError):
            concat_channels(Tensor(np.zeros((2, 5))), Tensor(np.zeros((2, 4))))

    def test_select_and_mean_time(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        np.testing.assert_allclose(select_time(x).data, [2.0, 5.0])
        np.testing.assert_allclose(mean_time(x).data, [1.0, 4.0])
        tensor_sum(select_time(x, 0)).backward()
        np.testing.assert_allclose(x.grad, [[1.0, 0.0, 0.0], [1.0, 0.0, 0.0]])

    def test_reshape_size_mismatch(self):
        with self.assertRaises(DimensionError):
            reshape(Tensor(np.zeros(6)), (4, 2))


class ParameterInitTest(SimpleTestCase):
    def test_fan_in_bounds_and_determinism(self):
        manifest = [ParameterSpec("w", (64, 16), fan_in=16), ParameterSpec("frozen", (3,), trainable=False)]
        first = initialize_parameters(manifest, np.random.default_rng(7))
        second = initialize_parameters(manifest, np.random.default_rng(7))
        self.assertTrue(np.all(np.abs(first["w"].data) <= 0.25))
        np.testing.assert_array_equal(first["w"].data, second["w"].data)
        self.assertTrue(first["w"].requires_grad)
        self.assertFalse(first["frozen"].requires_grad)
        self.assertEqual(list(first), ["w", "frozen"])
