import numpy as np
from django.test import SimpleTestCase

from slipdetect.exceptions import ConfigError, DimensionError
from slipdetect.temporal import (
    MsTcn,
    MsTcnConfig,
    MsTcnLayerConfig,
    even_split,
    mstcn_config,
    mstcn_layer_forward,
    parameter_manifest,
    receptive_field,
    tcn_config,
    tcn_forward,
)
from slipdetect.tensor import Tensor, conv1d_causal, relu


class LayerConfigTest(SimpleTestCase):
    def test_uneven_split_needs_explicit_channels(self):
        with self.assertRaises(ConfigError):
            MsTcnLayerConfig(64, 64, branches=3, dilations=(1, 2, 4))
        layer = MsTcnLayerConfig(64, 64, branches=3, dilations=(1, 2, 4), branch_channels=even_split(64, 3))
        self.assertEqual(layer.channel_split, (22, 21, 21))

    def test_branch_channels_must_sum_to_output(self):
        with self.assertRaises(ConfigError):
            MsTcnLayerConfig(8, 8, branches=2, dilations=(1, 2), branch_channels=(4, 3))

    def test_dilation_count_must_match_branches(self):
        with self.assertRaises(ConfigError):
            MsTcnLayerConfig(8, 8, branches=2, dilations=(1,))

    def test_chain_of_layers_must_connect(self):
        with self.assertRaises(ConfigError):
            MsTcnConfig(layers=(MsTcnLayerConfig(4, 8), MsTcnLayerConfig(6, 8)))

    def test_unknown_activation(self):
        with self.assertRaises(ConfigError):
            MsTcnConfig(layers=(MsTcnLayerConfig(4, 8),), activation="tanh")

    def test_dict_round_trip_keeps_explicit_split(self):
        cfg = mstcn_config(128, 64, layers=3, branches=3, kernel_size=3, branch_channels=(22, 21, 21))
        self.assertEqual(MsTcnConfig.from_dict(cfg.to_dict()), cfg)


class ReceptiveFieldTest(SimpleTestCase):
    def test_four_layer_tcn(self):
        self.assertEqual(receptive_field(tcn_config(64, layers=4, kernel_size=3)), 31)

    def test_two_layer_two_branch_mstcn(self):
        # each layer reaches back max((5-1)*1, (5-1)*2) = 8 frames
        self.assertEqual(receptive_field(mstcn_config(64, 64, layers=2, branches=2, kernel_size=5)), 17)

    def test_three_layer_tcn_doubling_dilations(self):
        cfg = tcn_config(8, 8, layers=3, kernel_size=3)
        self.assertEqual([layer.dilations for layer in cfg.layers], [(1,), (2,), (4,)])
        self.assertEqual(receptive_field(cfg), 15)

    def test_impulse_response_spans_receptive_field(self):
        """A unit impulse at t=0 reaches no output later than receptive_field - 1, and reaches that one"""
        configs = {
            "tcn": tcn_config(2, 3, layers=3, kernel_size=3),
            "mstcn": mstcn_config(2, 4, layers=2, branches=2, kernel_size=5),
            "mstcn_three_branch": mstcn_config(2, 3, layers=3, branches=3, kernel_size=3),
        }
        for name, cfg in configs.items():
            with self.subTest(cfg=name):
                params = {
                    spec.name: Tensor(np.zeros(spec.shape) if spec.name.endswith(".bias") else np.full(spec.shape, 0.5))
                    for spec in parameter_manifest(cfg, "t")
                }
                rf = receptive_field(cfg)
                x = np.zeros((2, rf + 6))
                x[:, 0] = 1.0
                out = MsTcn(cfg, "t", params=params)(Tensor(x)).data
                reached = np.flatnonzero(np.any(out > 0.0, axis=0))
                self.assertEqual(reached[0], 0)
                self.assertEqual(reached[-1] + 1, rf)


class LayerForwardTest(SimpleTestCase):
    def setUp(self):
        self.layer = MsTcnLayerConfig(3, 4, branches=2, kernel_size=2, dilations=(1, 2))
        rng = np.random.default_rng(1)
        self.weights = [
            (Tensor(rng.normal(size=(2, 3, 2))), Tensor(rng.normal(size=2))),
            (Tensor(rng.normal(size=(2, 3, 2))), Tensor(rng.normal(size=2))),
        ]
        self.x = Tensor(rng.normal(size=(3, 9)))

    def test_branches_concatenate_in_order(self):
        out = mstcn_layer_forward(self.x, self.layer, self.weights, activation="none")
        first = conv1d_causal(self.x, *self.weights[0], dilation=1)
        second = conv1d_causal(self.x, *self.weights[1], dilation=2)
        np.testing.assert_allclose(out.data[:2], first.data)
        np.testing.assert_allclose(out.data[2:], second.data)
        self.assertEqual(out.shape, (4, 9))

    def test_residual_skipped_when_channels_differ(self):
        plain = mstcn_layer_forward(self.x, self.layer, self.weights)
        residual = mstcn_layer_forward(self.x, self.layer, self.weights, residual=True)
        np.testing.assert_allclose(plain.data, residual.data)

    def test_residual_added_before_activation(self):
        layer = MsTcnLayerConfig(2, 2, branches=1, kernel_size=1)
        weights = [(Tensor(np.eye(2)[:, :, None]), Tensor(np.zeros(2)))]
        x = Tensor([[1.0, -3.0], [2.0, 0.5]])
        out = mstcn_layer_forward(x, layer, weights, residual=True)
        np.testing.assert_allclose(out.data, relu(Tensor(2.0 * x.data)).data)

    def test_wrong_branch_weight_shape(self):
        weights = [self.weights[0], (Tensor(np.zeros((3, 3, 2))), Tensor(np.zeros(3)))]
        with self.assertRaises(DimensionError):
            mstcn_layer_forward(self.x, self.layer, weights)


class NetworkTest(SimpleTestCase):
    def test_stack_is_causal(self):
        net = MsTcn(mstcn_config(4, 6, layers=2, branches=2, kernel_size=3), "t", rng=np.random.default_rng(0))
        x = np.random.default_rng(2).normal(size=(2, 4, 12))
        before = net(Tensor(x)).data
        x[:, :, 8:] = 0.0
        after = net(Tensor(x)).data
        np.testing.assert_allclose(before[:, :, :8], after[:, :, :8])
        self.assertEqual(before.shape, (2, 6, 12))

    def test_manifest_names_and_fan_in(self):
        manifest = parameter_manifest(mstcn_config(4, 6, layers=1, branches=2, kernel_size=3), "m")
        self.assertEqual(
            [p.name for p in manifest],
            ["m.layer0.branch0.weight", "m.layer0.branch0.bias", "m.layer0.branch1.weight", "m.layer0.branch1.bias"],
        )
        self.assertEqual(manifest[0].shape, (3, 4, 3))
        self.assertEqual(manifest[0].fan_in, 12)

    def test_tcn_forward_rejects_multi_branch(self):
        cfg = mstcn_config(4, 4, layers=1, branches=2, kernel_size=3)
        net = MsTcn(cfg, "t")
        with self.assertRaises(ConfigError):
            tcn_forward(Tensor(np.zeros((4, 5))), cfg, net.weights)

    def test_missing_parameter(self):
        with self.assertRaises(ConfigError):
            MsTcn(tcn_config(4, 4, layers=1), "t", params={})
