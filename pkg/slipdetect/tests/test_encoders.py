import numpy as np
from django.test import SimpleTestCase

from slipdetect.encoders import (
    FEATURE_DIM,
    TactileEncoder,
    VisualEncoder,
    VisualEncoderSpec,
    encode_sequence,
    normalize_image,
    tactile_encode,
    tactile_manifest,
    visual_encode,
    visual_manifest,
)
from slipdetect.exceptions import ConfigError, DimensionError, InputValidationError
from slipdetect.tensor import initialize_parameters


def _params(manifest, seed=0):
    return initialize_parameters(manifest, np.random.default_rng(seed))


def _direct_conv(x, w, b, padding):
    """Cross-correlation written out position by position."""
    c_out, _, k, _ = w.shape
    xp = np.pad(x, ((0, 0), (padding, padding), (padding, padding)))
    size = xp.shape[1] - k + 1
    out = np.empty((c_out, size, size))
    for o in range(c_out):
        for i in range(size):
            for j in range(size):
                out[o, i, j] = np.sum(xp[:, i : i + k, j : j + k] * w[o]) + b[o]
    return out


def _direct_pool(x):
    channels, height, width = x.shape
    out = np.empty((channels, height // 2, width // 2))
    for c in range(channels):
        for i in range(height // 2):
            for j in range(width // 2):
                out[c, i, j] = x[c, 2 * i : 2 * i + 2, 2 * j : 2 * j + 2].max()
    return out


def _direct_tactile_features(frame, arrays, prefix="tactile.encoder"):
    x = frame
    for name, padding, pooled in (("conv1", 1, True), ("conv2", 1, True), ("conv3", 0, False)):
        x = np.maximum(_direct_conv(x, arrays[f"{prefix}.{name}.weight"], arrays[f"{prefix}.{name}.bias"], padding), 0.0)
        if pooled:
            x = _direct_pool(x)
    return arrays[f"{prefix}.proj.weight"] @ x.reshape(-1) + arrays[f"{prefix}.proj.bias"]


class TactileEncoderTest(SimpleTestCase):
    def setUp(self):
        self.params = _params(tactile_manifest())
        self.frames = np.random.default_rng(3).uniform(size=(5, 3, 4, 4))

    def test_stage_shapes(self):
        trace = {}
        out = tactile_encode(self.frames[0], self.params, trace=trace)
        self.assertEqual(out.shape, (FEATURE_DIM,))
        self.assertEqual(
            trace,
            {
                "conv1": (8, 4, 4),
                "conv1.pool": (8, 2, 2),
                "conv2": (16, 2, 2),
                "conv2.pool": (16, 1, 1),
                "conv3": (32, 1, 1),
            },
        )

    def test_batch_matches_single_frames(self):
        batched = tactile_encode(self.frames, self.params).data
        self.assertEqual(batched.shape, (5, FEATURE_DIM))
        np.testing.assert_allclose(batched[2], tactile_encode(self.frames[2], self.params).data)

    def test_matches_direct_loop_convolution(self):
        frames = np.random.default_rng(11).uniform(-1.0, 1.0, size=(100, 3, 4, 4))
        arrays = {name: p.data for name, p in self.params.items()}
        expected = np.stack([_direct_tactile_features(frame, arrays) for frame in frames])
        np.testing.assert_allclose(tactile_encode(frames, self.params).data, expected, rtol=0.0, atol=1e-10)

    def test_wrong_frame_shape(self):
        with self.assertRaises(DimensionError) as ctx:
            tactile_encode(np.zeros((3, 5, 5)), self.params)
        self.assertEqual(ctx.exception.op, "tactile_encode.input")


class VisualEncoderTest(SimpleTestCase):
    def test_embedding_passthrough_projects_to_feature_dim(self):
        spec = VisualEncoderSpec(embed_dim=8)
        params = _params(visual_manifest(spec))
        self.assertEqual(visual_encode(np.ones(8), spec, params).shape, (FEATURE_DIM,))
        self.assertEqual(visual_encode(np.ones((4, 8)), spec, params).shape, (4, FEATURE_DIM))

    def test_embedding_size_mismatch(self):
        spec = VisualEncoderSpec(embed_dim=8)
        with self.assertRaises(InputValidationError):
            visual_encode(np.ones(7), spec, _params(visual_manifest(spec)))

    def test_small_cnn_on_images(self):
        spec = VisualEncoderSpec(mode="small_cnn")
        params = _params(visual_manifest(spec))
        self.assertEqual(visual_encode(np.zeros((2, 3, 32, 32)), spec, params).shape, (2, FEATURE_DIM))

    def test_frozen_backbone_keeps_projection_trainable(self):
        manifest = visual_manifest(VisualEncoderSpec(mode="small_cnn"), frozen=True)
        trainable = {p.name: p.trainable for p in manifest}
        self.assertFalse(trainable["visual.encoder.conv1.weight"])
        self.assertTrue(trainable["visual.encoder.proj.weight"])

    def test_unknown_mode(self):
        with self.assertRaises(ConfigError):
            VisualEncoderSpec(mode="resnet")

    def test_uint8_images_scaled_to_unit_range(self):
        image = np.full((3, 32, 32), 255, dtype=np.uint8)
        np.testing.assert_allclose(normalize_image(image), 1.0)


class EncodeSequenceTest(SimpleTestCase):
    def setUp(self):
        self.encoder = TactileEncoder(_params(tactile_manifest()))
        self.frames = np.random.default_rng(4).uniform(size=(6, 3, 4, 4))

    def test_column_t_encodes_frame_t(self):
        features = encode_sequence(self.frames, self.encoder).data
        self.assertEqual(features.shape, (FEATURE_DIM, 6))
        np.testing.assert_allclose(features[:, 4], self.encoder(self.frames[4]).data)

    def test_batched_sequences(self):
        batch = np.stack([self.frames, self.frames[::-1]])
        features = encode_sequence(batch, self.encoder).data
        self.assertEqual(features.shape, (2, FEATURE_DIM, 6))
        np.testing.assert_allclose(features[1, :, 0], features[0, :, 5])

    def test_bad_frame_in_list_is_named(self):
        frames = [self.frames[0], np.zeros((3, 4)), self.frames[2]]
        with self.assertRaises(DimensionError) as ctx:
            encode_sequence(frames, self.encoder)
        self.assertIn("frame=1", str(ctx.exception))

    def test_visual_sequence(self):
        spec = VisualEncoderSpec(embed_dim=8)
        encoder = VisualEncoder(spec, _params(visual_manifest(spec)))
        self.assertEqual(encode_sequence(np.ones((13, 8)), encoder).shape, (FEATURE_DIM, 13))
