# Tests for the attention network: parameter layout, forward shapes, gates and fusion.

import unittest

import numpy as np
from numpy.testing import assert_allclose, assert_array_equal

from affectdan.diffcore import CHECK_DTYPE, Mode, Tape, Tensor, default_dtype, finite_diff_check
from affectdan.errors import ConfigError, DimensionError, GeometryError
from affectdan.model import (DanModel, HeadOutput, ModelConfig, Task, attention_fusion, backbone_forward,
                             channel_attention_unit, count_parameters, expected_parameter_count,
                             force_attention_gates, init_params, spatial_attention_unit)

TINY = {"input_size": 8, "backbone_widths": [4], "num_heads": 2, "blocks_per_stage": 1}


def tiny_config(**overrides) -> ModelConfig:
    return ModelConfig.from_dict({**TINY, **overrides})


def images(n: int, size: int = 8, seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).uniform(0, 1, size=(n, 3, size, size)).astype(np.float32)


class TestModelConfig(unittest.TestCase):

    def test_default_parameter_count(self):
        config = ModelConfig()
        self.assertEqual(expected_parameter_count(config), 200_876)
        self.assertEqual(count_parameters(init_params(config)), 200_876)

    def test_closed_form_matches_materialized_for_small_configs(self):
        for overrides in ({}, {"hidden_dim": 7}, {"task": "va"}, {"backbone_widths": [4, 8], "input_size": 16}):
            config = tiny_config(**overrides)
            self.assertEqual(count_parameters(init_params(config)), expected_parameter_count(config))

    def test_input_size_must_divide_by_the_downsampling(self):
        with self.assertRaises(ConfigError):
            tiny_config(input_size=6)

    def test_unknown_key_rejected(self):
        with self.assertRaises(ConfigError):
            ModelConfig.from_dict({"heads": 3})

    def test_unknown_task_rejected(self):
        with self.assertRaises(ConfigError):
            tiny_config(task="au")

    def test_heads_start_from_distinct_weights(self):
        params = init_params(tiny_config())
        a = params["head0.spatial.reduce.weight"].data
        b = params["head1.spatial.reduce.weight"].data
        self.assertFalse(np.array_equal(a, b))

    def test_same_seed_same_weights(self):
        a, b = init_params(tiny_config(seed=5)), init_params(tiny_config(seed=5))
        for name in a:
            assert_array_equal(a[name].data, b[name].data)


class TestForward(unittest.TestCase):

    def test_expression_output_shapes(self):
        config = tiny_config()
        out = DanModel(config).forward(images(3), Mode.TRAIN)
        self.assertIs(out.task, Task.EXPR)
        self.assertEqual(out.probs.shape, (3, 8))
        self.assertIsNone(out.va)
        self.assertEqual(out.fused_features.shape, (3, 4))
        self.assertEqual(out.backbone_features.shape, (3, 4))
        self.assertEqual(len(out.head_outputs), 2)
        self.assertEqual(out.head_outputs[0].spatial_map.shape, (3, 1, 4, 4))
        self.assertEqual(out.head_outputs[0].channel_gate.shape, (3, 4))
        assert_allclose(out.probs.data.sum(axis=1), 1.0, rtol=1e-5)

    def test_valence_arousal_stays_inside_open_interval(self):
        model = DanModel(tiny_config(task="va"))
        out = model.forward(images(4) * 50.0, Mode.TRAIN)
        self.assertEqual(out.va.shape, (4, 2))
        self.assertIs(out.prediction, out.va)
        self.assertTrue(np.all(np.abs(out.va.data) < 1.0))

    def test_attention_values_are_gates(self):
        out = DanModel(tiny_config()).forward(images(2))
        for head in out.head_outputs:
            for gate in (head.spatial_map.data, head.channel_gate.data):
                self.assertTrue(np.all((gate > 0.0) & (gate < 1.0)))

    def test_eval_mode_handles_a_single_image(self):
        out = DanModel(tiny_config()).forward(images(1), Mode.EVAL)
        self.assertEqual(out.probs.shape, (1, 8))

    def test_eval_forward_is_deterministic_and_leaves_statistics(self):
        model = DanModel(tiny_config())
        before = model.running["task.bn"].copy()
        a = model.forward(images(2)).probs.data
        b = model.forward(images(2)).probs.data
        assert_array_equal(a, b)
        assert_array_equal(model.running["task.bn"].mean, before.mean)

    def test_wrong_image_size(self):
        with self.assertRaises(GeometryError):
            DanModel(tiny_config()).forward(images(2, size=16))

    def test_wrong_rank(self):
        with self.assertRaises(DimensionError):
            DanModel(tiny_config()).forward(np.zeros((3, 8, 8), dtype=np.float32))

    def test_clone_is_independent(self):
        model = DanModel(tiny_config())
        copy = model.clone()
        copy.params["task.fc2.bias"].data[...] = 3.0
        self.assertFalse(np.any(model.params["task.fc2.bias"].data == 3.0))


class TestAttentionGates(unittest.TestCase):

    def test_open_gates_pass_the_pooled_backbone_features(self):
        model = DanModel(tiny_config())
        force_attention_gates(model.params, model.config, 40.0)
        out = model.forward(images(2))
        for features in out.head_features:
            assert_allclose(features.data, out.backbone_features.data, rtol=1e-5, atol=1e-6)

    def test_closed_gates_silence_the_heads(self):
        model = DanModel(tiny_config())
        force_attention_gates(model.params, model.config, -40.0)
        out = model.forward(images(2))
        for features in out.head_features:
            assert_allclose(features.data, 0.0, atol=1e-6)

    def test_fusion_ignores_head_order(self):
        out = DanModel(tiny_config(num_heads=3)).forward(images(2))
        forward = attention_fusion(out.head_outputs).data
        backward = attention_fusion(list(reversed(out.head_outputs))).data
        assert_allclose(forward, backward, rtol=1e-6)

    def test_fusion_of_identical_heads_is_that_head(self):
        out = DanModel(tiny_config()).forward(images(2))
        head = out.head_outputs[0]
        assert_allclose(attention_fusion([head, head]).data, head.features.data, rtol=1e-6)

    def test_fusion_needs_a_head(self):
        with self.assertRaises(ConfigError):
            attention_fusion([])


class TestGradients(unittest.TestCase):

    def test_every_parameter_receives_a_gradient(self):
        model = DanModel(tiny_config())
        with Tape() as tape:
            loss = model.forward(images(3), Mode.TRAIN).probs.log().mean() * -1.0
        tape.backward(loss)
        missing = [name for name, p in model.parameters() if p.grad is None]
        self.assertEqual(missing, [])
        model.zero_grad()
        self.assertTrue(all(p.grad is None for _, p in model.parameters()))


class TestComponentGradients(unittest.TestCase):
    """Central-difference checks of each network stage at 64-bit, four heads."""

    def setUp(self):
        self.config = tiny_config(backbone_widths=[8], num_heads=4)
        self.params = init_params(self.config, dtype=CHECK_DTYPE)
        self.rng = np.random.default_rng(7)

    def projected(self, fn, shape):
        weights = Tensor(self.rng.normal(size=shape), dtype=CHECK_DTYPE)
        return lambda x: (fn(x) * weights).sum()

    def assert_gradient(self, f, x: np.ndarray):
        with default_dtype(CHECK_DTYPE):
            report = finite_diff_check(f, Tensor(x, dtype=CHECK_DTYPE))
        self.assertTrue(report.passed, f"max relative error {report.max_rel_err:.2e}")

    def feature_map(self) -> np.ndarray:
        return self.rng.normal(size=(2, self.config.feature_dim, 4, 4))

    def test_backbone(self):
        f = self.projected(lambda x: backbone_forward(x, self.params, self.config)[1], (2, 8))
        self.assert_gradient(f, self.rng.uniform(-1, 1, size=(2, 3, 8, 8)))

    def test_spatial_attention_unit(self):
        f = self.projected(lambda x: spatial_attention_unit(x, self.params, "head1"), (2, 1, 4, 4))
        self.assert_gradient(f, self.feature_map())

    def test_channel_attention_unit(self):
        f = self.projected(lambda x: channel_attention_unit(x, self.params, "head2"), (2, 8))
        self.assert_gradient(f, self.feature_map())

    def test_attention_fusion_of_four_heads(self):
        def fuse(x):
            return attention_fusion([HeadOutput(x[h], None, None) for h in range(4)])
        f = self.projected(fuse, (2, 8))
        self.assert_gradient(f, self.rng.normal(size=(4, 2, 8)))


if __name__ == "__main__":
    unittest.main()
