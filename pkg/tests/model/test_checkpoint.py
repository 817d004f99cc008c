# Tests for the safetensors checkpoint container.

import json
import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_array_equal

from affectdan.diffcore import Mode
from affectdan.errors import CheckpointError, TaskMismatchError
from affectdan.model import (DanModel, ModelConfig, Task, load_checkpoint, read_checkpoint_config,
                             save_checkpoint)

TINY = {"input_size": 8, "backbone_widths": [4], "num_heads": 2, "blocks_per_stage": 1}


class TestCheckpoint(unittest.TestCase):

    def setUp(self):
        self._tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self._tmp.name)
        self.model = DanModel(ModelConfig.from_dict(TINY))
        # move the running statistics away from their initial values
        batch = np.random.default_rng(0).uniform(size=(4, 3, 8, 8)).astype(np.float32)
        self.model.forward(batch, Mode.TRAIN)
        self.batch = batch

    def tearDown(self):
        self._tmp.cleanup()

    def test_reload_reproduces_eval_outputs(self):
        path = save_checkpoint(self.dir / "m.safetensors", self.model, info={"epoch": 3})
        loaded = load_checkpoint(path)
        self.assertIs(loaded.task, Task.EXPR)
        self.assertEqual(loaded.info, {"epoch": 3})
        model = loaded.to_model()
        assert_array_equal(model.forward(self.batch).probs.data, self.model.forward(self.batch).probs.data)
        assert_array_equal(model.running["task.bn"].var, self.model.running["task.bn"].var)

    def test_optimizer_and_centers_round_trip(self):
        buffers = {"task.fc2.bias": {"m": np.ones(8, np.float32), "v": np.full(8, 2.0, np.float32)}}
        centers = {"centers": np.arange(8.0).reshape(2, 4), "seen": np.array([1, 0], dtype=np.int64)}
        path = save_checkpoint(self.dir / "m.safetensors", self.model, optimizer={"family": "adam", "step": 7},
                               optimizer_buffers=buffers, centers=centers)
        loaded = load_checkpoint(path)
        self.assertEqual(loaded.optimizer, {"family": "adam", "step": 7})
        assert_array_equal(loaded.optimizer_buffers["task.fc2.bias"]["v"], buffers["task.fc2.bias"]["v"])
        assert_array_equal(loaded.centers["seen"], [1, 0])

    def test_same_model_same_bytes(self):
        a = save_checkpoint(self.dir / "a.safetensors", self.model, info={"epoch": 1})
        b = save_checkpoint(self.dir / "b.safetensors", self.model, info={"epoch": 1})
        self.assertEqual(a.read_bytes(), b.read_bytes())

    def test_config_is_readable_without_tensors(self):
        path = save_checkpoint(self.dir / "m.safetensors", self.model)
        self.assertEqual(read_checkpoint_config(path).to_dict(), self.model.config.to_dict())

    def test_task_mismatch_is_reported(self):
        path = save_checkpoint(self.dir / "m.safetensors", self.model)
        with self.assertRaises(TaskMismatchError):
            load_checkpoint(path, expected_task="va")

    def test_oversized_header_length(self):
        path = save_checkpoint(self.dir / "m.safetensors", self.model)
        raw = bytearray(path.read_bytes())
        raw[:8] = (len(raw) * 2).to_bytes(8, "little")
        path.write_bytes(bytes(raw))
        with self.assertRaises(CheckpointError) as ctx:
            load_checkpoint(path)
        self.assertEqual(ctx.exception.offset, 0)

    def test_truncated_body(self):
        path = save_checkpoint(self.dir / "m.safetensors", self.model)
        path.write_bytes(path.read_bytes()[:-16])
        with self.assertRaises(CheckpointError):
            load_checkpoint(path)

    def test_short_file(self):
        path = self.dir / "short.safetensors"
        path.write_bytes(b"\x01\x02")
        with self.assertRaises(CheckpointError):
            load_checkpoint(path)

    def test_header_must_be_json(self):
        path = self.dir / "junk.safetensors"
        body = b"not json"
        path.write_bytes(len(body).to_bytes(8, "little") + body)
        with self.assertRaises(CheckpointError):
            load_checkpoint(path)

    def test_unsupported_format_version(self):
        path = save_checkpoint(self.dir / "m.safetensors", self.model)
        raw = path.read_bytes()
        header_len = int.from_bytes(raw[:8], "little")
        index = json.loads(raw[8:8 + header_len])
        meta = json.loads(index["__metadata__"]["affectdan"])
        meta["format_version"] = 99
        index["__metadata__"]["affectdan"] = json.dumps(meta)
        header = json.dumps(index).encode("utf-8")
        path.write_bytes(len(header).to_bytes(8, "little") + header + raw[8 + header_len:])
        with self.assertRaises(CheckpointError):
            load_checkpoint(path)

    def test_missing_file(self):
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.dir / "absent.safetensors")


if __name__ == "__main__":
    unittest.main()
