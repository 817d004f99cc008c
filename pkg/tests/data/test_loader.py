# Tests for the synthetic corpus and the image-set loader.

import shutil
import tempfile
import unittest
from pathlib import Path

import numpy as np
from numpy.testing import assert_array_equal

from affectdan.data import (AnnotationRecord, DataConfig, Source, SynthSpec, load_manifest, open_image_set,
                            save_manifest, stratified_split, synth_generate)
from affectdan.errors import ConfigError, EmptyDatasetError, ImageIOError
from affectdan.model import Task


class SynthCorpusTestCase(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        cls._tmp = tempfile.TemporaryDirectory()
        cls.dir = Path(cls._tmp.name)
        cls.spec = SynthSpec(per_class=3, image_size=8, seed=4, val_fraction=1 / 3)
        cls.result = synth_generate(cls.spec, cls.dir / "synth")

    @classmethod
    def tearDownClass(cls):
        cls._tmp.cleanup()


class TestSynth(SynthCorpusTestCase):

    def test_layout_and_split(self):
        self.assertEqual(len(self.result.records), 24)
        self.assertEqual(len(self.result.val), 8)
        self.assertEqual(len(self.result.train), 16)
        self.assertEqual(load_manifest(self.result.manifest_path), self.result.records)
        self.assertEqual(load_manifest(self.result.val_path), self.result.val)
        for r in self.result.records:
            self.assertTrue((self.result.out_dir / r.path).is_file())
            self.assertEqual(r.source, Source.SYNTH)
            self.assertTrue(r.usable_for(Task.EXPR) and r.usable_for(Task.VA))

    def test_same_seed_same_bytes(self):
        again = synth_generate(self.spec, self.dir / "again")
        for name in ("manifest.csv", "SYNTH/c5_00002.ppm"):
            self.assertEqual((self.result.out_dir / name).read_bytes(), (again.out_dir / name).read_bytes())

    def test_classes_look_different(self):
        data = open_image_set(self.result.manifest_path, DataConfig(), Task.EXPR, 8)
        images, labels = data.batch(range(len(data)))
        means = np.stack([images[labels == c].mean(axis=0) for c in range(8)])
        self.assertEqual(len({m.tobytes() for m in means}), 8)

    def test_invalid_spec(self):
        with self.assertRaises(ConfigError):
            SynthSpec(per_class=0)
        with self.assertRaises(ConfigError):
            SynthSpec(val_fraction=1.0)

    def test_split_is_stratified(self):
        records = [AnnotationRecord(f"{i}.ppm", Source.SYNTH, expr=i % 2) for i in range(20)]
        train, val = stratified_split(records, 0.2, seed=0)
        self.assertEqual(sorted(r.expr for r in val), [0, 0, 1, 1])
        self.assertEqual(len(train), 16)


class TestOpenImageSet(SynthCorpusTestCase):

    def test_batch_shapes_and_targets(self):
        data = open_image_set(self.result.train_path, DataConfig(), Task.VA, 8)
        images, targets = data.batch([0, 3])
        self.assertEqual(images.shape, (2, 3, 8, 8))
        self.assertEqual(images.dtype, np.float32)
        self.assertEqual(targets.shape, (2, 2))
        self.assertEqual(tuple(targets[1]), data.records[3].va)

    def test_resizes_to_the_model_input(self):
        data = open_image_set(self.result.val_path, DataConfig(), Task.EXPR, 16)
        images, labels = data.batch([0])
        self.assertEqual(images.shape, (1, 3, 16, 16))
        self.assertEqual(labels.dtype, np.int64)

    def test_sequential_covers_all_records_in_order(self):
        data = open_image_set(self.result.manifest_path, DataConfig(), Task.EXPR, 8)
        seen = [i for indices, _, _ in data.sequential(5) for i in indices]
        self.assertEqual(seen, list(range(24)))

    def test_worker_threads_give_the_same_batch(self):
        serial = open_image_set(self.result.manifest_path, DataConfig(), Task.EXPR, 8)
        threaded = open_image_set(self.result.manifest_path, DataConfig(workers=3), Task.EXPR, 8)
        assert_array_equal(serial.batch(range(10))[0], threaded.batch(range(10))[0])

    def test_online_augmentation_is_keyed_by_draw(self):
        config = DataConfig(augment={"kind": "random_crop", "crop_ratio": 0.5})
        data = open_image_set(self.result.train_path, config, Task.EXPR, 8, seed=2, augment_train=True)
        assert_array_equal(data.item(0, draw=11).pixels, data.item(0, draw=11).pixels)
        plain = open_image_set(self.result.train_path, config, Task.EXPR, 8, seed=2)
        self.assertIsNone(plain.policy)

    def test_offline_augmentation_adds_records(self):
        config = DataConfig(augment={"kind": "hflip", "flip_probability": 1.0}, augment_mode="offline")
        with tempfile.TemporaryDirectory() as tmp:
            data = open_image_set(self.result.train_path, config, Task.EXPR, 8, augment_train=True,
                                  offline_dir=Path(tmp) / "aug")
            self.assertEqual(len(data), 32)
            self.assertIsNone(data.policy)
            original = data.item(0).pixels
            assert_array_equal(data.item(16).pixels, original[:, ::-1])

    def test_offline_needs_a_directory(self):
        config = DataConfig(augment={"kind": "hflip"}, augment_mode="offline")
        with self.assertRaises(ConfigError):
            open_image_set(self.result.train_path, config, Task.EXPR, 8, augment_train=True)

    def test_no_usable_records(self):
        path = self.dir / "expr_only.csv"
        save_manifest([AnnotationRecord("SYNTH/c0_00000.ppm", Source.SYNTH, expr=0)], path)
        with self.assertRaises(EmptyDatasetError):
            open_image_set(path, DataConfig(image_root=str(self.result.out_dir)), Task.VA, 8)

    def test_image_root_override(self):
        path = self.dir / "elsewhere" / "m.csv"
        save_manifest(self.result.records[:2], path)
        data = open_image_set(path, DataConfig(image_root=str(self.result.out_dir)), Task.EXPR, 8)
        self.assertEqual(data.batch([1])[0].shape, (1, 3, 8, 8))
        broken = open_image_set(path, DataConfig(), Task.EXPR, 8)
        with self.assertRaises(ImageIOError):
            broken.batch([0])

    def test_config_validation(self):
        with self.assertRaises(ConfigError):
            DataConfig(augment_mode="lazy")
        with self.assertRaises(ConfigError):
            DataConfig.from_dict({"shuffle": True})

    def test_several_manifests_are_merged_per_task(self):
        external = self.dir / "external"
        (external / "AIHUB").mkdir(parents=True, exist_ok=True)
        for k, record in enumerate(self.result.train[:2]):
            shutil.copy(self.result.out_dir / record.path, external / "AIHUB" / f"f{k}.ppm")
        ext_manifest = external / "aihub.csv"
        save_manifest([AnnotationRecord(f"AIHUB/f{k}.ppm", Source.AIHUB, expr=3) for k in range(2)], ext_manifest)
        manifests = [str(self.result.train_path), str(ext_manifest)]

        with self.assertLogs("affectdan.data.loader", "INFO") as logs:
            data = open_image_set(manifests, DataConfig(), Task.EXPR, 8)
        self.assertEqual(len(data), 18)
        self.assertTrue(any("retained 2 AIHUB" in line for line in logs.output))
        self.assertTrue(Path(data.records[-1].path).is_absolute())
        assert_array_equal(data.item(17).pixels, data.item(1).pixels)

        va = open_image_set(manifests, DataConfig(), Task.VA, 8)
        self.assertEqual(len(va), 16)
        self.assertNotIn(Source.AIHUB, {r.source for r in va.records})

    def test_manifest_list_in_config(self):
        config = DataConfig.from_dict({"train_manifest": ["a.csv", "b.csv"]})
        self.assertEqual(config.train_manifest, ["a.csv", "b.csv"])
        with self.assertRaises(ConfigError):
            DataConfig(train_manifest=[])
        with self.assertRaises(ConfigError):
            open_image_set([], DataConfig(), Task.EXPR, 8)

    def test_source_cache_is_bounded(self):
        data = open_image_set(self.result.manifest_path, DataConfig(cache_size=3), Task.EXPR, 8)
        for i in range(10):
            data.item(i)
        data.item(9)
        info = data.cache_info()
        self.assertEqual(info.currsize, 3)
        self.assertEqual(info.maxsize, 3)
        self.assertEqual(info.hits, 1)
        uncached = open_image_set(self.result.manifest_path, DataConfig(cache_size=0), Task.EXPR, 8)
        self.assertIsNone(uncached.cache_info())
        assert_array_equal(uncached.item(4).pixels, data.item(4).pixels)
        with self.assertRaises(ConfigError):
            DataConfig(cache_size=-1)


if __name__ == "__main__":
    unittest.main()
