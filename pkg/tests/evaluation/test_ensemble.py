# Tests for soft voting and ensemble member training.

import tempfile
import unittest
from pathlib import Path

from affectdan.data import DataConfig, SynthSpec, load_manifest, open_image_set, synth_generate
from affectdan.errors import AlignmentError, ConfigError, TaskMismatchError
from affectdan.evaluation import (EnsembleConfig, EnsembleSpec, PredictionRecord, evaluate, normalize_weights,
                                  predict_image_set, soft_vote, train_ensemble)
from affectdan.model import Task, load_checkpoint
from affectdan.training import RunConfig
from tests import SLOW_TESTS


def probs(*head: float) -> tuple[float, ...]:
    return tuple(head) + (0.0,) * (8 - len(head))


class TestSoftVote(unittest.TestCase):

    def setUp(self):
        self.a = [PredictionRecord("x", Task.EXPR, probs=probs(0.6, 0.4)),
                  PredictionRecord("y", Task.EXPR, probs=probs(0.1, 0.0, 0.9))]
        self.b = [PredictionRecord("x", Task.EXPR, probs=probs(0.2, 0.8)),
                  PredictionRecord("y", Task.EXPR, probs=probs(0.3, 0.0, 0.7))]

    def test_equal_weight_average(self):
        voted = soft_vote([self.a, self.b])
        self.assertAlmostEqual(voted[0].probs[0], 0.4)
        self.assertAlmostEqual(voted[0].probs[1], 0.6)
        self.assertEqual(voted[0].label, 1)
        self.assertEqual([r.item_id for r in voted], ["x", "y"])

    def test_single_member_is_identity(self):
        self.assertEqual(soft_vote([self.a]), self.a)

    def test_identical_members_are_identity(self):
        self.assertEqual(soft_vote([self.a, self.a, self.a]), self.a)

    def test_member_order_does_not_matter(self):
        self.assertEqual(soft_vote([self.a, self.b]), soft_vote([self.b, self.a]))

    def test_weights(self):
        voted = soft_vote([self.a, self.b], [3.0, 1.0])
        self.assertAlmostEqual(voted[0].probs[0], 0.5)

    def test_members_are_aligned_by_id(self):
        voted = soft_vote([self.a, list(reversed(self.b))])
        self.assertAlmostEqual(voted[1].probs[2], 0.8)

    def test_missing_item(self):
        with self.assertRaises(AlignmentError) as ctx:
            soft_vote([self.a, self.b[:1]])
        self.assertEqual(ctx.exception.missing_ids, ["y"])

    def test_failed_item(self):
        failed = [self.b[0], PredictionRecord.failed("y", Task.EXPR, "unreadable")]
        with self.assertRaises(AlignmentError):
            soft_vote([self.a, failed])

    def test_mixed_tasks(self):
        va = [PredictionRecord("x", Task.VA, va=(0.0, 0.0)), PredictionRecord("y", Task.VA, va=(0.0, 0.0))]
        with self.assertRaises(TaskMismatchError):
            soft_vote([self.a, va])

    def test_valence_arousal_mean(self):
        a = [PredictionRecord("x", Task.VA, va=(0.9, -0.2))]
        b = [PredictionRecord("x", Task.VA, va=(0.7, 0.4))]
        voted = soft_vote([a, b])
        self.assertAlmostEqual(voted[0].va[0], 0.8)
        self.assertAlmostEqual(voted[0].va[1], 0.1)


class TestWeightsAndConfig(unittest.TestCase):

    def test_normalized_weights(self):
        self.assertEqual(normalize_weights(None, 4), [0.25] * 4)
        self.assertEqual(normalize_weights([1, 3], 2), [0.25, 0.75])

    def test_invalid_weights(self):
        for weights, count in (([1.0], 2), ([-1.0, 2.0], 2), ([0.0, 0.0], 2), ([float("nan")], 1)):
            with self.assertRaises(ConfigError, msg=str(weights)):
                normalize_weights(weights, count)
        with self.assertRaises(ConfigError):
            normalize_weights(None, 0)

    def test_member_seeds_and_policies(self):
        config = EnsembleConfig(members=4, seed_stride=10)
        self.assertEqual([config.member_seed(5, i) for i in range(4)], [5, 15, 25, 35])
        self.assertEqual(config.member_policy(3), {"kind": "none"})

    def test_invalid_policy(self):
        with self.assertRaises(ConfigError):
            EnsembleConfig(policies=[{"kind": "mixup"}])

    def test_spec(self):
        spec = EnsembleSpec.from_dict({"checkpoints": ["a", "b"], "task": "va"})
        self.assertEqual(spec.weights, [0.5, 0.5])
        self.assertIs(spec.task, Task.VA)
        with self.assertRaises(ConfigError):
            EnsembleSpec([])


class TestTrainEnsemble(unittest.TestCase):

    def test_members_get_their_own_seed(self):
        with tempfile.TemporaryDirectory() as tmp:
            synth = synth_generate(SynthSpec(per_class=2, image_size=8, val_fraction=0.5), Path(tmp) / "synth")
            run = RunConfig.from_dict({
                "model": {"input_size": 8, "backbone_widths": [4], "num_heads": 2, "blocks_per_stage": 1},
                "train": {"epochs": 1, "batch_size": 4, "steps_per_epoch": 1, "progress": False},
                "data": {"train_manifest": str(synth.train_path), "val_manifest": str(synth.val_path)},
                "ensemble": {"members": 2, "policies": [{"kind": "none"}, {"kind": "hflip"}], "seed_stride": 7},
            })
            checkpoints = train_ensemble(run, Path(tmp) / "ens")
            self.assertEqual([p.parent.name for p in checkpoints], ["member_0", "member_1"])
            seeds = [load_checkpoint(p).model_config.seed for p in checkpoints]
            self.assertEqual(seeds, [0, 7])

    def test_needs_a_training_manifest(self):
        with self.assertRaises(ConfigError):
            train_ensemble(RunConfig(), "unused")


@unittest.skipUnless(SLOW_TESTS, "set AFFECTDAN_SLOW_TESTS=1 to run ensemble seed groups")
class TestEnsembleAcceptance(unittest.TestCase):

    def test_vote_is_no_worse_than_the_weakest_member_in_most_groups(self):
        held = 0
        with tempfile.TemporaryDirectory() as tmp:
            synth = synth_generate(SynthSpec(per_class=40, image_size=16, seed=3), Path(tmp) / "synth")
            truth = load_manifest(synth.val_path)
            for group in range(10):
                run = RunConfig.from_dict({
                    "model": {"input_size": 16, "backbone_widths": [8, 16], "num_heads": 2, "blocks_per_stage": 1},
                    "train": {"epochs": 2, "batch_size": 16, "seed": 100 * group, "progress": False},
                    "data": {"train_manifest": str(synth.train_path), "val_manifest": str(synth.val_path)},
                    "ensemble": {"members": 3},
                })
                checkpoints = train_ensemble(run, Path(tmp) / f"group_{group}")
                val_set = open_image_set(synth.val_path, DataConfig(), Task.EXPR, 16)
                members = [predict_image_set(load_checkpoint(p).to_model(), val_set) for p in checkpoints]
                worst = min(evaluate(m, truth, Task.EXPR).score for m in members)
                if evaluate(soft_vote(members), truth, Task.EXPR).score >= worst:
                    held += 1
        self.assertGreaterEqual(held, 8)


if __name__ == "__main__":
    unittest.main()
