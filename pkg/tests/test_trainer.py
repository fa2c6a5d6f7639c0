"""
Test Suite for the Continual Trainer
====================================

Unit tests for the training settings, the accuracy matrix and forgetting
metrics, and small end-to-end runs of every method on synthetic tasks.
Acceptance-scale comparisons are marked ``slow``; the permuted-digit runs
also need ``ECLA_MNIST_DIR``.

Dependencies:
-------------
- unittest
- unittest.mock
- tempfile
- numpy
- pytest

License:
--------
MIT License
"""

import os
import tempfile
import unittest
from dataclasses import replace
from unittest.mock import patch

import numpy as np
import pytest

from ecla_learner.exceptions import ValidationError
from ecla_learner.gmm import GmmModel
from ecla_learner.model import Architecture, ConceptModel, LossWeights
from ecla_learner.nn_core import SgdConfig
from ecla_learner.replay import generate, self_classification_accuracy
from ecla_learner.swd import ProjectionSet
from ecla_learner.tasks import (
    TaskDataset,
    TaskSequence,
    apply_few_shot,
    build_permuted_sequence,
    load_idx,
    make_synthetic_sequence,
    resize_images,
    subset_task,
)
from ecla_learner.trainer import (
    AccuracyMatrix,
    ContinualTrainer,
    Method,
    ReplayMode,
    TrainConfig,
    concept_alignment,
    evaluate,
    forgetting_metrics,
    run_baseline_bp,
    run_baseline_cleer,
    run_baseline_fr,
    run_ecla,
    train_first_task,
    train_subsequent_task,
)

SMALL = Architecture(embedding_dim=4, hidden_sizes=(16,))


def small_sequence(num_tasks=3, shift=0.5, seed=0, labels_per_class=4):
    sequence = make_synthetic_sequence(3, 8, 60, num_tasks, shift, seed, n_test=30)
    return apply_few_shot(sequence, labels_per_class, seed)


def small_config(**overrides):
    values = dict(
        epochs_per_task=2,
        sgd=SgdConfig(learning_rate=0.05, momentum=0.9, minibatch_size=16, seed=0),
        weights=LossWeights(),
        num_projections=10,
        eval_every=5,
        seed=0,
    )
    values.update(overrides)
    return TrainConfig(**values)


def small_model(sequence, seed=0):
    return ConceptModel.build(
        sequence.input_dim, sequence.num_classes, np.random.default_rng(seed), SMALL
    )


class TestTrainConfig(unittest.TestCase):
    """Tests for TrainConfig validation."""

    def test_enums_from_strings(self):
        config = TrainConfig(method="fr", replay_mode="per_task")
        self.assertIs(config.method, Method.FR)
        self.assertIs(config.replay_mode, ReplayMode.PER_TASK)

    def test_invalid_values(self):
        with self.assertRaises(ValidationError):
            TrainConfig(num_projections=0)
        with self.assertRaises(ValidationError):
            TrainConfig(eval_every=0)
        with self.assertRaises(ValueError):
            TrainConfig(method="sgd")

    def test_zero_replay_is_allowed(self):
        self.assertEqual(TrainConfig(n_er=0).n_er, 0)
        with self.assertRaises(ValidationError):
            TrainConfig(n_er=-1)

    def test_first_task_epochs(self):
        self.assertIsNone(TrainConfig().first_task_epochs)
        self.assertEqual(TrainConfig(first_task_epochs=0).first_task_epochs, 0)
        with self.assertRaises(ValidationError):
            TrainConfig(first_task_epochs=-1)


class TestAccuracyMatrix(unittest.TestCase):
    """Tests for AccuracyMatrix and forgetting_metrics."""

    def matrix(self):
        matrix = AccuracyMatrix(3)
        matrix.record(1, [0.9])
        matrix.record(2, [0.8, 0.7])
        matrix.record(3, [0.6, 0.75, 0.9])
        return matrix

    def test_upper_triangle_stays_nan(self):
        matrix = self.matrix()
        self.assertTrue(np.isnan(matrix.entries[0, 1]))
        self.assertEqual(matrix.completed, 3)

    def test_forgetting(self):
        """Forgetting of task s is its best earlier accuracy minus its final one."""
        metrics = forgetting_metrics(self.matrix())
        self.assertAlmostEqual(metrics.final_avg, 0.75)
        self.assertAlmostEqual(metrics.avg_forgetting, ((0.9 - 0.6) + (0.75 - 0.75)) / 2)

    def test_single_task_has_no_forgetting(self):
        matrix = AccuracyMatrix(2)
        matrix.record(1, [0.5])
        self.assertEqual(forgetting_metrics(matrix).avg_forgetting, 0.0)

    def test_record_length_is_checked(self):
        with self.assertRaises(ValidationError):
            AccuracyMatrix(2).record(2, [0.5])

    def test_empty_matrix(self):
        with self.assertRaises(ValidationError):
            forgetting_metrics(AccuracyMatrix(2))


class TestTraining(unittest.TestCase):
    """Small end-to-end runs on synthetic tasks."""

    def setUp(self):
        self.sequence = small_sequence()

    def test_first_task_learns_and_fits_mixture(self):
        config = small_config(epochs_per_task=40)
        model, gmm = train_first_task(small_model(self.sequence), self.sequence[0], config)
        self.assertEqual(gmm.num_components, 3)
        self.assertEqual(gmm.dim, 4)
        accuracy = evaluate(model, self.sequence, 1)[0]
        self.assertGreater(accuracy, 0.5)

    def test_subsequent_task_updates_mixture(self):
        config = small_config()
        model, gmm = train_first_task(small_model(self.sequence), self.sequence[0], config)
        model, updated = train_subsequent_task(model, gmm, self.sequence[1], config)
        self.assertIsInstance(updated, GmmModel)
        self.assertFalse(np.array_equal(updated.means, gmm.means))
        np.testing.assert_array_equal(updated.class_labels, [0, 1, 2])

    def test_zero_epochs_leave_the_model_unchanged(self):
        model = small_model(self.sequence)
        before = [p.copy() for p in model.parameters()]
        trainer = ContinualTrainer(small_config(epochs_per_task=0), self.sequence)
        result = trainer.run(model)
        for original, after in zip(before, result.model.parameters()):
            np.testing.assert_array_equal(original, after)
        self.assertEqual(result.matrix.completed, 3)

    def test_ecla_run_records_matrix_curves_and_jumpstart(self):
        result = ContinualTrainer(small_config(), self.sequence).run(small_model(self.sequence))
        matrix = result.matrix
        self.assertEqual(matrix.completed, 3)
        self.assertTrue(np.all(np.isnan(matrix.entries[np.triu_indices(3, k=1)])))
        self.assertEqual(sorted(matrix.jumpstart), [2, 3])
        self.assertTrue(all(0.0 <= point.accuracy <= 1.0 for point in matrix.curves))
        self.assertTrue(all(point.eval_task <= point.learning_task for point in matrix.curves))
        self.assertIsNotNone(result.gmm)
        self.assertTrue(result.loss_history)

    def test_runs_are_deterministic(self):
        first = run_ecla(small_model(self.sequence), self.sequence, small_config())
        second = run_ecla(small_model(self.sequence), self.sequence, small_config())
        np.testing.assert_array_equal(first.entries, second.entries)
        self.assertEqual(first.curves, second.curves)

    def test_per_task_replay_mode(self):
        config = small_config(replay_mode=ReplayMode.PER_TASK, n_er=30)
        matrix = run_ecla(small_model(self.sequence), self.sequence, config)
        self.assertEqual(matrix.completed, 3)

    def test_baselines_complete(self):
        for runner in (run_baseline_bp, run_baseline_fr, run_baseline_cleer):
            matrix = runner(small_model(self.sequence), self.sequence, small_config())
            self.assertEqual(matrix.completed, 3)

    def test_methods_share_first_task(self):
        """Every method reaches the same task-1 accuracy after task 1."""
        rows = [
            runner(small_model(self.sequence), self.sequence, small_config()).entries[0, 0]
            for runner in (run_ecla, run_baseline_bp, run_baseline_fr, run_baseline_cleer)
        ]
        self.assertEqual(len(set(rows)), 1)

    def test_missing_class_fails_before_training(self):
        task = self.sequence[1]
        rows = task.labeled_idx[task.train_y[task.labeled_idx] != 2]
        broken = TaskDataset(
            task.name, task.train_x, task.train_y, task.test_x, task.test_y, 3, labeled_idx=rows
        )
        sequence = type(self.sequence)((self.sequence[0], broken))
        trainer = ContinualTrainer(small_config(), sequence)
        with self.assertRaises(ValidationError):
            trainer.run(small_model(sequence))
        self.assertEqual(trainer.step, 0)

    def test_checkpoints_per_task(self):
        with tempfile.TemporaryDirectory() as tmp:
            config = small_config(epochs_per_task=1, checkpoint_dir=tmp)
            ContinualTrainer(config, small_sequence(num_tasks=2)).run(
                small_model(self.sequence)
            )
            self.assertEqual(
                sorted(os.listdir(tmp)),
                ["task_1_gmm.npz", "task_1_model.npz", "task_2_gmm.npz", "task_2_model.npz"],
            )

    def test_concept_alignment(self):
        model = small_model(self.sequence)
        projections = ProjectionSet.sample(10, 4, 0)
        self.assertEqual(
            concept_alignment(model, self.sequence, 1, projections, np.random.default_rng(0)), 0.0
        )
        value = concept_alignment(model, self.sequence, 3, projections, np.random.default_rng(0))
        self.assertGreater(value, 0.0)

    def test_first_task_epochs_override(self):
        config = small_config(epochs_per_task=1, first_task_epochs=3, eval_every=10**6)
        trainer = ContinualTrainer(config, self.sequence)
        trainer.train_first_task(small_model(self.sequence))
        self.assertEqual(trainer.step, 3 * 4)

    def test_replay_is_decoded_by_the_task_start_model(self):
        config = small_config(epochs_per_task=3)
        trainer = ContinualTrainer(config, self.sequence)
        model, gmm = trainer.train_first_task(small_model(self.sequence))
        start = [p.copy() for p in model.parameters()]
        with patch("ecla_learner.trainer.generate", wraps=generate) as spy:
            trainer.train_subsequent_task(model, gmm, 2)
        self.assertEqual(spy.call_count, 3)
        for call in spy.call_args_list:
            generator = call.args[1]
            self.assertIsNot(generator, model)
            for before, used in zip(start, generator.parameters()):
                np.testing.assert_array_equal(before, used)
        self.assertFalse(
            all(np.array_equal(a, b) for a, b in zip(start, model.parameters()))
        )

    def test_per_task_mode_generates_once(self):
        config = small_config(epochs_per_task=3, replay_mode=ReplayMode.PER_TASK)
        trainer = ContinualTrainer(config, self.sequence)
        model, gmm = trainer.train_first_task(small_model(self.sequence))
        with patch("ecla_learner.trainer.generate", wraps=generate) as spy:
            trainer.train_subsequent_task(model, gmm, 2)
        spy.assert_called_once()

    def test_zero_replay_learns_from_the_labels_alone(self):
        trainer = ContinualTrainer(small_config(n_er=0), self.sequence)
        model, gmm = trainer.train_first_task(small_model(self.sequence))
        with patch("ecla_learner.trainer.generate") as spy, self.assertLogs(
            "ecla_learner.trainer", level="WARNING"
        ):
            _, updated = trainer.train_subsequent_task(model, gmm, 2)
        spy.assert_not_called()
        later = [entry for entry in trainer.loss_history if entry["task"] == 2]
        self.assertTrue(later)
        self.assertTrue(all("marginal_swd" not in entry for entry in later))
        self.assertEqual(updated.num_components, 3)


def acceptance_run(method, seed, num_tasks=4, **overrides):
    """One method on the k=5, d=20 shifted sequence with 5 labels per class."""
    sequence = make_synthetic_sequence(5, 20, 500, 4, 1.5, seed, n_test=500)
    sequence = apply_few_shot(sequence, 5, seed)
    sequence = TaskSequence(sequence.tasks[:num_tasks])
    values = dict(
        method=method,
        first_task_epochs=60,
        epochs_per_task=20,
        sgd=SgdConfig(learning_rate=0.05, momentum=0.9, minibatch_size=64, seed=seed),
        eval_every=50,
        seed=seed,
    )
    values.update(overrides)
    model = ConceptModel.build(
        sequence.input_dim, sequence.num_classes, np.random.default_rng(seed), Architecture()
    )
    return ContinualTrainer(TrainConfig(**values), sequence).run(model).matrix


@pytest.mark.slow
class TestAcceptance(unittest.TestCase):
    """Paired four-task runs of every method over three seeds."""

    SEEDS = (0, 1, 2)

    @classmethod
    def setUpClass(cls):
        cls.matrices = {
            method: [acceptance_run(method, seed) for seed in cls.SEEDS] for method in Method
        }

    def final_task_one(self, method):
        return np.array([matrix.entries[3, 0] for matrix in self.matrices[method]])

    def test_ecla_forgets_far_less_than_bp(self):
        gap = self.final_task_one(Method.ECLA) - self.final_task_one(Method.BP)
        self.assertGreaterEqual(float(gap.mean()), 0.15, gap)

    def test_methods_are_ordered_on_most_seeds(self):
        order = (Method.FR, Method.CLEER, Method.ECLA, Method.BP)
        for upper, lower in zip(order, order[1:]):
            with self.subTest(upper=upper.value, lower=lower.value):
                holds = self.final_task_one(upper) >= self.final_task_one(lower)
                self.assertGreaterEqual(int(holds.sum()), 2, holds)

    def test_ecla_task_one_accuracy_does_not_recover_with_more_tasks(self):
        after_two = np.mean([matrix.entries[1, 0] for matrix in self.matrices[Method.ECLA]])
        after_three = np.mean([matrix.entries[2, 0] for matrix in self.matrices[Method.ECLA]])
        self.assertLessEqual(after_three, after_two + 0.01)

    def test_same_seed_gives_identical_matrices(self):
        again = acceptance_run(Method.ECLA, self.SEEDS[0])
        np.testing.assert_array_equal(again.entries, self.matrices[Method.ECLA][0].entries)


@pytest.mark.slow
class TestWithoutReplay(unittest.TestCase):
    """Turning replay and matching off leaves only the few labels to learn from."""

    def test_zero_replay_forgets_more_than_ecla(self):
        full = acceptance_run(Method.ECLA, 0, num_tasks=2)
        bare = acceptance_run(
            Method.ECLA, 0, num_tasks=2, n_er=0, weights=LossWeights(eta=0.0, lambda_=0.0)
        )
        self.assertEqual(full.entries[0, 0], bare.entries[0, 0])
        full_drop = full.entries[0, 0] - full.entries[1, 0]
        bare_drop = bare.entries[0, 0] - bare.entries[1, 0]
        self.assertGreater(bare_drop, full_drop)


MNIST_DIR = os.environ.get("ECLA_MNIST_DIR")


@pytest.mark.slow
@unittest.skipUnless(MNIST_DIR, "set ECLA_MNIST_DIR to the folder holding the MNIST IDX files")
class TestPermutedDigits(unittest.TestCase):
    """Three permuted tasks on 14x14 digits, 5 labels per class after task 1."""

    @classmethod
    def setUpClass(cls):
        files = [
            os.path.join(MNIST_DIR, name)
            for name in ("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                         "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
        ]
        base = resize_images(subset_task(load_idx(*files, name="mnist"), 10000, 2000, 0), 14)
        cls.sequence = apply_few_shot(build_permuted_sequence(base, 3, 0), 5, 0)
        cls.config = TrainConfig(
            first_task_epochs=10,
            epochs_per_task=10,
            sgd=SgdConfig(learning_rate=0.05, momentum=0.9, minibatch_size=64, seed=0),
            eval_every=200,
        )
        cls.results = {
            method: ContinualTrainer(replace(cls.config, method=method), cls.sequence).run(
                ConceptModel.build(196, 10, np.random.default_rng(0), Architecture())
            )
            for method in (Method.ECLA, Method.BP)
        }

    def test_ecla_keeps_task_one_while_bp_forgets(self):
        ecla = self.results[Method.ECLA].matrix.entries
        bp = self.results[Method.BP].matrix.entries
        self.assertLessEqual(ecla[0, 0] - ecla[2, 0], 0.15)
        self.assertGreater(bp[0, 0] - bp[2, 0], 0.25)

    def test_forgetting_grows_with_tasks(self):
        ecla = self.results[Method.ECLA].matrix.entries
        self.assertLessEqual(ecla[2, 0], ecla[1, 0] + 0.01)

    def test_first_task_replay_is_self_consistent(self):
        model = ConceptModel.build(196, 10, np.random.default_rng(0), Architecture())
        model, gmm = train_first_task(model, self.sequence[0], self.config)
        pseudo = generate(gmm, model, 1000, np.random.default_rng(1))
        self.assertGreater(self_classification_accuracy(model, pseudo), 0.9)


if __name__ == "__main__":
    unittest.main()
