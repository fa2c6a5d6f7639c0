"""
Test Suite for Experiment Configuration
=======================================

Unit tests for parsing, validating and echoing JSON experiment configs and
for building their task sequences.

Dependencies:
-------------
- unittest
- unittest.mock
- tempfile
- numpy

License:
--------
MIT License
"""

import json
import os
import tempfile
import unittest
from unittest.mock import patch

import numpy as np

from ecla_learner.config import (
    OUTPUT_ROOT_ENV,
    Benchmark,
    build_sequence,
    load_config,
    parse_config,
    to_dict,
    validate_config,
    write_config_echo,
)
from ecla_learner.exceptions import ValidationError
from ecla_learner.tasks import write_idx
from ecla_learner.trainer import Method, ReplayMode


def synthetic_document(**overrides):
    document = {
        "schema_version": 1,
        "benchmark": "synthetic",
        "method": "ecla",
        "num_tasks": 3,
        "labels_per_class": 4,
        "seed": 2,
        "output_dir": "synthetic-run",
        "data": {"synthetic": {"k": 3, "d": 9, "n": 60, "n_test": 30}},
        "model": {"embedding_dim": 4, "hidden_sizes": [16]},
        "train": {
            "epochs_per_task": 1,
            "replay_mode": "per_task",
            "sgd": {"learning_rate": 0.05, "minibatch_size": 16},
            "weights": {"gamma": 1.0, "eta": 0.25, "lambda": 0.75},
        },
    }
    document.update(overrides)
    return document


class TestParseConfig(unittest.TestCase):
    """Tests for parse_config."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.env = patch.dict(os.environ, {OUTPUT_ROOT_ENV: self.tmp.name})
        self.env.start()

    def tearDown(self):
        self.env.stop()
        self.tmp.cleanup()

    def test_sections_are_parsed(self):
        cfg = parse_config(synthetic_document())
        self.assertIs(cfg.benchmark, Benchmark.SYNTHETIC)
        self.assertIs(cfg.method, Method.ECLA)
        self.assertEqual(cfg.model.hidden_sizes, (16,))
        self.assertEqual(cfg.train.sgd.learning_rate, 0.05)
        self.assertEqual(cfg.train.sgd.seed, 2)
        self.assertEqual(cfg.train.weights.lambda_, 0.75)
        self.assertIs(cfg.train.replay_mode, ReplayMode.PER_TASK)
        self.assertEqual(cfg.output_dir, os.path.join(self.tmp.name, "synthetic-run"))

    def test_seed_override(self):
        cfg = parse_config(synthetic_document(), seed=9)
        self.assertEqual(cfg.seed, 9)
        self.assertEqual(cfg.train.seed, 9)
        self.assertEqual(cfg.train.sgd.seed, 9)

    def test_default_output_dir_under_root(self):
        document = synthetic_document()
        del document["output_dir"]
        cfg = parse_config(document)
        self.assertEqual(cfg.output_dir, os.path.join(self.tmp.name, "synthetic-ecla-seed2"))

    def test_unknown_keys_are_named(self):
        document = synthetic_document()
        document["train"]["learning_rate"] = 0.1
        with self.assertRaises(ValidationError) as context:
            parse_config(document)
        self.assertIn("learning_rate", str(context.exception))

    def test_schema_version_required(self):
        with self.assertRaises(ValidationError):
            parse_config(synthetic_document(schema_version=2))

    def test_invalid_values(self):
        with self.assertRaises(ValidationError):
            parse_config(synthetic_document(method="sgd"))
        with self.assertRaises(ValidationError):
            parse_config(synthetic_document(labels_per_class=0))
        document = synthetic_document()
        document["train"]["sgd"]["momentum"] = 1.5
        with self.assertRaises(ValidationError):
            parse_config(document)

    def test_non_integer_counts_are_validation_errors(self):
        for key, value in (("seed", "abc"), ("num_tasks", None), ("num_tasks", 2.5),
                           ("labels_per_class", "5"), ("seed", True)):
            with self.subTest(key=key, value=value):
                with self.assertRaises(ValidationError) as context:
                    parse_config(synthetic_document(**{key: value}))
                self.assertIn(key, str(context.exception))

    def test_non_integer_training_counts_are_validation_errors(self):
        cases = (
            ("train", "epochs_per_task", 2.5),
            ("train", "n_er", "10"),
            ("train", "eval_every", False),
            ("sgd", "minibatch_size", 16.0),
        )
        for section, key, value in cases:
            with self.subTest(key=key, value=value):
                document = synthetic_document()
                target = document["train"] if section == "train" else document["train"]["sgd"]
                target[key] = value
                with self.assertRaises(ValidationError) as context:
                    parse_config(document)
                self.assertIn(key, str(context.exception))

    def test_first_task_epochs_and_zero_replay(self):
        document = synthetic_document()
        document["train"].update(first_task_epochs=40, n_er=0)
        cfg = parse_config(document)
        self.assertEqual(cfg.train.first_task_epochs, 40)
        self.assertEqual(cfg.train.n_er, 0)
        self.assertEqual(parse_config(to_dict(cfg)), cfg)

    def test_cross_domain_needs_a_domain_per_task(self):
        with self.assertRaises(ValidationError):
            parse_config(synthetic_document(benchmark="cross_domain"))

    def test_to_dict_parses_back(self):
        cfg = parse_config(synthetic_document())
        self.assertEqual(parse_config(to_dict(cfg)), cfg)

    def test_config_echo_is_sorted_json(self):
        cfg = parse_config(synthetic_document())
        path = os.path.join(self.tmp.name, "config.json")
        write_config_echo(cfg, path)
        with open(path, "r", encoding="utf-8") as file:
            text = file.read()
        echo = json.loads(text)
        self.assertEqual(text, json.dumps(echo, sort_keys=True, indent=4))
        self.assertEqual(echo["train"]["weights"]["lambda"], 0.75)


class TestLoadAndValidate(unittest.TestCase):
    """Tests for load_config, validate_config and build_sequence."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.env = patch.dict(os.environ, {OUTPUT_ROOT_ENV: self.tmp.name})
        self.env.start()

    def tearDown(self):
        self.env.stop()
        self.tmp.cleanup()

    def write(self, document, name="config.json"):
        path = os.path.join(self.tmp.name, name)
        with open(path, "w", encoding="utf-8") as file:
            json.dump(document, file)
        return path

    def idx_domain(self, prefix, side=4, n=40, k=4):
        rng = np.random.default_rng(len(prefix))
        paths = {
            key: os.path.join(self.tmp.name, f"{prefix}-{key}.idx")
            for key in ("train_images", "train_labels", "test_images", "test_labels")
        }
        write_idx(rng.random((n, side * side)), np.arange(n) % k,
                  paths["train_images"], paths["train_labels"])
        write_idx(rng.random((n // 2, side * side)), np.arange(n // 2) % k,
                  paths["test_images"], paths["test_labels"])
        return dict(paths, name=prefix)

    def test_missing_file(self):
        with self.assertRaises(ValidationError):
            load_config(os.path.join(self.tmp.name, "absent.json"))

    def test_malformed_json(self):
        path = os.path.join(self.tmp.name, "broken.json")
        with open(path, "w", encoding="utf-8") as file:
            file.write("{not json")
        with self.assertRaises(ValidationError):
            load_config(path)

    def test_missing_dataset_path_is_named(self):
        domain = self.idx_domain("mnist")
        domain["train_images"] = os.path.join(self.tmp.name, "missing-images.idx")
        cfg = load_config(self.write(synthetic_document(
            benchmark="permuted", data={"domains": [domain]}
        )))
        with self.assertRaises(ValidationError) as context:
            validate_config(cfg)
        self.assertIn("missing-images.idx", str(context.exception))

    def test_validate_creates_output_dir(self):
        cfg = load_config(self.write(synthetic_document()))
        validate_config(cfg)
        self.assertTrue(os.path.isdir(cfg.output_dir))

    def test_synthetic_sequence(self):
        sequence = build_sequence(load_config(self.write(synthetic_document())))
        self.assertEqual(len(sequence), 3)
        self.assertEqual(sequence.input_dim, 9)
        self.assertTrue(sequence[0].is_fully_labeled)
        self.assertEqual(sequence[1].labeled_idx.size, 12)

    def test_permuted_sequence_from_idx(self):
        document = synthetic_document(
            benchmark="permuted",
            data={"domains": [self.idx_domain("mnist")], "train_subset": 20, "resize_side": 2},
            labels_per_class=2,
        )
        sequence = build_sequence(load_config(self.write(document)))
        self.assertEqual(len(sequence), 3)
        self.assertEqual(sequence.input_dim, 4)
        self.assertEqual(sequence[0].num_train, 20)

    def test_cross_domain_sequence_from_idx(self):
        document = synthetic_document(
            benchmark="cross_domain",
            num_tasks=2,
            data={"domains": [self.idx_domain("mnist", side=4), self.idx_domain("usps", side=2)]},
            labels_per_class=None,
        )
        sequence = build_sequence(load_config(self.write(document)))
        self.assertEqual(sequence.input_dim, 4)
        self.assertEqual(sequence[1].name, "usps")


if __name__ == "__main__":
    unittest.main()
