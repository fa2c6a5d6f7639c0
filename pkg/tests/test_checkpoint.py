"""
Test Suite for Checkpoints
==========================

Unit tests for saving and loading concept models and mixtures.

Dependencies:
-------------
- unittest
- tempfile
- numpy

License:
--------
MIT License
"""

import os
import tempfile
import unittest

import numpy as np

from ecla_learner.checkpoint import load_gmm, load_model, save_gmm, save_model
from ecla_learner.exceptions import ValidationError
from ecla_learner.gmm import GmmModel
from ecla_learner.model import Architecture, ConceptModel
from ecla_learner.nn_core import Activation


class TestCheckpoints(unittest.TestCase):
    """Tests for model and mixture checkpoints."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        arch = Architecture(embedding_dim=4, hidden_sizes=(6, 5), hidden_activation=Activation.TANH)
        self.model = ConceptModel.build(9, 3, np.random.default_rng(0), arch)

    def tearDown(self):
        self.tmp.cleanup()

    def path(self, name):
        return os.path.join(self.tmp.name, "checkpoints", name)

    def test_model_parameters_are_restored_exactly(self):
        save_model(self.model, self.path("model.npz"))
        restored = load_model(self.path("model.npz"))
        for original, loaded in zip(self.model.parameters(), restored.parameters()):
            np.testing.assert_array_equal(original, loaded)
        for original, loaded in zip(self.model.stacks(), restored.stacks()):
            self.assertEqual(
                [layer.activation for layer in original.layers],
                [layer.activation for layer in loaded.layers],
            )
        x = np.random.default_rng(1).random((5, 9))
        np.testing.assert_array_equal(self.model.predict(x), restored.predict(x))

    def test_gmm_is_restored_exactly(self):
        gmm = GmmModel([0.25, 0.75], [[0.0, 1.0], [2.0, 3.0]], [[1.0, 2.0], [0.5, 0.5]], [1, 4])
        save_gmm(gmm, self.path("gmm.npz"))
        restored = load_gmm(self.path("gmm.npz"))
        np.testing.assert_array_equal(restored.means, gmm.means)
        np.testing.assert_array_equal(restored.variances, gmm.variances)
        np.testing.assert_array_equal(restored.weights, gmm.weights)
        np.testing.assert_array_equal(restored.class_labels, gmm.class_labels)
        self.assertEqual(restored.var_floor, gmm.var_floor)

    def test_kind_is_checked(self):
        gmm = GmmModel([1.0], [[0.0]], [[1.0]], [0])
        save_gmm(gmm, self.path("gmm.npz"))
        with self.assertRaises(ValidationError):
            load_model(self.path("gmm.npz"))

    def test_schema_version_is_checked(self):
        path = self.path("old.npz")
        os.makedirs(os.path.dirname(path))
        with open(path, "wb") as handle:
            np.savez(handle, kind=np.array("gmm"), schema_version=np.array(99))
        with self.assertRaises(ValidationError) as context:
            load_gmm(path)
        self.assertIn("99", str(context.exception))

    def test_truncated_archive_names_the_path(self):
        path = save_model(self.model, self.path("model.npz"))
        with open(path, "rb") as handle:
            payload = handle.read()
        with open(path, "wb") as handle:
            handle.write(payload[: len(payload) // 2])
        with self.assertRaises(ValidationError) as context:
            load_model(path)
        self.assertIn(path, str(context.exception))

    def test_missing_entries_name_the_path(self):
        path = self.path("partial.npz")
        os.makedirs(os.path.dirname(path))
        with open(path, "wb") as handle:
            np.savez(handle, kind=np.array("gmm"), schema_version=np.array(1),
                     weights=np.array([1.0]))
        with self.assertRaises(ValidationError) as context:
            load_gmm(path)
        self.assertIn(path, str(context.exception))

    def test_foreign_file_names_the_path(self):
        path = self.path("notes.npz")
        os.makedirs(os.path.dirname(path))
        with open(path, "w", encoding="utf-8") as handle:
            handle.write("not an archive\n")
        for loader in (load_model, load_gmm):
            with self.assertRaises(ValidationError) as context:
                loader(path)
            self.assertIn(path, str(context.exception))


if __name__ == "__main__":
    unittest.main()
