"""
Checkpoints
===========

Bit-exact persistence of concept models and mixtures as ``numpy`` ``.npz``
archives. Each archive carries a ``schema_version`` entry; loading refuses
other versions and never unpickles objects.

Example usage:
--------------
    from ecla_learner.checkpoint import save_model, load_model

    save_model(model, "runs/synthetic/checkpoints/task_1_model.npz")
    model = load_model("runs/synthetic/checkpoints/task_1_model.npz")

Dependencies:
-------------
- numpy

License:
--------
MIT License
"""

import os
import zipfile
from contextlib import contextmanager
from typing import Dict, Iterator, Mapping

import numpy as np

from .exceptions import EclaError, ValidationError
from .gmm import GmmModel
from .logger import get_logger
from .model import ConceptModel
from .nn_core import DenseLayer, LayerStack

logger = get_logger(__name__)

CHECKPOINT_SCHEMA_VERSION = 1
STACK_NAMES = ("encoder", "decoder", "classifier")


def _ensure_parent(path: str) -> None:
    parent = os.path.dirname(path)
    if parent and not os.path.exists(parent):
        os.makedirs(parent)


def _check_version(archive, path: str, kind: str) -> None:
    if "kind" not in archive or str(archive["kind"]) != kind:
        raise ValidationError(f"{path} is not a {kind} checkpoint")
    version = int(archive["schema_version"])
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise ValidationError(
            f"{path} has schema_version {version}, expected {CHECKPOINT_SCHEMA_VERSION}"
        )


@contextmanager
def _open_archive(path: str, kind: str) -> Iterator[Mapping[str, np.ndarray]]:
    """Opens a checkpoint archive, turning unreadable or foreign files into ValidationError."""
    try:
        with np.load(path, allow_pickle=False) as archive:
            _check_version(archive, path, kind)
            yield archive
    except EclaError:
        raise
    except (KeyError, ValueError, TypeError, EOFError, zipfile.BadZipFile) as error:
        raise ValidationError(f"{path} is not a readable {kind} checkpoint: {error}") from error


def save_model(model: ConceptModel, path: str) -> str:
    """
    Writes every layer's shape, activation and parameters.

    :returns: The path written.
    """
    arrays: Dict[str, np.ndarray] = {
        "kind": np.array("model"),
        "schema_version": np.array(CHECKPOINT_SCHEMA_VERSION),
        "dims": np.array([model.input_dim, model.embedding_dim, model.num_classes]),
    }
    for name, stack in zip(STACK_NAMES, model.stacks()):
        arrays[f"{name}.count"] = np.array(len(stack.layers))
        for index, layer in enumerate(stack.layers):
            arrays[f"{name}.{index}.weights"] = layer.weights
            arrays[f"{name}.{index}.bias"] = layer.bias
            arrays[f"{name}.{index}.activation"] = np.array(layer.activation.value)
    _ensure_parent(path)
    with open(path, "wb") as handle:
        np.savez(handle, **arrays)
    logger.info("Saved model checkpoint to %s", path)
    return path


def load_model(path: str) -> ConceptModel:
    """
    Restores a model written by :func:`save_model`.

    :raises ValidationError: On a wrong kind or schema version, a truncated
        archive or missing entries.
    """
    with _open_archive(path, "model") as archive:
        stacks = []
        for name in STACK_NAMES:
            layers = [
                DenseLayer(
                    archive[f"{name}.{index}.weights"],
                    archive[f"{name}.{index}.bias"],
                    str(archive[f"{name}.{index}.activation"]),
                )
                for index in range(int(archive[f"{name}.count"]))
            ]
            stacks.append(LayerStack(layers))
        model = ConceptModel(*stacks)
        dims = archive["dims"].tolist()
    if dims != [model.input_dim, model.embedding_dim, model.num_classes]:
        raise ValidationError(f"{path}: recorded dims {dims} do not match its layers")
    return model


def save_gmm(gmm: GmmModel, path: str) -> str:
    """Writes the mixture's weights, means, variances, labels and var_floor."""
    _ensure_parent(path)
    with open(path, "wb") as handle:
        np.savez(
            handle,
            kind=np.array("gmm"),
            schema_version=np.array(CHECKPOINT_SCHEMA_VERSION),
            weights=gmm.weights,
            means=gmm.means,
            variances=gmm.variances,
            class_labels=gmm.class_labels,
            var_floor=np.array(gmm.var_floor),
        )
    logger.info("Saved mixture checkpoint to %s", path)
    return path


def load_gmm(path: str) -> GmmModel:
    """Restores a mixture written by :func:`save_gmm`."""
    with _open_archive(path, "gmm") as archive:
        return GmmModel(
            archive["weights"],
            archive["means"],
            archive["variances"],
            archive["class_labels"],
            float(archive["var_floor"]),
        )
