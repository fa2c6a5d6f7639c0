"""
Generative Experience Replay
============================

Draws labeled latent points from the consolidated mixture and decodes them
into pseudo-inputs that stand in for the data of past tasks.

Example usage:
--------------
    from ecla_learner.replay import generate

    pseudo = generate(gmm, model, n_er=1000, rng=rng)
    pseudo.x_er, pseudo.y_er, pseudo.z_er

Dependencies:
-------------
- numpy

License:
--------
MIT License
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from .exceptions import DimensionError, ValidationError
from .gmm import GmmModel
from .model import ConceptModel
from .swd import ProjectionSet, sliced_wd


@dataclass(frozen=True, eq=False)
class PseudoDataset:
    """Decoded pseudo-inputs, their labels and the latents they came from."""

    x_er: np.ndarray
    y_er: np.ndarray
    z_er: np.ndarray

    def __post_init__(self):
        rows = {self.x_er.shape[0], self.y_er.shape[0], self.z_er.shape[0]}
        if len(rows) != 1:
            raise DimensionError(
                f"row counts disagree: x_er {self.x_er.shape}, y_er {self.y_er.shape}, "
                f"z_er {self.z_er.shape}"
            )

    def __len__(self) -> int:
        return self.y_er.shape[0]

    def as_tuple(self):
        return self.x_er, self.y_er, self.z_er

    def subset(self, rows) -> "PseudoDataset":
        return PseudoDataset(self.x_er[rows], self.y_er[rows], self.z_er[rows])


def balance_counts(n_er: int, k: int) -> List[int]:
    """
    Class-balanced allocation of ``n_er`` samples over ``k`` classes.

    Every class gets ``n_er // k``; the remainder goes one each to the lowest
    class indices.
    """
    if k < 1 or n_er < k:
        raise ValidationError(f"need n_er >= k >= 1, got n_er={n_er}, k={k}")
    base, remainder = divmod(n_er, k)
    return [base + (1 if index < remainder else 0) for index in range(k)]


def generate(
    gmm: GmmModel,
    model: ConceptModel,
    n_er: int,
    rng: np.random.Generator,
    stratified: bool = True,
) -> PseudoDataset:
    """
    Samples ``n_er`` labeled latents from ``gmm`` and decodes them.

    :param stratified: Class-balanced counts (:func:`balance_counts`) when
        True, weight-proportional component choice otherwise.
    :raises DimensionError: If the mixture and model embedding dims differ.
    """
    if gmm.dim != model.embedding_dim:
        raise DimensionError(
            f"mixture dim {gmm.dim} != model embedding dim {model.embedding_dim}"
        )
    counts = balance_counts(n_er, gmm.num_components) if stratified else None
    z_er, y_er = gmm.sample(n_er, rng, counts=counts)
    return PseudoDataset(model.decode(z_er), y_er, z_er)


def self_classification_accuracy(model: ConceptModel, pseudo: PseudoDataset) -> float:
    """Accuracy of the model's own classifier on its pseudo-inputs."""
    if len(pseudo) == 0:
        return 0.0
    return float(np.mean(model.predict(pseudo.x_er) == pseudo.y_er))


def reencoding_distance(
    model: ConceptModel, pseudo: PseudoDataset, projections: ProjectionSet
) -> float:
    """Sliced distance between ``encode(x_er)`` and the latents ``z_er``."""
    return sliced_wd(model.encode(pseudo.x_er), pseudo.z_er, projections)


def self_distance_baseline(
    gmm: GmmModel, n: int, projections: ProjectionSet, rng: np.random.Generator
) -> float:
    """Sliced distance between two independent equal-size draws from ``gmm``."""
    first, _ = gmm.sample(n, rng)
    second, _ = gmm.sample(n, rng)
    return sliced_wd(first, second, projections)
