"""
Labeled Gaussian Mixture
========================

Diagonal-covariance Gaussian mixture over the embedding space with one
labeled component per class. It is fitted from labeled embeddings, refined
by EM, updated semi-supervised after each task and sampled to produce
labeled latent points for replay.

Models are immutable: every fit or update returns a new ``GmmModel``.

Example usage:
--------------
    from ecla_learner.gmm import GmmModel

    gmm = GmmModel.fit_labeled(z, y)
    z_er, y_er = gmm.sample(1000, rng)
    gmm = gmm.update_after_task(z_current, y_current, z_er, y_er)

Dependencies:
-------------
- numpy
- scipy

License:
--------
MIT License
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .exceptions import DimensionError, ValidationError
from .logger import get_logger
from .nn_core import as_tensor2

logger = get_logger(__name__)

VAR_FLOOR = 1e-6
UNLABELED = -1
# component mass below this counts as empty during EM
EMPTY_MASS = 1e-10


@dataclass(frozen=True, eq=False)
class GmmModel:
    """
    Mixture of k diagonal Gaussians, component i carrying ``class_labels[i]``.

    :param weights: Mixing weights, shape (k,), summing to one.
    :param means: Component means, shape (k, f).
    :param variances: Diagonal variances, shape (k, f), each >= var_floor.
    :param class_labels: Class index of each component, shape (k,).
    """

    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    class_labels: np.ndarray
    var_floor: float = VAR_FLOOR

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        means = as_tensor2(self.means, "means")
        variances = as_tensor2(self.variances, "variances")
        labels = np.asarray(self.class_labels, dtype=np.int64).reshape(-1)
        k = weights.shape[0]
        if means.shape[0] != k or variances.shape != means.shape or labels.shape[0] != k:
            raise DimensionError(
                f"weights ({k},), means {means.shape}, variances {variances.shape} "
                f"and labels {labels.shape} disagree"
            )
        if k == 0:
            raise ValidationError("a mixture needs at least one component")
        if np.any(weights <= 0.0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ValidationError(f"weights must be positive and sum to 1, got {weights}")
        if np.any(variances < self.var_floor):
            raise ValidationError(f"variances must be >= var_floor {self.var_floor}")
        if np.unique(labels).size != k:
            raise ValidationError(f"component class labels must be distinct, got {labels}")
        for name, value in (
            ("weights", weights),
            ("means", means),
            ("variances", variances),
            ("class_labels", labels),
        ):
            value.setflags(write=False)
            object.__setattr__(self, name, value)

    @property
    def num_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_index(self, labels) -> np.ndarray:
        """Maps class labels to component indices."""
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        lookup = {int(label): index for index, label in enumerate(self.class_labels)}
        unknown = sorted(set(labels.tolist()) - set(lookup))
        if unknown:
            raise ValidationError(f"labels {unknown} have no mixture component")
        return np.array([lookup[int(label)] for label in labels], dtype=np.int64)

    @classmethod
    def fit_labeled(
        cls,
        z,
        y,
        var_floor: float = VAR_FLOOR,
        class_labels: Optional[Sequence[int]] = None,
    ) -> "GmmModel":
        """
        One component per class from labeled embeddings.

        Means and variances are the per-class sample moments (variance clamped
        to ``var_floor``); weights are the class frequencies.

        :param class_labels: Classes to model; defaults to those present in ``y``.
        :raises ValidationError: If a class has fewer than two samples.
        """
        z = as_tensor2(z, "z")
        y = np.asarray(y, dtype=np.int64).reshape(-1)
        if y.shape[0] != z.shape[0]:
            raise DimensionError(f"z {z.shape} and y {y.shape} disagree on rows")
        labels = np.unique(y) if class_labels is None else np.asarray(class_labels)
        resp = (y[:, None] == labels[None, :]).astype(np.float64)
        return cls._from_responsibilities(z, resp, labels, var_floor)

    @classmethod
    def _from_responsibilities(cls, z, resp, labels, var_floor, previous=None):
        mass = resp.sum(axis=0)
        if previous is None:
            short = [int(label) for label, m in zip(labels, mass) if m < 2.0]
            if short:
                raise ValidationError(f"classes {short} have fewer than 2 samples")
        safe_mass = np.maximum(mass, EMPTY_MASS)[:, None]
        means = (resp.T @ z) / safe_mass
        centered = z[:, None, :] - means[None, :, :]
        spread = np.einsum("nk,nkf->kf", resp, centered * centered)
        variances = np.maximum(spread / safe_mass, var_floor)
        weights = mass / mass.sum()
        if previous is not None:
            empty = mass < EMPTY_MASS
            if np.any(empty):
                logger.warning(
                    "EM components %s received no responsibility; keeping previous parameters",
                    labels[empty].tolist(),
                )
                means[empty] = previous.means[empty]
                variances[empty] = previous.variances[empty]
                weights[empty] = previous.weights[empty]
                weights = weights / weights.sum()
        return cls(weights, means, variances, labels, var_floor)

    def component_log_densities(self, z) -> np.ndarray:
        """log(w_i) + log N(z | mu_i, diag(var_i)), shape (n, k)."""
        z = as_tensor2(z, "z")
        if z.shape[1] != self.dim:
            raise DimensionError(f"z {z.shape} does not match mixture dim {self.dim}")
        log_det = np.sum(np.log(self.variances), axis=1)
        diff = z[:, None, :] - self.means[None, :, :]
        mahalanobis = np.sum(diff * diff / self.variances[None, :, :], axis=2)
        log_norm = -0.5 * (self.dim * np.log(2.0 * np.pi) + log_det)
        return np.log(self.weights)[None, :] + log_norm[None, :] - 0.5 * mahalanobis

    def responsibilities(self, z) -> np.ndarray:
        """Posterior component probabilities, shape (n, k)."""
        log_dens = self.component_log_densities(z)
        return np.exp(log_dens - logsumexp(log_dens, axis=1, keepdims=True))

    def log_likelihood(self, z) -> float:
        """Mean log density of ``z`` under the mixture."""
        log_dens = self.component_log_densities(z)
        if log_dens.shape[0] == 0:
            return 0.0
        return float(np.mean(logsumexp(log_dens, axis=1)))

    def em_refine(self, z, iters: int) -> "GmmModel":
        """
        Standard diagonal EM warm-started from this model.

        Components keep their identity (and class label) across iterations. A
        component that receives no responsibility keeps its previous
        parameters and a warning is logged.
        """
        z = as_tensor2(z, "z")
        if z.shape[0] == 0:
            raise ValidationError("em_refine needs at least one sample")
        model = self
        for _ in range(iters):
            resp = model.responsibilities(z)
            model = GmmModel._from_responsibilities(
                z, resp, model.class_labels, model.var_floor, previous=model
            )
        return model

    def update_after_task(
        self, z_current, y_current, z_replay, y_replay, iters: int = 1
    ) -> "GmmModel":
        """
        Refits the mixture on current-task and replay embeddings together.

        Labeled rows (``y != UNLABELED``, all replay rows) are hard-assigned to
        their class component; unlabeled current-task rows get soft EM
        responsibilities. ``iters`` passes are run; one pass is a single E-step
        on the unlabeled rows followed by one fit.

        :raises ValidationError: If a component ends up with less than two
            samples' worth of responsibility.
        """
        z_current = as_tensor2(np.reshape(z_current, (-1, self.dim)), "z_current")
        z_replay = as_tensor2(np.reshape(z_replay, (-1, self.dim)), "z_replay")
        y_current = np.asarray(y_current, dtype=np.int64).reshape(-1)
        y_replay = np.asarray(y_replay, dtype=np.int64).reshape(-1)
        if y_current.shape[0] != z_current.shape[0] or y_replay.shape[0] != z_replay.shape[0]:
            raise DimensionError("label vectors must match their embedding row counts")

        z = np.vstack([z_current, z_replay])
        labels = np.concatenate([y_current, y_replay])
        labeled = labels != UNLABELED
        hard = np.zeros((z.shape[0], self.num_components))
        hard[np.flatnonzero(labeled), self.component_index(labels[labeled])] = 1.0

        model = self
        for _ in range(max(iters, 1)):
            resp = hard.copy()
            if np.any(~labeled):
                resp[~labeled] = model.responsibilities(z[~labeled])
            mass = resp.sum(axis=0)
            if np.any(mass < 2.0):
                short = self.class_labels[mass < 2.0].tolist()
                raise ValidationError(f"classes {short} have fewer than 2 samples")
            model = GmmModel._from_responsibilities(
                z, resp, self.class_labels, self.var_floor, previous=model
            )
        logger.info(
            "Updated mixture on %d current and %d replay embeddings (%d labeled).",
            z_current.shape[0],
            z_replay.shape[0],
            int(labeled.sum()),
        )
        return model

    def sample(
        self,
        n: int,
        rng: np.random.Generator,
        counts: Optional[Sequence[int]] = None,
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Draws labeled latent points.

        :param n: Number of samples.
        :param counts: Optional per-component counts (summing to ``n``) that
            replace weight-proportional component choice.
        :returns: ``(z, y)`` with z of shape (n, f) and y the class labels.
        """
        if counts is None:
            components = rng.choice(self.num_components, size=n, p=self.weights)
        else:
            counts = np.asarray(counts, dtype=np.int64)
            if counts.shape[0] != self.num_components or counts.sum() != n:
                raise ValidationError(
                    f"counts {counts.tolist()} must give one entry per component summing to {n}"
                )
            components = np.repeat(np.arange(self.num_components), counts)
        noise = rng.standard_normal((components.shape[0], self.dim))
        z = self.means[components] + np.sqrt(self.variances[components]) * noise
        return z, self.class_labels[components].copy()
