"""
Concept Model
=============

The autoencoder-plus-classifier network used for continual concept learning:
an encoder into an f-dimensional embedding, a decoder back to input space,
and a linear classifier on the embedding. Two training objectives are
provided:

- ``loss_task1``: cross-entropy + gamma * reconstruction, for the first,
  fully labeled task.
- ``loss_ecla``: the combined loss on the few labeled current-task points
  and on replayed pseudo-data, plus eta * the sliced Wasserstein distance
  between current-task embeddings and replay latents, plus lambda * the
  class-conditional sliced distance on the few labeled points.

Both return the scalar loss and leave the gradients in the layer buffers.

Example usage:
--------------
    import numpy as np
    from ecla_learner.model import ConceptModel, LossWeights, loss_task1

    model = ConceptModel.build(input_dim=196, num_classes=10, rng=np.random.default_rng(0))
    result = loss_task1(model, x, y, LossWeights())

Dependencies:
-------------
- numpy

License:
--------
MIT License
"""

import copy
from dataclasses import dataclass
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import DimensionError, ValidationError
from .gmm import GmmModel
from .nn_core import (
    Activation,
    LayerStack,
    as_labels,
    as_tensor2,
    cross_entropy,
    mse_loss,
)
from .swd import ProjectionSet, conditional_swd_with_grad, match_sizes, sliced_wd, sliced_wd_grad


@dataclass(frozen=True)
class Architecture:
    """Layer sizes of the concept model; the decoder mirrors the encoder."""

    embedding_dim: int = 16
    hidden_sizes: Tuple[int, ...] = (256, 64)
    hidden_activation: Activation = Activation.RELU

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        object.__setattr__(self, "hidden_activation", Activation(self.hidden_activation))
        if self.embedding_dim < 1 or any(h < 1 for h in self.hidden_sizes):
            raise ValidationError(
                f"layer sizes must be positive: f={self.embedding_dim}, "
                f"hidden={self.hidden_sizes}"
            )


@dataclass(frozen=True)
class LossWeights:
    """Trade-offs: gamma (reconstruction), eta (marginal SWD), lambda_ (conditional SWD)."""

    gamma: float = 1.0
    eta: float = 0.5
    lambda_: float = 0.5

    def __post_init__(self):
        for name in ("gamma", "eta", "lambda_"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0, got {getattr(self, name)}")


class LossResult(NamedTuple):
    """Scalar loss, gradients (encoder, decoder, classifier order) and term values."""

    loss: float
    grads: List[np.ndarray]
    terms: Dict[str, float]


class ConceptModel:
    """
    Encoder (d -> f), decoder (f -> d) and classifier (f -> k) stacks.

    :raises DimensionError: If the stacks' widths do not fit together.
    """

    def __init__(self, encoder: LayerStack, decoder: LayerStack, classifier: LayerStack):
        if encoder.out_features != decoder.in_features or (
            encoder.out_features != classifier.in_features
        ):
            raise DimensionError(
                f"embedding widths differ: encoder out {encoder.out_features}, "
                f"decoder in {decoder.in_features}, classifier in {classifier.in_features}"
            )
        if decoder.out_features != encoder.in_features:
            raise DimensionError(
                f"decoder output width {decoder.out_features} != input dim {encoder.in_features}"
            )
        self.encoder = encoder
        self.decoder = decoder
        self.classifier = classifier

    @classmethod
    def build(
        cls,
        input_dim: int,
        num_classes: int,
        rng: np.random.Generator,
        architecture: Optional[Architecture] = None,
    ) -> "ConceptModel":
        """
        Builds a freshly initialised model.

        Encoder ``d -> hidden... -> f`` (identity at the bottleneck), decoder
        mirrored with a sigmoid output, classifier ``f -> k`` linear.
        """
        arch = architecture or Architecture()
        hidden = list(arch.hidden_sizes)
        act = arch.hidden_activation
        encoder = LayerStack.build(
            [input_dim, *hidden, arch.embedding_dim],
            [act] * len(hidden) + [Activation.IDENTITY],
            rng,
        )
        decoder = LayerStack.build(
            [arch.embedding_dim, *reversed(hidden), input_dim],
            [act] * len(hidden) + [Activation.SIGMOID],
            rng,
        )
        classifier = LayerStack.build(
            [arch.embedding_dim, num_classes], [Activation.IDENTITY], rng
        )
        return cls(encoder, decoder, classifier)

    @property
    def input_dim(self) -> int:
        return self.encoder.in_features

    @property
    def embedding_dim(self) -> int:
        return self.encoder.out_features

    @property
    def num_classes(self) -> int:
        return self.classifier.out_features

    def stacks(self) -> List[LayerStack]:
        return [self.encoder, self.decoder, self.classifier]

    def gradients(self) -> List[np.ndarray]:
        return [g for stack in self.stacks() for g in stack.gradients()]

    def parameters(self) -> List[np.ndarray]:
        return [p for stack in self.stacks() for p in stack.parameters()]

    def zero_grad(self) -> None:
        for stack in self.stacks():
            stack.zero_grad()

    def copy(self) -> "ConceptModel":
        return copy.deepcopy(self)

    def encode(self, x) -> np.ndarray:
        return self.encoder.predict(x)

    def decode(self, z) -> np.ndarray:
        return self.decoder.predict(z)

    def classify(self, z) -> np.ndarray:
        return self.classifier.predict(z)

    def predict(self, x) -> np.ndarray:
        """Class predictions; ties go to the lowest class index."""
        return np.argmax(self.classify(self.encode(x)), axis=1)


def _combined_segments(
    model: ConceptModel,
    z: np.ndarray,
    x: np.ndarray,
    segments: Sequence[Tuple[int, int, np.ndarray]],
    gamma: float,
) -> Tuple[List[Tuple[float, float]], np.ndarray]:
    """
    Combined (classification + gamma * reconstruction) losses on row segments.

    Each segment ``(start, stop, labels)`` is averaged on its own, so two
    segments yield two independent mean losses. Decoder and classifier run
    once over all rows.

    :returns: ``[(ce, mse), ...]`` per segment and d loss / d z.
    """
    logits, classifier_cache = model.classifier.forward(z)
    reconstruction, decoder_cache = model.decoder.forward(z)
    logit_grad = np.zeros_like(logits)
    recon_grad = np.zeros_like(reconstruction)
    values = []
    for start, stop, labels in segments:
        ce, ce_grad = cross_entropy(logits[start:stop], labels)
        mse, mse_grad = mse_loss(reconstruction[start:stop], x[start:stop])
        logit_grad[start:stop] = ce_grad
        recon_grad[start:stop] = gamma * mse_grad
        values.append((ce, mse))
    grad_z = model.classifier.backward(classifier_cache, logit_grad)
    grad_z = grad_z + model.decoder.backward(decoder_cache, recon_grad)
    return values, grad_z


def loss_task1(model: ConceptModel, x, y, weights: LossWeights) -> LossResult:
    """
    First-task objective: mean cross-entropy + gamma * mean reconstruction MSE.

    The encoder receives gradient from both paths.

    :raises ValidationError: If a label is outside [0, k).
    :raises DimensionError: On shape errors.
    """
    x = as_tensor2(x, "x")
    y = as_labels(y, model.num_classes, x.shape[0], "y")
    z, encoder_cache = model.encoder.forward(x)
    [(ce, mse)], grad_z = _combined_segments(
        model, z, x, [(0, x.shape[0], y)], weights.gamma
    )
    model.encoder.backward(encoder_cache, grad_z)
    return LossResult(
        ce + weights.gamma * mse,
        model.gradients(),
        {"classification": ce, "reconstruction": mse},
    )


def loss_ecla(
    model: ConceptModel,
    few_labeled: Tuple[np.ndarray, np.ndarray],
    unlabeled,
    replay: Tuple[np.ndarray, np.ndarray, np.ndarray],
    gmm: GmmModel,
    weights: LossWeights,
    num_projections: int,
    rng: np.random.Generator,
    projections: Optional[ProjectionSet] = None,
    latent_targets: Optional[Tuple[np.ndarray, np.ndarray]] = None,
) -> LossResult:
    """
    Objective for tasks after the first.

    ``L_c(x', y') + L_c(x_er, y_er) + eta * SWD(phi(x' + x), z_er)
    + lambda * sum_j SWD(phi(x' | j), z_er | j)``, where ``L_c`` is the
    combined loss of :func:`loss_task1` and each SWD pairs equal-size samples
    (the larger side subsampled with ``rng``).

    :param few_labeled: ``(x', y')``, the labeled current-task points.
    :param unlabeled: Unlabeled current-task inputs (may have zero rows).
    :param replay: ``(x_er, y_er, z_er)`` pseudo-data batch for the replay term.
    :param gmm: Consolidated mixture; its class labels must all appear in ``y'``.
    :param num_projections: Slice count L, used when ``projections`` is None.
    :param projections: Fixed slices (for gradient checks); drawn from ``rng`` otherwise.
    :param latent_targets: ``(z, y)`` latent pool the SWD terms match against;
        defaults to the replay batch's ``(z_er, y_er)``.
    :raises ValidationError: If a class is absent from ``y'`` or replay is empty.
    """
    x_lab = as_tensor2(few_labeled[0], "few_labeled x")
    y_lab = as_labels(few_labeled[1], model.num_classes, x_lab.shape[0], "few_labeled y")
    x_unl = as_tensor2(np.reshape(unlabeled, (-1, model.input_dim)), "unlabeled")
    x_er = as_tensor2(replay[0], "x_er")
    y_er = as_labels(replay[1], model.num_classes, x_er.shape[0], "y_er")
    if x_er.shape[0] == 0:
        raise ValidationError("loss_ecla needs a nonempty replay set")
    if gmm.dim != model.embedding_dim:
        raise DimensionError(
            f"mixture dim {gmm.dim} != model embedding dim {model.embedding_dim}"
        )
    missing = sorted(set(gmm.class_labels.tolist()) - set(y_lab.tolist()))
    if missing:
        raise ValidationError(f"few labeled points are missing classes {missing}")

    if latent_targets is None:
        z_target, y_target = replay[2], y_er
    else:
        z_target, y_target = latent_targets
    z_target = as_tensor2(z_target, "latent targets")
    y_target = as_labels(y_target, model.num_classes, z_target.shape[0], "latent target labels")

    n_lab, n_er = x_lab.shape[0], x_er.shape[0]
    n_sup = n_lab + n_er
    x_all = np.vstack([x_lab, x_er, x_unl])
    z_all, encoder_cache = model.encoder.forward(x_all)
    grad_z = np.zeros_like(z_all)

    segment_values, grad_sup = _combined_segments(
        model,
        z_all[:n_sup],
        x_all[:n_sup],
        [(0, n_lab, y_lab), (n_lab, n_sup, y_er)],
        weights.gamma,
    )
    [(ce_lab, mse_lab), (ce_er, mse_er)] = segment_values
    grad_z[:n_sup] = grad_sup

    if projections is None:
        projections = ProjectionSet.sample(num_projections, model.embedding_dim, rng)

    marginal = 0.0
    if weights.eta > 0:
        current_rows = np.concatenate([np.arange(n_lab), np.arange(n_sup, z_all.shape[0])])
        pick_cur, pick_tgt = match_sizes(current_rows.size, z_target.shape[0], rng)
        rows = current_rows[pick_cur]
        marginal = sliced_wd(z_all[rows], z_target[pick_tgt], projections)
        grad_z[rows] += weights.eta * sliced_wd_grad(
            z_all[rows], z_target[pick_tgt], projections
        )

    conditional = 0.0
    if weights.lambda_ > 0:
        conditional, cond_grad = conditional_swd_with_grad(
            z_all[:n_lab], y_lab, z_target, y_target, projections, rng
        )
        grad_z[:n_lab] += weights.lambda_ * cond_grad

    model.encoder.backward(encoder_cache, grad_z)
    total = (
        ce_lab
        + weights.gamma * mse_lab
        + ce_er
        + weights.gamma * mse_er
        + weights.eta * marginal
        + weights.lambda_ * conditional
    )
    return LossResult(
        total,
        model.gradients(),
        {
            "classification": ce_lab,
            "reconstruction": mse_lab,
            "replay_classification": ce_er,
            "replay_reconstruction": mse_er,
            "marginal_swd": marginal,
            "conditional_swd": conditional,
        },
    )
