"""
Dense Network Core
==================

Minimal dense neural-network substrate used by the concept model: float64
matrices, dense layers with four activations, cross-entropy and MSE losses,
hand-written reverse-mode gradients and a momentum SGD optimizer.

Matrices ("Tensor2") are two-dimensional ``float64`` numpy arrays, one sample
per row. Every public operation validates shapes and refuses non-finite
values.

Example usage:
--------------
    import numpy as np
    from ecla_learner.nn_core import Activation, LayerStack, SgdConfig, SgdOptimizer

    rng = np.random.default_rng(0)
    net = LayerStack.build([4, 8, 2], [Activation.RELU, Activation.IDENTITY], rng)
    out, cache = net.forward(np.ones((3, 4)))
    net.backward(cache, np.ones_like(out))
    SgdOptimizer(SgdConfig()).step([net])

Dependencies:
-------------
- numpy
- scipy

License:
--------
MIT License
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .exceptions import DimensionError, StateError, ValidationError


def as_tensor2(values, name: str = "tensor") -> np.ndarray:
    """
    Converts ``values`` to a finite two-dimensional float64 array.

    :param values: Array-like input.
    :param name: Name used in error messages.
    :returns: A C-contiguous float64 array of shape (rows, cols).
    :raises DimensionError: If the input is not two-dimensional.
    :raises ValidationError: If any entry is NaN or infinite.
    """
    array = np.ascontiguousarray(values, dtype=np.float64)
    if array.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {array.shape}")
    if not np.all(np.isfinite(array)):
        raise ValidationError(f"{name} contains non-finite values")
    return array


def as_labels(labels, num_classes: int, rows: int, name: str = "labels") -> np.ndarray:
    """
    Validates a class-index vector.

    :raises DimensionError: If the length does not match ``rows``.
    :raises ValidationError: If any label is outside [0, num_classes).
    """
    array = np.asarray(labels)
    if array.ndim != 1 or array.shape[0] != rows:
        raise DimensionError(f"{name} shape {array.shape} does not match {rows} rows")
    if array.size and not np.issubdtype(array.dtype, np.integer):
        raise ValidationError(f"{name} must hold integer class indices")
    array = array.astype(np.int64)
    bad = array[(array < 0) | (array >= num_classes)]
    if bad.size:
        raise ValidationError(
            f"{name} out of range [0, {num_classes}): {sorted(set(bad.tolist()))}"
        )
    return array


class Activation(str, Enum):
    """Elementwise activation of a dense layer."""

    RELU = "relu"
    TANH = "tanh"
    IDENTITY = "identity"
    SIGMOID = "sigmoid"

    def apply(self, pre: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return np.maximum(pre, 0.0)
        if self is Activation.TANH:
            return np.tanh(pre)
        if self is Activation.SIGMOID:
            return expit(pre)
        return pre

    def derivative(self, pre: np.ndarray, out: np.ndarray) -> np.ndarray:
        if self is Activation.RELU:
            return (pre > 0.0).astype(np.float64)
        if self is Activation.TANH:
            return 1.0 - out * out
        if self is Activation.SIGMOID:
            return out * (1.0 - out)
        return np.ones_like(pre)


@dataclass(eq=False)
class DenseLayer:
    """A fully connected layer ``act(x @ W + b)`` with its gradient buffers."""

    weights: np.ndarray
    bias: np.ndarray
    activation: Activation = Activation.IDENTITY
    grad_weights: np.ndarray = field(init=False)
    grad_bias: np.ndarray = field(init=False)

    def __post_init__(self):
        self.weights = as_tensor2(self.weights, "weights")
        self.bias = np.asarray(self.bias, dtype=np.float64).reshape(-1)
        self.activation = Activation(self.activation)
        if self.bias.shape[0] != self.weights.shape[1]:
            raise DimensionError(
                f"bias {self.bias.shape} does not match weights {self.weights.shape}"
            )
        self.grad_weights = np.zeros_like(self.weights)
        self.grad_bias = np.zeros_like(self.bias)

    @classmethod
    def initialize(
        cls, fan_in: int, fan_out: int, activation: Activation, rng: np.random.Generator
    ) -> "DenseLayer":
        """Glorot-uniform weights, zero bias."""
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        return cls(weights, np.zeros(fan_out), activation)

    @property
    def in_features(self) -> int:
        return self.weights.shape[0]

    @property
    def out_features(self) -> int:
        return self.weights.shape[1]


@dataclass(eq=False)
class ForwardCache:
    """Values recorded by :meth:`LayerStack.forward` for the backward pass."""

    stack_id: int
    version: int
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    outputs: List[np.ndarray]


class LayerStack:
    """An ordered composition of dense layers."""

    def __init__(self, layers: Sequence[DenseLayer]):
        if not layers:
            raise ValidationError("a layer stack needs at least one layer")
        for previous, layer in zip(layers, layers[1:]):
            if previous.out_features != layer.in_features:
                raise DimensionError(
                    f"layer widths do not chain: {previous.weights.shape} "
                    f"-> {layer.weights.shape}"
                )
        self.layers: List[DenseLayer] = list(layers)
        self.version = 0

    @classmethod
    def build(
        cls,
        widths: Sequence[int],
        activations: Sequence[Activation],
        rng: np.random.Generator,
    ) -> "LayerStack":
        """
        Builds a freshly initialised stack.

        :param widths: Layer widths including input, e.g. ``[784, 256, 16]``.
        :param activations: One activation per layer (``len(widths) - 1``).
        :param rng: Source of the initial weights.
        """
        if len(activations) != len(widths) - 1:
            raise ValidationError(
                f"{len(widths) - 1} layers need as many activations, got {len(activations)}"
            )
        return cls(
            [
                DenseLayer.initialize(fan_in, fan_out, Activation(act), rng)
                for fan_in, fan_out, act in zip(widths, widths[1:], activations)
            ]
        )

    @property
    def in_features(self) -> int:
        return self.layers[0].in_features

    @property
    def out_features(self) -> int:
        return self.layers[-1].out_features

    def forward(self, x) -> Tuple[np.ndarray, ForwardCache]:
        """
        Runs the stack on a batch.

        :param x: Batch of shape (n, in_features).
        :returns: Output of shape (n, out_features) and the cache for backward.
        :raises DimensionError: If ``x`` has the wrong width.
        """
        x = as_tensor2(x, "input")
        if x.shape[1] != self.in_features:
            raise DimensionError(
                f"input shape {x.shape} does not match layer input width "
                f"{self.in_features} (weights {self.layers[0].weights.shape})"
            )
        inputs, pres, outs = [], [], []
        current = x
        for layer in self.layers:
            inputs.append(current)
            pre = current @ layer.weights + layer.bias
            current = layer.activation.apply(pre)
            pres.append(pre)
            outs.append(current)
        if not np.all(np.isfinite(current)):
            raise ValidationError("forward pass produced non-finite values")
        return current, ForwardCache(id(self), self.version, inputs, pres, outs)

    def predict(self, x) -> np.ndarray:
        """Forward pass without keeping a cache."""
        return self.forward(x)[0]

    def backward(self, cache: Optional[ForwardCache], output_grad) -> np.ndarray:
        """
        Back-propagates ``output_grad`` and overwrites every layer's gradients.

        :param cache: Cache returned by the matching :meth:`forward` call.
        :param output_grad: d loss / d output, same shape as the forward output.
        :returns: d loss / d input.
        :raises StateError: If the cache is missing or from another state.
        """
        if cache is None:
            raise StateError("backward called without a forward cache")
        if cache.stack_id != id(self) or cache.version != self.version:
            raise StateError(
                f"stale forward cache (version {cache.version}, stack is at {self.version})"
            )
        grad = as_tensor2(output_grad, "output_grad")
        if grad.shape != cache.outputs[-1].shape:
            raise DimensionError(
                f"output_grad shape {grad.shape} does not match output "
                f"{cache.outputs[-1].shape}"
            )
        for index in reversed(range(len(self.layers))):
            layer = self.layers[index]
            delta = grad * layer.activation.derivative(
                cache.pre_activations[index], cache.outputs[index]
            )
            layer.grad_weights = cache.inputs[index].T @ delta
            layer.grad_bias = delta.sum(axis=0)
            grad = delta @ layer.weights.T
        return grad

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.grad_weights = np.zeros_like(layer.weights)
            layer.grad_bias = np.zeros_like(layer.bias)

    def parameters(self) -> List[np.ndarray]:
        params = []
        for layer in self.layers:
            params.extend([layer.weights, layer.bias])
        return params

    def gradients(self) -> List[np.ndarray]:
        grads = []
        for layer in self.layers:
            grads.extend([layer.grad_weights, layer.grad_bias])
        return grads

    def mark_updated(self) -> None:
        """Invalidates caches taken before a parameter update."""
        self.version += 1


def cross_entropy(logits, labels) -> Tuple[float, np.ndarray]:
    """
    Mean softmax cross-entropy.

    :param logits: Batch of shape (n, k).
    :param labels: Class indices in [0, k).
    :returns: The loss and d loss / d logits.
    :raises ValidationError: If a label is out of range.
    """
    logits = as_tensor2(logits, "logits")
    n, k = logits.shape
    labels = as_labels(labels, k, n)
    if n == 0:
        return 0.0, np.zeros_like(logits)
    log_probs = log_softmax(logits, axis=1)
    rows = np.arange(n)
    loss = float(-log_probs[rows, labels].mean())
    grad = softmax(logits, axis=1)
    grad[rows, labels] -= 1.0
    return loss, grad / n


def mse_loss(reconstruction, target) -> Tuple[float, np.ndarray]:
    """
    Mean squared elementwise error.

    :returns: The loss and d loss / d reconstruction.
    :raises DimensionError: If the shapes differ.
    """
    reconstruction = as_tensor2(reconstruction, "reconstruction")
    target = as_tensor2(target, "target")
    if reconstruction.shape != target.shape:
        raise DimensionError(
            f"reconstruction shape {reconstruction.shape} != target shape {target.shape}"
        )
    if reconstruction.size == 0:
        return 0.0, np.zeros_like(reconstruction)
    diff = reconstruction - target
    return float(np.mean(diff * diff)), 2.0 * diff / diff.size


@dataclass(frozen=True)
class SgdConfig:
    """Momentum SGD settings."""

    learning_rate: float = 0.05
    momentum: float = 0.9
    minibatch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValidationError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.minibatch_size < 1:
            raise ValidationError(f"minibatch_size must be >= 1, got {self.minibatch_size}")
        if self.seed < 0:
            raise ValidationError(f"seed must be unsigned, got {self.seed}")


def sgd_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray],
    config: SgdConfig,
    velocity: List[np.ndarray],
) -> Sequence[np.ndarray]:
    """
    One in-place momentum step: ``v <- momentum * v + g``; ``p <- p - lr * v``.

    :param velocity: One buffer per parameter; an empty list is filled with zeros.
    :returns: ``params``, updated in place.
    """
    if len(params) != len(grads):
        raise DimensionError(f"{len(params)} parameters but {len(grads)} gradients")
    if not velocity:
        velocity.extend(np.zeros_like(p) for p in params)
    for param, grad, vel in zip(params, grads, velocity):
        if param.shape != grad.shape or param.shape != vel.shape:
            raise DimensionError(
                f"parameter {param.shape}, gradient {grad.shape} and velocity "
                f"{vel.shape} must match"
            )
        vel *= config.momentum
        vel += grad
        param -= config.learning_rate * vel
    return params


class SgdOptimizer:
    """Holds per-stack momentum buffers and applies :func:`sgd_step`."""

    def __init__(self, config: SgdConfig):
        self.config = config
        self._velocity: Dict[int, List[np.ndarray]] = {}

    def step(self, stacks: Sequence[LayerStack]) -> None:
        for stack in stacks:
            velocity = self._velocity.setdefault(id(stack), [])
            sgd_step(stack.parameters(), stack.gradients(), self.config, velocity)
            stack.mark_updated()

    def reset(self) -> None:
        self._velocity.clear()
