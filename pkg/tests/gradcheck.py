"""
Finite-difference helpers for gradient tests.
"""

import numpy as np


def numerical_gradient(func, array: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """
    Central differences of the scalar ``func()`` with respect to ``array``.

    ``array`` is perturbed in place and restored entry by entry.
    """
    grad = np.zeros_like(array)
    for index in np.ndindex(array.shape):
        original = array[index]
        array[index] = original + eps
        plus = func()
        array[index] = original - eps
        minus = func()
        array[index] = original
        grad[index] = (plus - minus) / (2.0 * eps)
    return grad


def assert_gradients_close(analytic, numeric, rtol: float = 1e-4, atol: float = 1e-7) -> None:
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)
