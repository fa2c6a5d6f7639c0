"""
Sliced Wasserstein Distance
===========================

Sliced Wasserstein distance between equal-size empirical samples, its
(sub)gradient with respect to the first sample set, and the class-conditional
variant that sums per-class distances.

Each slice contributes the squared 2-Wasserstein distance between the sorted
projections; the distance is the mean over slices. Sorting is stable, so ties
are broken by original row index and the gradient is deterministic.

Example usage:
--------------
    import numpy as np
    from ecla_learner.swd import ProjectionSet, sliced_wd, sliced_wd_grad

    rng = np.random.default_rng(0)
    projections = ProjectionSet.sample(50, 16, rng)
    distance = sliced_wd(za, zb, projections)
    grad = sliced_wd_grad(za, zb, projections)

Dependencies:
-------------
- numpy

License:
--------
MIT License
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .exceptions import DimensionError, ValidationError
from .nn_core import as_tensor2


@dataclass(frozen=True, eq=False)
class ProjectionSet:
    """L unit directions in the embedding space, one per row."""

    directions: np.ndarray
    seed: Optional[int] = None

    def __post_init__(self):
        directions = as_tensor2(self.directions, "directions")
        norms = np.linalg.norm(directions, axis=1)
        if directions.shape[0] == 0 or not np.allclose(norms, 1.0, rtol=0.0, atol=1e-12):
            raise ValidationError("projection directions must be non-empty unit vectors")
        object.__setattr__(self, "directions", directions)

    @classmethod
    def sample(cls, num_projections: int, dim: int, rng) -> "ProjectionSet":
        """
        Draws directions uniformly on the unit sphere (normalised Gaussians).

        :param num_projections: Slice count L.
        :param dim: Embedding dimension f.
        :param rng: A ``numpy.random.Generator`` or an integer seed.
        """
        if num_projections < 1 or dim < 1:
            raise ValidationError(
                f"need L >= 1 and f >= 1, got L={num_projections}, f={dim}"
            )
        seed = rng if isinstance(rng, (int, np.integer)) else None
        generator = np.random.default_rng(rng) if seed is not None else rng
        gauss = generator.standard_normal((num_projections, dim))
        norms = np.linalg.norm(gauss, axis=1, keepdims=True)
        # zero rows get a fixed axis
        gauss[norms[:, 0] == 0.0, 0] = 1.0
        norms = np.linalg.norm(gauss, axis=1, keepdims=True)
        return cls(gauss / norms, None if seed is None else int(seed))

    @property
    def num_projections(self) -> int:
        return self.directions.shape[0]

    @property
    def dim(self) -> int:
        return self.directions.shape[1]


def wasserstein_1d(a, b) -> float:
    """
    Squared 2-Wasserstein distance between two equal-size 1-D samples.

    :raises ValidationError: If the sizes differ or are zero.
    """
    a = np.sort(np.asarray(a, dtype=np.float64).reshape(-1), kind="stable")
    b = np.sort(np.asarray(b, dtype=np.float64).reshape(-1), kind="stable")
    if a.size != b.size or a.size == 0:
        raise ValidationError(f"samples must have equal nonzero sizes, got {a.size} and {b.size}")
    diff = a - b
    return float(np.mean(diff * diff))


def _check_pair(za, zb, projections: ProjectionSet) -> Tuple[np.ndarray, np.ndarray]:
    za = as_tensor2(za, "za")
    zb = as_tensor2(zb, "zb")
    if za.shape[1] != zb.shape[1] or za.shape[1] != projections.dim:
        raise DimensionError(
            f"za {za.shape}, zb {zb.shape} and projections of dim "
            f"{projections.dim} must share the embedding width"
        )
    if za.shape[0] != zb.shape[0] or za.shape[0] == 0:
        raise DimensionError(
            f"za {za.shape} and zb {zb.shape} must have the same nonzero row count"
        )
    return za, zb


def _sorted_residuals(za, zb, projections: ProjectionSet):
    proj_a = za @ projections.directions.T
    proj_b = zb @ projections.directions.T
    order_a = np.argsort(proj_a, axis=0, kind="stable")
    order_b = np.argsort(proj_b, axis=0, kind="stable")
    residual = np.take_along_axis(proj_a, order_a, axis=0) - np.take_along_axis(
        proj_b, order_b, axis=0
    )
    return residual, order_a


def sliced_wd(za, zb, projections: ProjectionSet) -> float:
    """
    Mean over slices of :func:`wasserstein_1d` on the projected samples.

    :raises DimensionError: On width or row-count mismatch.
    """
    za, zb = _check_pair(za, zb, projections)
    residual, _ = _sorted_residuals(za, zb, projections)
    return float(np.mean(residual * residual))


def sliced_wd_grad(za, zb, projections: ProjectionSet) -> np.ndarray:
    """
    Gradient of :func:`sliced_wd` with respect to the rows of ``za``.

    The sorted pairing is held fixed (subgradient through the sort): each
    slice theta adds ``2 / (n L) * (theta . za_i - theta . zb_pi(i)) * theta``
    to row i.
    """
    za, zb = _check_pair(za, zb, projections)
    n, num_slices = za.shape[0], projections.num_projections
    residual, order_a = _sorted_residuals(za, zb, projections)
    grad_proj = np.empty_like(residual)
    np.put_along_axis(grad_proj, order_a, residual * (2.0 / (n * num_slices)), axis=0)
    return grad_proj @ projections.directions


def match_sizes(
    n_a: int, n_b: int, rng: Optional[np.random.Generator]
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Row indices that equalise two sample sizes by subsampling the larger one.

    Without an rng the first rows of the larger set are used.
    """
    size = min(n_a, n_b)

    def pick(count: int) -> np.ndarray:
        if count == size:
            return np.arange(count)
        if rng is None:
            return np.arange(size)
        return np.sort(rng.choice(count, size=size, replace=False))

    return pick(n_a), pick(n_b)


def _class_pairs(ya, yb, rng):
    ya = np.asarray(ya, dtype=np.int64).reshape(-1)
    yb = np.asarray(yb, dtype=np.int64).reshape(-1)
    classes = np.unique(ya)
    missing = sorted(set(classes.tolist()) - set(np.unique(yb).tolist()))
    if missing:
        raise ValidationError(f"classes {missing} are present in ya but absent in yb")
    for label in classes:
        rows_a = np.flatnonzero(ya == label)
        rows_b = np.flatnonzero(yb == label)
        pick_a, pick_b = match_sizes(rows_a.size, rows_b.size, rng)
        yield rows_a[pick_a], rows_b[pick_b]


def conditional_swd(
    za, ya, zb, yb, projections: ProjectionSet, rng: Optional[np.random.Generator] = None
) -> float:
    """
    Sum over the classes of ``ya`` of the sliced distance between class subsets.

    Per class, the larger subset is subsampled (with ``rng``) to the size of
    the smaller one.

    :raises ValidationError: If a class of ``ya`` has no rows in ``yb``.
    """
    za = as_tensor2(za, "za")
    zb = as_tensor2(zb, "zb")
    if za.shape[0] != np.asarray(ya).shape[0] or zb.shape[0] != np.asarray(yb).shape[0]:
        raise DimensionError("label vectors must match their embedding row counts")
    return float(
        sum(
            sliced_wd(za[rows_a], zb[rows_b], projections)
            for rows_a, rows_b in _class_pairs(ya, yb, rng)
        )
    )


def conditional_swd_with_grad(
    za, ya, zb, yb, projections: ProjectionSet, rng: Optional[np.random.Generator] = None
) -> Tuple[float, np.ndarray]:
    """
    :func:`conditional_swd` together with its gradient with respect to ``za``.

    Rows of ``za`` left out by the per-class subsampling get zero gradient.
    """
    za = as_tensor2(za, "za")
    zb = as_tensor2(zb, "zb")
    if za.shape[0] != np.asarray(ya).shape[0] or zb.shape[0] != np.asarray(yb).shape[0]:
        raise DimensionError("label vectors must match their embedding row counts")
    total = 0.0
    grad = np.zeros_like(za)
    for rows_a, rows_b in _class_pairs(ya, yb, rng):
        total += sliced_wd(za[rows_a], zb[rows_b], projections)
        grad[rows_a] += sliced_wd_grad(za[rows_a], zb[rows_b], projections)
    return total, grad
