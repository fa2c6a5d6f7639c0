"""
Tasks and Task Sequences
========================

Data ingestion and task-sequence construction for continual concept
learning: IDX digit files, permuted-pixel tasks, few-shot label splits,
block-mean downsampling and a synthetic Gaussian-blob task family.

Pixels are scaled into [0, 1]; every task in a sequence shares the input
dimension d and the class count k.

Example usage:
--------------
    from ecla_learner.tasks import load_idx, build_permuted_sequence, apply_few_shot

    mnist = load_idx("train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                     "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    sequence = apply_few_shot(build_permuted_sequence(mnist, 3, seed=7), 5, seed=7)

Dependencies:
-------------
- numpy
- scipy

License:
--------
MIT License
"""

import math
import struct
from dataclasses import dataclass, field, replace
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.linalg import expm

from .exceptions import DimensionError, IdxParseError, ValidationError
from .logger import get_logger

logger = get_logger(__name__)

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801
SYNTHETIC_SPREAD = 3.0


@dataclass(frozen=True, eq=False)
class TaskDataset:
    """
    One domain of the concept-learning problem.

    :param labeled_idx: Training rows whose labels may be used; ``None``
        means every row (the fully labeled first task).
    """

    name: str
    train_x: np.ndarray
    train_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    num_classes: int
    labeled_idx: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        train_x = np.asarray(self.train_x, dtype=np.float64)
        test_x = np.asarray(self.test_x, dtype=np.float64).reshape(-1, train_x.shape[1])
        train_y = np.asarray(self.train_y, dtype=np.int64).reshape(-1)
        test_y = np.asarray(self.test_y, dtype=np.int64).reshape(-1)
        if train_x.ndim != 2 or train_x.shape[0] != train_y.shape[0]:
            raise DimensionError(f"train_x {train_x.shape} and train_y {train_y.shape} disagree")
        if test_x.shape[0] != test_y.shape[0]:
            raise DimensionError(f"test_x {test_x.shape} and test_y {test_y.shape} disagree")
        for name, values in (("train_x", train_x), ("test_x", test_x)):
            if values.size and (values.min() < 0.0 or values.max() > 1.0):
                raise ValidationError(f"{self.name}: {name} pixels must lie in [0, 1]")
        for name, labels in (("train_y", train_y), ("test_y", test_y)):
            if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
                raise ValidationError(
                    f"{self.name}: {name} labels must lie in [0, {self.num_classes})"
                )
        if self.labeled_idx is None:
            labeled = np.arange(train_x.shape[0])
        else:
            labeled = np.unique(np.asarray(self.labeled_idx, dtype=np.int64))
            if labeled.size and (labeled[0] < 0 or labeled[-1] >= train_x.shape[0]):
                raise ValidationError(f"{self.name}: labeled_idx outside [0, {train_x.shape[0]})")
        for attr, value in (
            ("train_x", train_x),
            ("test_x", test_x),
            ("train_y", train_y),
            ("test_y", test_y),
            ("labeled_idx", labeled),
        ):
            value.setflags(write=False)
            object.__setattr__(self, attr, value)

    @property
    def input_dim(self) -> int:
        return self.train_x.shape[1]

    @property
    def num_train(self) -> int:
        return self.train_x.shape[0]

    @property
    def image_side(self) -> Optional[int]:
        side = math.isqrt(self.input_dim)
        return side if side * side == self.input_dim else None

    @property
    def unlabeled_idx(self) -> np.ndarray:
        mask = np.ones(self.num_train, dtype=bool)
        mask[self.labeled_idx] = False
        return np.flatnonzero(mask)

    @property
    def is_fully_labeled(self) -> bool:
        return self.labeled_idx.shape[0] == self.num_train

    def fully_labeled(self) -> "TaskDataset":
        return replace(self, labeled_idx=None)


@dataclass(frozen=True)
class TaskSequence:
    """Ordered tasks sharing input dimension and class count."""

    tasks: Tuple[TaskDataset, ...]

    def __post_init__(self):
        tasks = tuple(self.tasks)
        if not tasks:
            raise ValidationError("a task sequence needs at least one task")
        dims = {task.input_dim for task in tasks}
        classes = {task.num_classes for task in tasks}
        if len(dims) != 1 or len(classes) != 1:
            raise ValidationError(
                f"tasks must share d and k, got d={sorted(dims)}, k={sorted(classes)}"
            )
        object.__setattr__(self, "tasks", tasks)

    def __len__(self) -> int:
        return len(self.tasks)

    def __getitem__(self, index: int) -> TaskDataset:
        return self.tasks[index]

    def __iter__(self) -> Iterator[TaskDataset]:
        return iter(self.tasks)

    @property
    def input_dim(self) -> int:
        return self.tasks[0].input_dim

    @property
    def num_classes(self) -> int:
        return self.tasks[0].num_classes


def _read_bytes(path: str) -> bytes:
    with open(path, "rb") as handle:
        return handle.read()


def parse_idx_images(payload: bytes, path: Optional[str] = None) -> Tuple[np.ndarray, int]:
    """
    Parses an IDX3 unsigned-byte image file.

    :returns: Pixels scaled by 1/255, shape (count, rows * cols), and the
        image side (rows).
    :raises IdxParseError: On bad magic or truncated header/payload.
    """
    if len(payload) < 16:
        raise IdxParseError(f"truncated header ({len(payload)} of 16 bytes)", path, len(payload))
    magic, count, rows, cols = struct.unpack_from(">IIII", payload, 0)
    if magic != IDX_IMAGES_MAGIC:
        raise IdxParseError(f"bad image magic 0x{magic:08x}", path, 0)
    expected = count * rows * cols
    available = len(payload) - 16
    if available < expected:
        raise IdxParseError(
            f"truncated payload: {available} of {expected} bytes", path, 16 + available
        )
    pixels = np.frombuffer(payload, dtype=np.uint8, count=expected, offset=16)
    return pixels.reshape(count, rows * cols).astype(np.float64) / 255.0, rows


def parse_idx_labels(payload: bytes, path: Optional[str] = None) -> np.ndarray:
    """
    Parses an IDX1 unsigned-byte label file.

    :raises IdxParseError: On bad magic or truncated header/payload.
    """
    if len(payload) < 8:
        raise IdxParseError(f"truncated header ({len(payload)} of 8 bytes)", path, len(payload))
    magic, count = struct.unpack_from(">II", payload, 0)
    if magic != IDX_LABELS_MAGIC:
        raise IdxParseError(f"bad label magic 0x{magic:08x}", path, 0)
    available = len(payload) - 8
    if available < count:
        raise IdxParseError(f"truncated payload: {available} of {count} bytes", path, 8 + available)
    return np.frombuffer(payload, dtype=np.uint8, count=count, offset=8).astype(np.int64)


def _load_pair(images_path: str, labels_path: str) -> Tuple[np.ndarray, np.ndarray]:
    images, _ = parse_idx_images(_read_bytes(images_path), images_path)
    labels = parse_idx_labels(_read_bytes(labels_path), labels_path)
    if images.shape[0] != labels.shape[0]:
        raise IdxParseError(
            f"count mismatch: {images.shape[0]} images but {labels.shape[0]} labels",
            labels_path,
            4,
        )
    return images, labels


def load_idx(
    images_path: str,
    labels_path: str,
    test_images_path: Optional[str] = None,
    test_labels_path: Optional[str] = None,
    name: Optional[str] = None,
    num_classes: Optional[int] = None,
) -> TaskDataset:
    """
    Loads an IDX image/label pair (and optionally its test split).

    :param num_classes: Class count; inferred as ``max(label) + 1`` if omitted.
    :raises IdxParseError: On malformed files or count mismatches.
    """
    train_x, train_y = _load_pair(images_path, labels_path)
    if test_images_path and test_labels_path:
        test_x, test_y = _load_pair(test_images_path, test_labels_path)
    else:
        test_x, test_y = np.zeros((0, train_x.shape[1])), np.zeros(0, dtype=np.int64)
    if num_classes is None:
        num_classes = int(max(train_y.max(initial=0), test_y.max(initial=0))) + 1
    logger.info(
        "Loaded %d training and %d test images of dimension %d from %s",
        train_x.shape[0],
        test_x.shape[0],
        train_x.shape[1],
        images_path,
    )
    return TaskDataset(name or images_path, train_x, train_y, test_x, test_y, num_classes)


def write_idx(images, labels, images_path: str, labels_path: str) -> None:
    """
    Writes square images (pixels in [0, 1]) and labels as IDX files.

    Pixels are quantised with ``round(255 * x)``, the inverse of the loader.
    """
    images = np.asarray(images, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    count, dim = images.shape
    side = math.isqrt(dim)
    if side * side != dim:
        raise ValidationError(f"image dimension {dim} is not a perfect square")
    pixels = np.clip(np.rint(images * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as handle:
        handle.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, count, side, side))
        handle.write(pixels.tobytes())
    with open(labels_path, "wb") as handle:
        handle.write(struct.pack(">II", IDX_LABELS_MAGIC, labels.shape[0]))
        handle.write(labels.astype(np.uint8).tobytes())


def invert_permutation(permutation) -> np.ndarray:
    permutation = np.asarray(permutation, dtype=np.int64)
    inverse = np.empty_like(permutation)
    inverse[permutation] = np.arange(permutation.shape[0])
    return inverse


def permute_pixels(x, permutation) -> np.ndarray:
    """Reorders the columns of ``x``: output pixel j is input pixel permutation[j]."""
    return np.asarray(x)[:, np.asarray(permutation, dtype=np.int64)]


def make_permuted_task(
    base: TaskDataset, seed: int, permutation: Optional[np.ndarray] = None
) -> TaskDataset:
    """
    Applies one fixed pixel shuffle, drawn from ``seed``, to every image.

    :param permutation: Explicit permutation overriding the seeded draw.
    """
    if permutation is None:
        permutation = np.random.default_rng(seed).permutation(base.input_dim)
    permutation = np.asarray(permutation, dtype=np.int64)
    if sorted(permutation.tolist()) != list(range(base.input_dim)):
        raise ValidationError(f"not a permutation of [0, {base.input_dim})")
    return replace(
        base,
        name=f"{base.name}/permuted-{seed}",
        train_x=permute_pixels(base.train_x, permutation),
        test_x=permute_pixels(base.test_x, permutation),
    )


def few_shot_split(task: TaskDataset, labels_per_class: int, seed: int) -> TaskDataset:
    """
    Keeps exactly ``labels_per_class`` seeded-uniform labeled rows per class.

    :raises ValidationError: If a class has too few training samples.
    """
    rng = np.random.default_rng(seed)
    counts = np.bincount(task.train_y, minlength=task.num_classes)
    short = [c for c in range(task.num_classes) if counts[c] < labels_per_class]
    if short:
        raise ValidationError(
            f"{task.name}: classes {short} have fewer than {labels_per_class} training samples"
        )
    chosen = [
        rng.choice(np.flatnonzero(task.train_y == c), size=labels_per_class, replace=False)
        for c in range(task.num_classes)
    ]
    return replace(task, labeled_idx=np.sort(np.concatenate(chosen)))


def subset_task(task: TaskDataset, n_train: Optional[int], n_test: Optional[int], seed: int) -> TaskDataset:
    """Seeded uniform subset of the train and test splits (``None`` keeps all)."""
    rng = np.random.default_rng(seed)

    def pick(total: int, size: Optional[int]) -> np.ndarray:
        if size is None or size >= total:
            return np.arange(total)
        return np.sort(rng.choice(total, size=size, replace=False))

    train_rows = pick(task.num_train, n_train)
    test_rows = pick(task.test_x.shape[0], n_test)
    return replace(
        task,
        train_x=task.train_x[train_rows],
        train_y=task.train_y[train_rows],
        test_x=task.test_x[test_rows],
        test_y=task.test_y[test_rows],
        labeled_idx=None,
    )


def resize_images(task: TaskDataset, side: int) -> TaskDataset:
    """
    Block-mean downsampling of square images to ``side`` x ``side``.

    :raises ValidationError: If d is not a perfect square or ``side`` does
        not divide the original side.
    """
    original = task.image_side
    if original is None:
        raise ValidationError(f"{task.name}: input dimension {task.input_dim} is not square")
    if side < 1 or original % side:
        raise ValidationError(f"{task.name}: side {side} does not divide image side {original}")
    factor = original // side

    def shrink(x: np.ndarray) -> np.ndarray:
        blocks = x.reshape(x.shape[0], side, factor, side, factor)
        return blocks.mean(axis=(2, 4)).reshape(x.shape[0], side * side)

    if factor == 1:
        return task
    return replace(task, train_x=shrink(task.train_x), test_x=shrink(task.test_x))


def _class_counts(n: int, k: int) -> List[int]:
    base, remainder = divmod(n, k)
    return [base + (1 if c < remainder else 0) for c in range(k)]


def _plane_rotation(d: int, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Rotation by ``angle`` in each of the d // 2 planes of a random orthonormal basis."""
    basis, _ = np.linalg.qr(rng.standard_normal((d, d)))
    planes = np.zeros((d, d))
    for i in range(0, d - 1, 2):
        planes[i + 1, i], planes[i, i + 1] = 1.0, -1.0
    return expm(angle * basis @ planes @ basis.T)


def make_synthetic_sequence(
    k: int,
    d: int,
    n: int,
    num_tasks: int,
    domain_shift: float,
    seed: int,
    n_test: Optional[int] = None,
    noise: float = 1.0,
    separation: float = 3.0,
) -> TaskSequence:
    """
    Gaussian-blob tasks that share classes but live in shifted domains.

    Task 1 holds k blobs in d dimensions (centres with scale ``separation``,
    isotropic ``noise``). Task t >= 2 applies its own seeded rotation by
    ``domain_shift`` radians in every plane of a random basis, plus a
    translation of length ``domain_shift * separation``, to the same points.
    All tasks are then mapped into [0, 1] by one shared affine map that
    sends ``SYNTHETIC_SPREAD`` standard deviations to the interval ends
    (values beyond are clipped).
    """
    if min(k, d, n, num_tasks) < 1:
        raise ValidationError(f"k, d, n and num_tasks must be >= 1, got {k}, {d}, {n}, {num_tasks}")
    rng = np.random.default_rng(seed)
    n_test = n if n_test is None else n_test
    centers = rng.standard_normal((k, d)) * separation

    def blobs(count: int) -> Tuple[np.ndarray, np.ndarray]:
        labels = np.repeat(np.arange(k), _class_counts(count, k))
        points = centers[labels] + noise * rng.standard_normal((count, d))
        order = rng.permutation(count)
        return points[order], labels[order]

    train_raw, train_y = blobs(n)
    test_raw, test_y = blobs(n_test)

    shifted = []
    for t in range(1, num_tasks + 1):
        if t == 1 or domain_shift == 0:
            shifted.append((train_raw, test_raw))
            continue
        task_rng = np.random.default_rng([seed, t])
        rotation = _plane_rotation(d, domain_shift, task_rng)
        direction = task_rng.standard_normal(d)
        translation = domain_shift * separation * direction / np.linalg.norm(direction)
        shifted.append((train_raw @ rotation.T + translation, test_raw @ rotation.T + translation))

    pooled = np.vstack([tr for tr, _ in shifted])
    center = pooled.mean(axis=0)
    spread = SYNTHETIC_SPREAD * 2.0 * max(float((pooled - center).std()), 1e-12)

    def to_pixels(raw: np.ndarray) -> np.ndarray:
        return np.clip(0.5 + (raw - center) / spread, 0.0, 1.0)

    tasks = [
        TaskDataset(f"synthetic/task{t}", to_pixels(tr), train_y, to_pixels(te), test_y, k)
        for t, (tr, te) in enumerate(shifted, start=1)
    ]
    return TaskSequence(tuple(tasks))


def build_permuted_sequence(base: TaskDataset, num_tasks: int, seed: int) -> TaskSequence:
    """Task 1 is ``base`` itself; task t >= 2 uses permutation seed ``seed + t``."""
    tasks = [base.fully_labeled()]
    tasks.extend(make_permuted_task(base, seed + t) for t in range(2, num_tasks + 1))
    return TaskSequence(tuple(tasks))


def build_cross_domain_sequence(domains: Sequence[TaskDataset]) -> TaskSequence:
    """
    Orders domains into a sequence at a common resolution.

    Every domain is block-mean resized to the smallest image side present.
    """
    sides = [domain.image_side for domain in domains]
    if any(side is None for side in sides):
        raise ValidationError("cross-domain sequences need square images")
    target = min(sides)
    return TaskSequence(tuple(resize_images(domain, target).fully_labeled() for domain in domains))


def apply_few_shot(sequence: TaskSequence, labels_per_class: int, seed: int) -> TaskSequence:
    """Few-shot splits for tasks t >= 2 (split seed ``seed + t``); task 1 stays fully labeled."""
    tasks = [sequence[0].fully_labeled()]
    tasks.extend(
        few_shot_split(task, labels_per_class, seed + t)
        for t, task in enumerate(sequence.tasks[1:], start=2)
    )
    return TaskSequence(tuple(tasks))
