"""
Run Exports
===========

Writes the files a run leaves behind: learning curves, the accuracy matrix,
run summaries, embedding tables and pseudo-image grids.

Example usage:
--------------
    from ecla_learner.exports import save_metrics_csv, save_matrix_csv

    save_metrics_csv(result.matrix, "runs/synthetic/metrics.csv")
    save_matrix_csv(result.matrix, "runs/synthetic/matrix.csv")

Dependencies:
-------------
- numpy

License:
--------
MIT License
"""

import csv
import json
import math
from typing import Any, Dict

import numpy as np

from .exceptions import ValidationError
from .logger import get_logger
from .model import ConceptModel
from .replay import PseudoDataset
from .tasks import TaskSequence
from .trainer import AccuracyMatrix

logger = get_logger(__name__)

METRICS_FIELDS = ["step", "learning_task", "eval_task", "accuracy"]


def save_metrics_csv(matrix: AccuracyMatrix, filename: str) -> str:
    """
    Saves the learning curves, one row per (step, learning task, eval task).

    The column set is fixed; plotting scripts depend on it.
    """
    logger.info("Saving learning curves to CSV file: %s", filename)
    with open(filename, mode="w", encoding="utf-8", newline="") as file:
        writer = csv.DictWriter(file, fieldnames=METRICS_FIELDS)
        writer.writeheader()
        for point in matrix.curves:
            writer.writerow(point._asdict())
    return filename


def save_matrix_csv(matrix: AccuracyMatrix, filename: str) -> str:
    """
    Saves the end-of-task accuracy matrix: row ``after_task`` t, column
    ``task_s`` = accuracy on task s after learning task t; blank for s > t.
    """
    fieldnames = ["after_task"] + [f"task_{s}" for s in range(1, matrix.num_tasks + 1)]
    logger.info("Saving accuracy matrix to CSV file: %s", filename)
    with open(filename, mode="w", encoding="utf-8", newline="") as file:
        writer = csv.DictWriter(file, fieldnames=fieldnames)
        writer.writeheader()
        for t in range(1, matrix.completed + 1):
            row: Dict[str, Any] = {"after_task": t}
            row.update({f"task_{s}": float(a) for s, a in enumerate(matrix.row(t), start=1)})
            writer.writerow(row)
    return filename


def _json_ready(value):
    if isinstance(value, dict):
        return {str(key): _json_ready(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(item) for item in value]
    if isinstance(value, (float, np.floating)):
        return None if math.isnan(value) else float(value)
    if isinstance(value, np.integer):
        return int(value)
    return value


def save_summary_json(summary: Dict[str, Any], filename: str) -> str:
    """Writes ``summary`` with sorted keys; NaN becomes ``null``."""
    with open(filename, mode="w", encoding="utf-8") as file:
        json.dump(_json_ready(summary), file, sort_keys=True, indent=4)
    logger.info("Run summary saved to %s", filename)
    return filename


def save_embeddings_csv(model: ConceptModel, sequence: TaskSequence, filename: str) -> int:
    """
    Encodes the test split of every task and writes one row per sample:
    ``task_id, class_label, z_1..z_f``.

    :returns: Number of rows written.
    """
    fieldnames = ["task_id", "class_label"] + [
        f"z_{j}" for j in range(1, model.embedding_dim + 1)
    ]
    rows = 0
    with open(filename, mode="w", encoding="utf-8", newline="") as file:
        writer = csv.writer(file)
        writer.writerow(fieldnames)
        for task_id, task in enumerate(sequence, start=1):
            embeddings = model.encode(task.test_x)
            for label, z in zip(task.test_y.tolist(), embeddings.tolist()):
                writer.writerow([task_id, label] + z)
                rows += 1
    logger.info("Saved %d embeddings to %s", rows, filename)
    return rows


def pseudo_image_grid(x: np.ndarray) -> np.ndarray:
    """
    Tiles flattened square images into an 8-bit grid with ``ceil(sqrt(n))``
    columns; unused tiles stay black.

    :raises ValidationError: If the input dimension is not a perfect square.
    """
    n, d = x.shape
    side = math.isqrt(d)
    if side * side != d:
        raise ValidationError(f"input dimension {d} is not a square image")
    if n == 0:
        return np.zeros((0, 0), dtype=np.uint8)
    columns = math.ceil(math.sqrt(n))
    grid_rows = math.ceil(n / columns)
    pixels = np.rint(np.clip(x, 0.0, 1.0) * 255).astype(np.uint8)
    grid = np.zeros((grid_rows * side, columns * side), dtype=np.uint8)
    for index, image in enumerate(pixels):
        row, column = divmod(index, columns)
        grid[row * side : (row + 1) * side, column * side : (column + 1) * side] = image.reshape(
            side, side
        )
    return grid


def save_pgm(grid: np.ndarray, filename: str) -> str:
    """Binary (P5) 8-bit portable graymap."""
    height, width = grid.shape
    with open(filename, mode="wb") as file:
        file.write(f"P5\n{width} {height}\n255\n".encode("ascii"))
        file.write(np.ascontiguousarray(grid, dtype=np.uint8).tobytes())
    return filename


def save_pseudo_export(pseudo: PseudoDataset, filename: str) -> str:
    """
    Writes the pseudo-images as a PGM grid and their labels to
    ``<filename>.labels.csv`` (``index, class_label``).

    :returns: The labels file path.
    """
    save_pgm(pseudo_image_grid(pseudo.x_er), filename)
    labels_file = f"{filename}.labels.csv"
    with open(labels_file, mode="w", encoding="utf-8", newline="") as file:
        writer = csv.DictWriter(file, fieldnames=["index", "class_label"])
        writer.writeheader()
        for index, label in enumerate(pseudo.y_er.tolist()):
            writer.writerow({"index": index, "class_label": label})
    logger.info("Saved %d pseudo-images to %s and labels to %s", len(pseudo), filename, labels_file)
    return labels_file
