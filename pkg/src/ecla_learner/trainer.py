"""
Continual Trainer
=================

Runs a task sequence with the concept-learning algorithm (ECLA) or one of
its comparison methods and records the accuracy matrix and learning curves.

- ECLA: task 1 by the combined loss, a labeled mixture fitted on its
  embeddings; every later task by the replay + distribution-matching
  objective on its few labels and unlabeled data, followed by a mixture
  update. Pseudo-data is decoded by the model as it stood when the
  task began.
- CLEER: ECLA with every later task fully labeled.
- BP: every task by the combined loss on its labeled points only.
- FR: task t by the combined loss on the stored, fully labeled data of
  tasks 1..t.

All methods share the first-task training and take the same number of
optimizer steps per task, so runs from the same initial model are paired.

Example usage:
--------------
    from ecla_learner.trainer import ContinualTrainer, TrainConfig, forgetting_metrics

    result = ContinualTrainer(TrainConfig(), sequence).run(model)
    print(forgetting_metrics(result.matrix))

Dependencies:
-------------
- numpy

License:
--------
MIT License
"""

import math
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .checkpoint import save_gmm, save_model
from .exceptions import ValidationError
from .gmm import UNLABELED, GmmModel
from .logger import get_logger
from .model import ConceptModel, LossWeights, loss_ecla, loss_task1
from .nn_core import SgdConfig, SgdOptimizer
from .replay import PseudoDataset, generate
from .swd import ProjectionSet, conditional_swd
from .tasks import TaskDataset, TaskSequence


class Method(str, Enum):
    """Training method for a task sequence."""

    ECLA = "ecla"
    BP = "bp"
    FR = "fr"
    CLEER = "cleer"


class ReplayMode(str, Enum):
    """When pseudo-data is regenerated while learning a task."""

    PER_EPOCH = "per_epoch"
    PER_TASK = "per_task"


@dataclass(frozen=True)
class TrainConfig:
    """
    Hyperparameters of a sequence run.

    :param first_task_epochs: Epochs on task 1; ``None`` uses ``epochs_per_task``.
    :param n_er: Pseudo-dataset size; ``None`` uses the current task's
        training-set size and 0 turns replay (and the matching terms) off.
    :param em_iters: Semi-supervised passes of the mixture update.
    :param eval_every: Learning-curve cadence in optimizer steps.
    :param checkpoint_dir: Where per-task checkpoints go; ``None`` disables them.
    """

    method: Method = Method.ECLA
    epochs_per_task: int = 20
    first_task_epochs: Optional[int] = None
    sgd: SgdConfig = field(default_factory=SgdConfig)
    weights: LossWeights = field(default_factory=LossWeights)
    num_projections: int = 50
    n_er: Optional[int] = None
    em_iters: int = 1
    eval_every: int = 50
    seed: int = 0
    replay_mode: ReplayMode = ReplayMode.PER_EPOCH
    stratified_replay: bool = True
    checkpoint_dir: Optional[str] = None

    def __post_init__(self):
        object.__setattr__(self, "method", Method(self.method))
        object.__setattr__(self, "replay_mode", ReplayMode(self.replay_mode))
        checks = {
            "epochs_per_task": self.epochs_per_task >= 0,
            "first_task_epochs": self.first_task_epochs is None or self.first_task_epochs >= 0,
            "num_projections": self.num_projections >= 1,
            "em_iters": self.em_iters >= 1,
            "eval_every": self.eval_every >= 1,
            "n_er": self.n_er is None or self.n_er >= 0,
            "seed": self.seed >= 0,
        }
        bad = [name for name, ok in checks.items() if not ok]
        if bad:
            raise ValidationError(f"invalid training settings: {', '.join(bad)}")


class CurvePoint(NamedTuple):
    step: int
    learning_task: int
    eval_task: int
    accuracy: float


class AccuracyMatrix:
    """
    ``entries[t-1, s-1]`` = test accuracy on task s right after finishing
    task t (s <= t, NaN above the diagonal), plus dense learning curves and
    the accuracy on each task just before its training started.
    """

    def __init__(self, num_tasks: int):
        self.entries = np.full((num_tasks, num_tasks), np.nan)
        self.curves: List[CurvePoint] = []
        self.jumpstart: Dict[int, float] = {}

    @property
    def num_tasks(self) -> int:
        return self.entries.shape[0]

    @property
    def completed(self) -> int:
        """Number of tasks whose end-of-task row has been recorded."""
        filled = ~np.isnan(np.diag(self.entries))
        return int(filled.sum())

    def record(self, learning_task: int, accuracies) -> None:
        accuracies = np.asarray(accuracies, dtype=np.float64)
        if accuracies.shape[0] != learning_task:
            raise ValidationError(
                f"task {learning_task} needs {learning_task} accuracies, got {accuracies.shape[0]}"
            )
        self.entries[learning_task - 1, :learning_task] = accuracies

    def add_curve(self, step: int, learning_task: int, accuracies) -> None:
        for eval_task, accuracy in enumerate(accuracies, start=1):
            self.curves.append(CurvePoint(step, learning_task, eval_task, float(accuracy)))

    def row(self, learning_task: int) -> np.ndarray:
        return self.entries[learning_task - 1, :learning_task].copy()


class ForgettingMetrics(NamedTuple):
    final_avg: float
    avg_forgetting: float


@dataclass
class RunResult:
    """Trained model, final mixture (ECLA/CLEER only), accuracy matrix and loss history."""

    model: ConceptModel
    gmm: Optional[GmmModel]
    matrix: AccuracyMatrix
    loss_history: List[Dict[str, float]] = field(default_factory=list)


def evaluate(model: ConceptModel, sequence: TaskSequence, upto_t: int) -> np.ndarray:
    """
    Argmax accuracy on the test split of tasks 1..upto_t.

    :raises ValidationError: If a task has an empty test split.
    """
    accuracies = []
    for task in sequence.tasks[:upto_t]:
        if task.test_y.shape[0] == 0:
            raise ValidationError(f"{task.name} has an empty test split")
        accuracies.append(float(np.mean(model.predict(task.test_x) == task.test_y)))
    return np.array(accuracies)


def forgetting_metrics(matrix: AccuracyMatrix) -> ForgettingMetrics:
    """
    Final average accuracy and average forgetting over the last recorded row.

    Forgetting of task s is ``max_{t >= s} A[t][s] - A[T][s]``, averaged over
    s < T; it is 0 when only one task has been learned.
    """
    last = matrix.completed
    if last == 0:
        raise ValidationError("the accuracy matrix has no completed task")
    final = matrix.row(last)
    drops = [
        np.nanmax(matrix.entries[s - 1 : last, s - 1]) - final[s - 1] for s in range(1, last)
    ]
    return ForgettingMetrics(float(np.mean(final)), float(np.mean(drops)) if drops else 0.0)


def concept_alignment(
    model: ConceptModel,
    sequence: TaskSequence,
    upto_t: int,
    projections: ProjectionSet,
    rng: np.random.Generator,
) -> float:
    """
    Mean class-conditional sliced distance between the test embeddings of
    tasks 2..upto_t and those of task 1. Zero for a single task.
    """
    if upto_t < 2:
        return 0.0
    first = sequence[0]
    z_first = model.encode(first.test_x)
    distances = [
        conditional_swd(model.encode(task.test_x), task.test_y, z_first, first.test_y, projections, rng)
        for task in sequence.tasks[1:upto_t]
    ]
    return float(np.mean(distances))


def check_class_coverage(task: TaskDataset, classes) -> None:
    """:raises ValidationError: If a class has no labeled training point in ``task``."""
    present = set(task.train_y[task.labeled_idx].tolist())
    missing = sorted(set(int(c) for c in classes) - present)
    if missing:
        raise ValidationError(f"{task.name}: few labeled points are missing classes {missing}")


class ContinualTrainer:
    """
    Trains one model through a task sequence with the configured method.

    :param config: Training settings.
    :param sequence: Tasks, in learning order.
    """

    def __init__(self, config: TrainConfig, sequence: TaskSequence):
        self.config = config
        self.sequence = sequence
        self.matrix = AccuracyMatrix(len(sequence))
        self.loss_history: List[Dict[str, float]] = []
        self.step = 0
        self.batch_rng = np.random.default_rng(config.sgd.seed)
        self.replay_rng = np.random.default_rng(config.seed)
        self.logger = get_logger(__name__)

    @property
    def batch_size(self) -> int:
        return self.config.sgd.minibatch_size

    def _steps_per_epoch(self, task: TaskDataset) -> int:
        return max(1, math.ceil(task.num_train / self.batch_size))

    def _after_step(self, model: ConceptModel, t: int) -> None:
        self.step += 1
        if self.step % self.config.eval_every == 0:
            self.matrix.add_curve(self.step, t, evaluate(model, self.sequence, t))

    def _finish_task(self, model: ConceptModel, gmm: Optional[GmmModel], t: int) -> None:
        accuracies = evaluate(model, self.sequence, t)
        self.matrix.record(t, accuracies)
        if not self.matrix.curves or self.matrix.curves[-1].step != self.step:
            self.matrix.add_curve(self.step, t, accuracies)
        self.logger.info(
            "Finished task %d (%s) at step %d; accuracies: %s",
            t,
            self.sequence[t - 1].name,
            self.step,
            ", ".join(f"{a:.4f}" for a in accuracies),
        )
        if self.config.checkpoint_dir:
            save_model(model, os.path.join(self.config.checkpoint_dir, f"task_{t}_model.npz"))
            if gmm is not None:
                save_gmm(gmm, os.path.join(self.config.checkpoint_dir, f"task_{t}_gmm.npz"))

    def _log_epoch(self, t: int, epoch: int, terms: List[Dict[str, float]]) -> None:
        if not terms:
            return
        summary = {key: float(np.mean([entry[key] for entry in terms])) for key in terms[0]}
        self.loss_history.append({"task": t, "epoch": epoch, **summary})
        self.logger.info(
            "Task %d epoch %d: %s",
            t,
            epoch,
            ", ".join(f"{key}={value:.5f}" for key, value in summary.items()),
        )

    def _combined_loss_epochs(
        self,
        model: ConceptModel,
        t: int,
        x: np.ndarray,
        y: np.ndarray,
        steps: int,
        epochs: Optional[int] = None,
    ) -> None:
        """Minibatch SGD on the combined loss over the pool ``(x, y)``."""
        optimizer = SgdOptimizer(self.config.sgd)
        size = x.shape[0]
        epochs = self.config.epochs_per_task if epochs is None else epochs
        for epoch in range(1, epochs + 1):
            order = self.batch_rng.permutation(size)
            terms = []
            for index in range(steps):
                rows = order[(index * self.batch_size + np.arange(self.batch_size)) % size]
                rows = np.unique(rows) if size < self.batch_size else rows
                result = loss_task1(model, x[rows], y[rows], self.config.weights)
                optimizer.step(model.stacks())
                terms.append({"loss": result.loss, **result.terms})
                self._after_step(model, t)
            self._log_epoch(t, epoch, terms)

    def train_first_task(self, model: ConceptModel) -> Tuple[ConceptModel, GmmModel]:
        """
        Learns task 1 with the combined loss on all of its labels, then fits
        one mixture component per class on its training embeddings.
        """
        task = self.sequence[0]
        self.logger.info("Learning task 1 (%s) with %d samples.", task.name, task.num_train)
        epochs = self.config.first_task_epochs
        self._combined_loss_epochs(
            model, 1, task.train_x, task.train_y, self._steps_per_epoch(task), epochs
        )
        gmm = GmmModel.fit_labeled(
            model.encode(task.train_x), task.train_y, class_labels=np.arange(task.num_classes)
        )
        self._finish_task(model, gmm if self._uses_mixture else None, 1)
        return model, gmm

    @property
    def _uses_mixture(self) -> bool:
        return self.config.method in (Method.ECLA, Method.CLEER)

    def _record_jumpstart(self, model: ConceptModel, t: int) -> None:
        accuracies = evaluate(model, self.sequence, t)
        self.matrix.jumpstart[t] = float(accuracies[-1])
        self.matrix.add_curve(self.step, t, accuracies)

    def _labeled_pools(self, task: TaskDataset) -> List[np.ndarray]:
        labels = task.train_y[task.labeled_idx]
        return [task.labeled_idx[labels == c] for c in range(task.num_classes)]

    def _labeled_batch(self, pools: List[np.ndarray]) -> np.ndarray:
        per_class = max(1, self.batch_size // len(pools))
        picks = [
            self.batch_rng.choice(pool, size=min(per_class, pool.size), replace=False)
            for pool in pools
            if pool.size
        ]
        return np.concatenate(picks)

    def train_subsequent_task(
        self, model: ConceptModel, gmm: GmmModel, t: int
    ) -> Tuple[ConceptModel, GmmModel]:
        """
        Learns task t >= 2: pseudo-data replay plus embedding-distribution
        matching on the few labels and the unlabeled data, then updates the
        mixture with the task's embeddings and the re-encoded pseudo-data.

        Pseudo-data is always decoded by a copy of the model taken when the
        task starts, so replay targets stay fixed while the decoder learns
        the new domain. With ``n_er == 0`` the task is learned from its
        labeled points alone.
        """
        task = self.sequence[t - 1]
        if self.config.method is Method.CLEER:
            task = task.fully_labeled()
        check_class_coverage(task, gmm.class_labels)
        n_er = self._replay_size(task, gmm)
        pools = self._labeled_pools(task)
        unlabeled = task.unlabeled_idx
        self.logger.info(
            "Learning task %d (%s): %d labeled, %d unlabeled, %d pseudo samples.",
            t,
            task.name,
            task.labeled_idx.size,
            unlabeled.size,
            n_er,
        )
        self._record_jumpstart(model, t)

        generator = model.copy()
        optimizer = SgdOptimizer(self.config.sgd)
        steps = self._steps_per_epoch(task)
        pseudo: Optional[PseudoDataset] = None
        for epoch in range(1, self.config.epochs_per_task + 1):
            if n_er and (pseudo is None or self.config.replay_mode is ReplayMode.PER_EPOCH):
                pseudo = self._generate(gmm, generator, n_er)
            replay_order = self.batch_rng.permutation(n_er)
            terms = []
            for index in range(steps):
                labeled_rows = self._labeled_batch(pools)
                labeled = (task.train_x[labeled_rows], task.train_y[labeled_rows])
                if pseudo is None:
                    result = loss_task1(model, *labeled, self.config.weights)
                else:
                    unlabeled_rows = (
                        self.batch_rng.choice(
                            unlabeled, size=min(self.batch_size, unlabeled.size), replace=False
                        )
                        if unlabeled.size
                        else unlabeled
                    )
                    replay_rows = replay_order[
                        (index * self.batch_size + np.arange(min(self.batch_size, n_er))) % n_er
                    ]
                    result = loss_ecla(
                        model,
                        labeled,
                        task.train_x[unlabeled_rows],
                        pseudo.subset(replay_rows).as_tuple(),
                        gmm,
                        self.config.weights,
                        self.config.num_projections,
                        self.replay_rng,
                        latent_targets=(pseudo.z_er, pseudo.y_er),
                    )
                optimizer.step(model.stacks())
                terms.append({"loss": result.loss, **result.terms})
                self._after_step(model, t)
            self._log_epoch(t, epoch, terms)

        if n_er and pseudo is None:
            pseudo = self._generate(gmm, generator, n_er)
        y_current = np.full(task.num_train, UNLABELED, dtype=np.int64)
        y_current[task.labeled_idx] = task.train_y[task.labeled_idx]
        if pseudo is None:
            z_replay, y_replay = np.zeros((0, gmm.dim)), np.zeros(0, dtype=np.int64)
        else:
            z_replay, y_replay = model.encode(pseudo.x_er), pseudo.y_er
        gmm = gmm.update_after_task(
            model.encode(task.train_x),
            y_current,
            z_replay,
            y_replay,
            iters=self.config.em_iters,
        )
        self._finish_task(model, gmm, t)
        return model, gmm

    def _replay_size(self, task: TaskDataset, gmm: GmmModel) -> int:
        n_er = task.num_train if self.config.n_er is None else self.config.n_er
        if n_er == 0:
            weights = self.config.weights
            if weights.eta or weights.lambda_:
                self.logger.warning(
                    "n_er is 0: skipping replay and both matching terms (eta=%s, lambda=%s).",
                    weights.eta,
                    weights.lambda_,
                )
            return 0
        return max(n_er, gmm.num_components)

    def _generate(self, gmm: GmmModel, generator: ConceptModel, n_er: int) -> PseudoDataset:
        return generate(
            gmm, generator, n_er, self.replay_rng, stratified=self.config.stratified_replay
        )

    def train_bp_task(self, model: ConceptModel, t: int) -> ConceptModel:
        """Combined loss on task t's labeled points only."""
        task = self.sequence[t - 1]
        self._record_jumpstart(model, t)
        rows = task.labeled_idx
        self._combined_loss_epochs(
            model, t, task.train_x[rows], task.train_y[rows], self._steps_per_epoch(task)
        )
        self._finish_task(model, None, t)
        return model

    def train_fr_task(self, model: ConceptModel, t: int) -> ConceptModel:
        """Combined loss on the stored, fully labeled data of tasks 1..t."""
        stored = self.sequence.tasks[:t]
        self._record_jumpstart(model, t)
        x = np.vstack([task.train_x for task in stored])
        y = np.concatenate([task.train_y for task in stored])
        self._combined_loss_epochs(model, t, x, y, self._steps_per_epoch(self.sequence[t - 1]))
        self._finish_task(model, None, t)
        return model

    def run(self, model: ConceptModel) -> RunResult:
        """
        Trains ``model`` (in place) through the whole sequence.

        :raises ValidationError: Before any training, if an ECLA task lacks a
            labeled point for some class.
        """
        method = self.config.method
        if method is Method.ECLA:
            for task in self.sequence.tasks[1:]:
                check_class_coverage(task, range(self.sequence.num_classes))
        self.logger.info(
            "Running %s on %d tasks (seed %d).", method.value, len(self.sequence), self.config.seed
        )
        model, gmm = self.train_first_task(model)
        for t in range(2, len(self.sequence) + 1):
            if self._uses_mixture:
                model, gmm = self.train_subsequent_task(model, gmm, t)
            elif method is Method.BP:
                self.train_bp_task(model, t)
            else:
                self.train_fr_task(model, t)
        return RunResult(
            model, gmm if self._uses_mixture else None, self.matrix, self.loss_history
        )


def train_first_task(
    model: ConceptModel, task1: TaskDataset, config: TrainConfig
) -> Tuple[ConceptModel, GmmModel]:
    """Learns a single first task; see :meth:`ContinualTrainer.train_first_task`."""
    return ContinualTrainer(config, TaskSequence((task1,))).train_first_task(model)


def train_subsequent_task(
    model: ConceptModel, gmm: GmmModel, task_t: TaskDataset, config: TrainConfig
) -> Tuple[ConceptModel, GmmModel]:
    """Learns one later task; see :meth:`ContinualTrainer.train_subsequent_task`."""
    return ContinualTrainer(config, TaskSequence((task_t,))).train_subsequent_task(
        model, gmm, 1
    )


def run_method(model: ConceptModel, sequence: TaskSequence, config: TrainConfig) -> RunResult:
    return ContinualTrainer(config, sequence).run(model)


def run_ecla(model: ConceptModel, sequence: TaskSequence, config: TrainConfig) -> AccuracyMatrix:
    return run_method(model, sequence, replace(config, method=Method.ECLA)).matrix


def run_baseline_bp(
    model: ConceptModel, sequence: TaskSequence, config: TrainConfig
) -> AccuracyMatrix:
    return run_method(model, sequence, replace(config, method=Method.BP)).matrix


def run_baseline_fr(
    model: ConceptModel, sequence: TaskSequence, config: TrainConfig
) -> AccuracyMatrix:
    return run_method(model, sequence, replace(config, method=Method.FR)).matrix


def run_baseline_cleer(
    model: ConceptModel, sequence: TaskSequence, config: TrainConfig
) -> AccuracyMatrix:
    return run_method(model, sequence, replace(config, method=Method.CLEER)).matrix
