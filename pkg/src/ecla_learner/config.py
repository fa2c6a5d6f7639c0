"""
Experiment Configuration
========================

Loads JSON experiment files into frozen dataclasses, validates them and
builds the task sequence they describe.

Example usage:
--------------
    from ecla_learner.config import load_config, validate_config, build_sequence

    cfg = load_config("experiments/permuted_mnist.json")
    validate_config(cfg)
    sequence = build_sequence(cfg)

A minimal synthetic experiment:

    {
        "schema_version": 1,
        "benchmark": "synthetic",
        "method": "ecla",
        "num_tasks": 3,
        "labels_per_class": 5,
        "seed": 0,
        "data": {"synthetic": {"k": 3, "d": 16, "n": 300}},
        "train": {"epochs_per_task": 5, "sgd": {"learning_rate": 0.05}}
    }

Dependencies:
-------------
- numpy

License:
--------
MIT License
"""

import dataclasses
import json
import os
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, Optional, Tuple

from .exceptions import ValidationError
from .logger import get_logger
from .model import Architecture, LossWeights
from .nn_core import SgdConfig
from .tasks import (
    TaskSequence,
    apply_few_shot,
    build_cross_domain_sequence,
    build_permuted_sequence,
    load_idx,
    make_synthetic_sequence,
    resize_images,
    subset_task,
)
from .trainer import Method, TrainConfig

logger = get_logger(__name__)

CONFIG_SCHEMA_VERSION = 1
OUTPUT_ROOT_ENV = "ECLA_OUTPUT_ROOT"
DEFAULT_OUTPUT_ROOT = "runs"


class Benchmark(str, Enum):
    PERMUTED = "permuted"
    CROSS_DOMAIN = "cross_domain"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class DomainPaths:
    """IDX files of one domain."""

    train_images: str
    train_labels: str
    test_images: str
    test_labels: str
    name: Optional[str] = None

    def paths(self) -> Tuple[str, ...]:
        return (self.train_images, self.train_labels, self.test_images, self.test_labels)


@dataclass(frozen=True)
class SyntheticConfig:
    k: int = 3
    d: int = 16
    n: int = 300
    n_test: Optional[int] = None
    domain_shift: float = 0.5
    noise: float = 1.0
    separation: float = 3.0


@dataclass(frozen=True)
class DataConfig:
    domains: Tuple[DomainPaths, ...] = ()
    train_subset: Optional[int] = None
    test_subset: Optional[int] = None
    resize_side: Optional[int] = None
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)


@dataclass(frozen=True)
class ArtifactConfig:
    """Optional S3 destination for finished runs."""

    bucket: Optional[str] = None
    prefix: str = ""


@dataclass(frozen=True)
class ExperimentConfig:
    benchmark: Benchmark
    method: Method
    num_tasks: int
    labels_per_class: Optional[int]
    seed: int
    output_dir: str
    data: DataConfig
    model: Architecture
    train: TrainConfig
    artifacts: ArtifactConfig


def _check_keys(section: Dict[str, Any], allowed, where: str) -> None:
    if not isinstance(section, dict):
        raise ValidationError(f"{where} must be a JSON object")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ValidationError(f"unknown keys in {where}: {', '.join(unknown)}")


def _field_names(cls) -> Tuple[str, ...]:
    return tuple(item.name for item in dataclasses.fields(cls))


def _build(cls, section: Dict[str, Any], where: str):
    _check_keys(section, _field_names(cls), where)
    try:
        return cls(**section)
    except (TypeError, ValueError) as error:
        raise ValidationError(f"invalid {where}: {error}") from error


def _weights_from_json(section: Dict[str, Any]) -> LossWeights:
    _check_keys(section, ("gamma", "eta", "lambda"), "train.weights")
    renamed = {("lambda_" if key == "lambda" else key): value for key, value in section.items()}
    return _build(LossWeights, renamed, "train.weights")


TRAIN_KEYS = (
    "epochs_per_task",
    "first_task_epochs",
    "num_projections",
    "n_er",
    "em_iters",
    "eval_every",
    "replay_mode",
    "stratified_replay",
    "sgd",
    "weights",
)
TRAIN_COUNT_KEYS = (
    "epochs_per_task",
    "first_task_epochs",
    "num_projections",
    "n_er",
    "em_iters",
    "eval_every",
)


def _train_from_json(section: Dict[str, Any], method: Method, seed: int) -> TrainConfig:
    _check_keys(section, TRAIN_KEYS, "train")
    sgd_section = dict(section.get("sgd", {}))
    for key in TRAIN_COUNT_KEYS:
        if key in section:
            _integer(section, key, None)
    for key in ("minibatch_size", "seed"):
        if key in sgd_section:
            _integer(sgd_section, key, None)
    sgd_section.setdefault("seed", seed)
    values = {key: value for key, value in section.items() if key not in ("sgd", "weights")}
    try:
        return TrainConfig(
            method=method,
            seed=seed,
            sgd=_build(SgdConfig, sgd_section, "train.sgd"),
            weights=_weights_from_json(section.get("weights", {})),
            **values,
        )
    except ValidationError:
        raise
    except (TypeError, ValueError) as error:
        raise ValidationError(f"invalid train: {error}") from error


def _data_from_json(section: Dict[str, Any]) -> DataConfig:
    _check_keys(section, _field_names(DataConfig), "data")
    domains = tuple(
        _build(DomainPaths, domain, f"data.domains[{index}]")
        for index, domain in enumerate(section.get("domains", []))
    )
    synthetic = _build(SyntheticConfig, section.get("synthetic", {}), "data.synthetic")
    rest = {key: value for key, value in section.items() if key not in ("domains", "synthetic")}
    return _build(DataConfig, {"domains": domains, "synthetic": synthetic, **rest}, "data")


def _integer(raw: Dict[str, Any], key: str, default: Optional[int]) -> Optional[int]:
    value = raw.get(key, default)
    if value is None and default is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(f"{key} must be an integer, got {value!r}")
    return value


def resolve_output_dir(output_dir: Optional[str], default_name: str) -> str:
    """
    Places relative (or absent) output directories under the output root,
    taken from ``ECLA_OUTPUT_ROOT`` when set.
    """
    root = os.environ.get(OUTPUT_ROOT_ENV, DEFAULT_OUTPUT_ROOT)
    return os.path.abspath(os.path.join(root, output_dir or default_name))


TOP_LEVEL_KEYS = (
    "schema_version",
    "benchmark",
    "method",
    "num_tasks",
    "labels_per_class",
    "seed",
    "output_dir",
    "data",
    "model",
    "train",
    "artifacts",
)


def parse_config(raw: Dict[str, Any], seed: Optional[int] = None) -> ExperimentConfig:
    """
    Builds an :class:`ExperimentConfig` from a decoded JSON document.

    :param seed: Overrides the document's ``seed`` when given.
    :raises ValidationError: On a wrong schema version, unknown keys or
        invalid values.
    """
    _check_keys(raw, TOP_LEVEL_KEYS, "config")
    version = raw.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ValidationError(
            f"schema_version must be {CONFIG_SCHEMA_VERSION}, got {version!r}"
        )
    try:
        benchmark = Benchmark(raw.get("benchmark", Benchmark.SYNTHETIC.value))
        method = Method(raw.get("method", Method.ECLA.value))
    except ValueError as error:
        raise ValidationError(str(error)) from error
    seed = _integer(raw, "seed", 0) if seed is None else seed
    num_tasks = _integer(raw, "num_tasks", 2)
    labels_per_class = _integer(raw, "labels_per_class", None)
    if num_tasks < 1:
        raise ValidationError(f"num_tasks must be >= 1, got {num_tasks}")
    if labels_per_class is not None and labels_per_class < 1:
        raise ValidationError(f"labels_per_class must be >= 1, got {labels_per_class}")
    if seed < 0:
        raise ValidationError(f"seed must be >= 0, got {seed}")

    data = _data_from_json(raw.get("data", {}))
    if benchmark is Benchmark.PERMUTED and len(data.domains) != 1:
        raise ValidationError(f"permuted benchmark needs one domain, got {len(data.domains)}")
    if benchmark is Benchmark.CROSS_DOMAIN and len(data.domains) != num_tasks:
        raise ValidationError(
            f"cross_domain benchmark needs one domain per task: "
            f"{len(data.domains)} domains for {num_tasks} tasks"
        )
    model_section = raw.get("model", {})
    _check_keys(model_section, _field_names(Architecture), "model")
    return ExperimentConfig(
        benchmark=benchmark,
        method=method,
        num_tasks=num_tasks,
        labels_per_class=labels_per_class,
        seed=seed,
        output_dir=resolve_output_dir(
            raw.get("output_dir"), f"{benchmark.value}-{method.value}-seed{seed}"
        ),
        data=data,
        model=_build(Architecture, model_section, "model"),
        train=_train_from_json(raw.get("train", {}), method, seed),
        artifacts=_build(ArtifactConfig, raw.get("artifacts", {}), "artifacts"),
    )


def load_config(path: str, seed: Optional[int] = None) -> ExperimentConfig:
    """
    Reads and parses a JSON experiment file.

    :raises ValidationError: If the file is missing or is not valid JSON.
    """
    if not os.path.isfile(path):
        raise ValidationError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as file:
            raw = json.load(file)
    except json.JSONDecodeError as error:
        raise ValidationError(f"{path} is not valid JSON: {error}") from error
    cfg = parse_config(raw, seed=seed)
    logger.info("Loaded %s experiment config from %s", cfg.benchmark.value, path)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    """
    Checks that every referenced dataset file exists and that the output
    directory can be created and written.

    :raises ValidationError: Naming the first offending path.
    """
    if cfg.benchmark is not Benchmark.SYNTHETIC:
        for domain in cfg.data.domains:
            for path in domain.paths():
                if not os.path.isfile(path):
                    raise ValidationError(f"dataset file not found: {path}")
    if cfg.method is Method.ECLA and cfg.num_tasks > 1 and cfg.labels_per_class is None:
        logger.warning("labels_per_class is unset; later tasks are fully labeled.")
    try:
        os.makedirs(cfg.output_dir, exist_ok=True)
    except OSError as error:
        raise ValidationError(f"cannot create output directory {cfg.output_dir}: {error}") from error
    if not os.access(cfg.output_dir, os.W_OK):
        raise ValidationError(f"output directory is not writable: {cfg.output_dir}")


def _plain(value):
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {key: _plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(item) for item in value]
    return value


def to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    """Normalised JSON-ready form of ``cfg``; :func:`parse_config` accepts it back."""
    document = _plain(dataclasses.asdict(cfg))
    train = document["train"]
    for key in ("method", "seed", "checkpoint_dir"):
        train.pop(key)
    train["weights"]["lambda"] = train["weights"].pop("lambda_")
    if train["sgd"]["seed"] == document["seed"]:
        train["sgd"].pop("seed")
    document["schema_version"] = CONFIG_SCHEMA_VERSION
    return document


def write_config_echo(cfg: ExperimentConfig, path: str) -> str:
    with open(path, "w", encoding="utf-8") as file:
        json.dump(to_dict(cfg), file, sort_keys=True, indent=4)
    logger.info("Wrote config echo to %s", path)
    return path


def with_checkpoint_dir(cfg: ExperimentConfig, checkpoint_dir: str) -> ExperimentConfig:
    return replace(cfg, train=replace(cfg.train, checkpoint_dir=checkpoint_dir))


def _load_domain(cfg: ExperimentConfig, domain: DomainPaths, index: int):
    task = load_idx(*domain.paths(), name=domain.name)
    task = subset_task(task, cfg.data.train_subset, cfg.data.test_subset, cfg.seed + index)
    if cfg.data.resize_side is not None:
        task = resize_images(task, cfg.data.resize_side)
    return task


def build_sequence(cfg: ExperimentConfig) -> TaskSequence:
    """
    The task sequence of ``cfg``, with few-shot splits applied to tasks
    t >= 2 when ``labels_per_class`` is set.
    """
    if cfg.benchmark is Benchmark.SYNTHETIC:
        recipe = cfg.data.synthetic
        sequence = make_synthetic_sequence(
            recipe.k,
            recipe.d,
            recipe.n,
            cfg.num_tasks,
            recipe.domain_shift,
            cfg.seed,
            n_test=recipe.n_test,
            noise=recipe.noise,
            separation=recipe.separation,
        )
    elif cfg.benchmark is Benchmark.PERMUTED:
        base = _load_domain(cfg, cfg.data.domains[0], 0)
        sequence = build_permuted_sequence(base, cfg.num_tasks, cfg.seed)
    else:
        sequence = build_cross_domain_sequence(
            [_load_domain(cfg, domain, index) for index, domain in enumerate(cfg.data.domains)]
        )
    if cfg.labels_per_class is not None:
        sequence = apply_few_shot(sequence, cfg.labels_per_class, cfg.seed)
    logger.info(
        "Built %d-task %s sequence (d=%d, k=%d)",
        len(sequence),
        cfg.benchmark.value,
        sequence.input_dim,
        sequence.num_classes,
    )
    return sequence
