"""
ECLA Learner
============

Command-line entry point: runs continual-learning experiments described by
JSON configs and exports embeddings and pseudo-images from checkpoints.

Example usage:
--------------
    # Run an experiment; writes metrics.csv, matrix.csv, config.json,
    # summary.json and checkpoints/ under the config's output directory
    python -m ecla_learner run experiments/permuted_mnist.json --seed 3

    # Check dataset paths and the output directory without training
    python -m ecla_learner validate-config experiments/permuted_mnist.json

    # Encode every task's test split with a checkpoint
    python -m ecla_learner export-embeddings experiments/permuted_mnist.json \\
        --checkpoint runs/permuted-ecla-seed0/checkpoints/task_5_model.npz --out z.csv

    # Decode 100 mixture samples into a PGM grid plus labels
    python -m ecla_learner export-pseudo runs/.../task_5_model.npz \\
        --gmm runs/.../task_5_gmm.npz --n 100 --out pseudo.pgm

Exit codes: 0 on success, 1 on validation or library errors, 2 on usage errors.

Dependencies:
-------------
- numpy
- boto3 (only when a run is archived to S3)

License:
--------
MIT License
"""

import argparse
import os
import sys
from typing import Any, Dict, Optional, Sequence

import numpy as np
from botocore.exceptions import BotoCoreError, ClientError

from ecla_learner.artifact_store import RunArtifactStore
from ecla_learner.auth import verify_aws_credentials
from ecla_learner.checkpoint import load_gmm, load_model
from ecla_learner.config import (
    ExperimentConfig,
    build_sequence,
    load_config,
    validate_config,
    with_checkpoint_dir,
    write_config_echo,
)
from ecla_learner.exceptions import DimensionError, EclaError, ValidationError
from ecla_learner.exports import (
    save_embeddings_csv,
    save_matrix_csv,
    save_metrics_csv,
    save_pseudo_export,
    save_summary_json,
)
from ecla_learner.logger import configure_logging, get_logger
from ecla_learner.model import ConceptModel
from ecla_learner.replay import PseudoDataset, generate
from ecla_learner.swd import ProjectionSet
from ecla_learner.tasks import TaskSequence
from ecla_learner.trainer import RunResult, concept_alignment, forgetting_metrics, run_method

METRICS_CSV = "metrics.csv"
MATRIX_CSV = "matrix.csv"
CONFIG_ECHO_JSON = "config.json"
SUMMARY_JSON = "summary.json"
CHECKPOINT_DIR = "checkpoints"

logger = get_logger(__name__)


def build_parser() -> argparse.ArgumentParser:
    """Argument parser with one subcommand per operation."""
    parser = argparse.ArgumentParser(
        prog="ecla_learner",
        description="Continual concept learning with generative replay and distribution matching",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Train a task sequence and write metrics and checkpoints.")
    run.add_argument("config", help="Path to the JSON experiment config.")
    run.add_argument("--seed", type=int, help="Override the config's seed.")

    check = commands.add_parser(
        "validate-config", help="Check a config's dataset paths and output directory."
    )
    check.add_argument("config", help="Path to the JSON experiment config.")

    embeddings = commands.add_parser(
        "export-embeddings", help="Write test-split embeddings of every task to CSV."
    )
    embeddings.add_argument("config", help="Config whose task recipe defines the data.")
    embeddings.add_argument("--checkpoint", required=True, help="Model checkpoint (.npz).")
    embeddings.add_argument("--out", required=True, help="Output CSV path.")
    embeddings.add_argument("--seed", type=int, help="Override the config's seed.")

    pseudo = commands.add_parser(
        "export-pseudo", help="Decode mixture samples into a PGM grid and a labels CSV."
    )
    pseudo.add_argument("checkpoint", help="Model checkpoint (.npz).")
    pseudo.add_argument("--gmm", required=True, help="Mixture checkpoint (.npz).")
    pseudo.add_argument("--n", type=int, required=True, help="Number of pseudo-images.")
    pseudo.add_argument("--out", required=True, help="Output PGM path.")
    pseudo.add_argument("--seed", type=int, default=0, help="Sampling seed.")
    return parser


def build_summary(cfg: ExperimentConfig, sequence: TaskSequence, result: RunResult) -> Dict[str, Any]:
    """Headline numbers of a finished run."""
    metrics = forgetting_metrics(result.matrix)
    rng = np.random.default_rng(cfg.seed)
    projections = ProjectionSet.sample(
        cfg.train.num_projections, result.model.embedding_dim, rng
    )
    last = sequence[len(sequence) - 1]
    return {
        "method": cfg.method.value,
        "benchmark": cfg.benchmark.value,
        "seed": cfg.seed,
        "num_tasks": len(sequence),
        "final_avg": metrics.final_avg,
        "avg_forgetting": metrics.avg_forgetting,
        "jumpstart": result.matrix.jumpstart,
        "concept_alignment": concept_alignment(
            result.model, sequence, len(sequence), projections, rng
        ),
        "gmm_log_likelihood": (
            result.gmm.log_likelihood(result.model.encode(last.train_x))
            if result.gmm is not None
            else None
        ),
    }


def upload_artifacts(cfg: ExperimentConfig) -> None:
    """Archives the run directory to S3; failures are logged only."""
    try:
        if not verify_aws_credentials():
            logger.warning(
                "Skipping upload of %s to bucket %s.", cfg.output_dir, cfg.artifacts.bucket
            )
            return
        store = RunArtifactStore(cfg.artifacts.bucket, cfg.artifacts.prefix)
        store.upload_run(cfg.output_dir)
    except (ClientError, BotoCoreError) as error:
        logger.error("An AWS error occurred while archiving %s: %s", cfg.output_dir, error)
    except Exception as error:  # pylint: disable=W0718
        logger.error("An unexpected error occurred while archiving %s: %s", cfg.output_dir, error)


def cmd_run(config_path: str, seed: Optional[int] = None) -> int:
    """
    Loads and validates the config, trains the configured method and writes
    every run file.

    :returns: Exit code 0.
    """
    cfg = load_config(config_path, seed=seed)
    validate_config(cfg)
    configure_logging(log_dir=cfg.output_dir)
    logger.info("Starting %s run; output directory: %s", cfg.method.value, cfg.output_dir)

    sequence = build_sequence(cfg)
    cfg = with_checkpoint_dir(cfg, os.path.join(cfg.output_dir, CHECKPOINT_DIR))
    write_config_echo(cfg, os.path.join(cfg.output_dir, CONFIG_ECHO_JSON))

    model = ConceptModel.build(
        sequence.input_dim, sequence.num_classes, np.random.default_rng(cfg.seed), cfg.model
    )
    result = run_method(model, sequence, cfg.train)

    save_metrics_csv(result.matrix, os.path.join(cfg.output_dir, METRICS_CSV))
    save_matrix_csv(result.matrix, os.path.join(cfg.output_dir, MATRIX_CSV))
    summary = build_summary(cfg, sequence, result)
    save_summary_json(summary, os.path.join(cfg.output_dir, SUMMARY_JSON))
    logger.info(
        "Finished run: final average accuracy %.4f, average forgetting %.4f",
        summary["final_avg"],
        summary["avg_forgetting"],
    )
    if cfg.artifacts.bucket:
        upload_artifacts(cfg)
    return 0


def cmd_validate_config(config_path: str) -> int:
    cfg = load_config(config_path)
    validate_config(cfg)
    logger.info("Config %s is valid.", config_path)
    return 0


def cmd_export_embeddings(
    config_path: str, checkpoint: str, out_csv: str, seed: Optional[int] = None
) -> int:
    """Encodes the config's task sequence with a checkpoint and writes the CSV."""
    cfg = load_config(config_path, seed=seed)
    model = load_model(checkpoint)
    sequence = build_sequence(cfg)
    if model.input_dim != sequence.input_dim:
        raise DimensionError(
            f"checkpoint input dim {model.input_dim} != task input dim {sequence.input_dim}"
        )
    save_embeddings_csv(model, sequence, out_csv)
    return 0


def cmd_export_pseudo(
    checkpoint: str, gmm_checkpoint: str, n: int, out_path: str, seed: int = 0
) -> int:
    """Decodes ``n`` mixture samples into a PGM grid plus labels sidecar."""
    if n < 0:
        raise ValidationError(f"--n must be >= 0, got {n}")
    model = load_model(checkpoint)
    gmm = load_gmm(gmm_checkpoint)
    if n == 0:
        pseudo = PseudoDataset(
            np.zeros((0, model.input_dim)),
            np.zeros(0, dtype=np.int64),
            np.zeros((0, model.embedding_dim)),
        )
    else:
        pseudo = generate(
            gmm, model, n, np.random.default_rng(seed), stratified=n >= gmm.num_components
        )
    save_pseudo_export(pseudo, out_path)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Parses arguments, dispatches the subcommand and returns its exit code."""
    args = build_parser().parse_args(argv)

    configure_logging()
    logger.info("Running command: %s", args.command)

    try:
        if args.command == "run":
            return cmd_run(args.config, seed=args.seed)
        if args.command == "validate-config":
            return cmd_validate_config(args.config)
        if args.command == "export-embeddings":
            return cmd_export_embeddings(args.config, args.checkpoint, args.out, seed=args.seed)
        return cmd_export_pseudo(args.checkpoint, args.gmm, args.n, args.out, seed=args.seed)
    except EclaError as error:
        logger.error("%s failed: %s", args.command, error)
    except OSError as error:
        logger.error("%s failed with a file error: %s", args.command, error)
    return 1


if __name__ == "__main__":
    sys.exit(main())
