"""
Run Artifact Store
==================

Archives finished run directories (metrics, matrix, config echo, summary and
checkpoints) to an S3 bucket and fetches checkpoints back.

Example usage:
--------------
    from ecla_learner.artifact_store import RunArtifactStore

    store = RunArtifactStore("ml-experiments", prefix="ecla")
    store.upload_run("runs/permuted-ecla-seed0")
    store.download_checkpoint(
        "ecla/permuted-ecla-seed0/checkpoints/task_5_model.npz", "./task_5_model.npz"
    )

Dependencies:
-------------
- boto3

License:
--------
MIT License
"""

import os
from typing import List

import boto3
from boto3.exceptions import S3UploadFailedError
from botocore.exceptions import BotoCoreError, ClientError

from .logger import get_logger


class RunArtifactStore:
    """
    Uploads and lists run directories under ``s3://<bucket>/<prefix>/<run_name>/``.

    Client failures are logged and reported through return values, never
    raised; local run files remain the source of truth.
    """

    def __init__(self, bucket: str, prefix: str = ""):
        self.s3_client = boto3.client("s3")
        self.bucket = bucket
        self.prefix = prefix.strip("/")
        self.logger = get_logger(__name__)

    def _key(self, *parts: str) -> str:
        return "/".join(part for part in (self.prefix, *parts) if part)

    def upload_run(self, run_dir: str) -> List[str]:
        """
        Uploads every file below ``run_dir``.

        :param run_dir: Local run directory; its base name becomes the run name.
        :returns: The object keys that were uploaded, in sorted order.
        """
        run_dir = os.path.normpath(run_dir)
        run_name = os.path.basename(run_dir)
        uploaded: List[str] = []
        for root, dirs, files in os.walk(run_dir):
            dirs.sort()
            for file_name in sorted(files):
                local_path = os.path.join(root, file_name)
                relative = os.path.relpath(local_path, run_dir).replace(os.sep, "/")
                key = self._key(run_name, relative)
                try:
                    self.s3_client.upload_file(local_path, self.bucket, key)
                    uploaded.append(key)
                except (ClientError, BotoCoreError, S3UploadFailedError) as error:
                    self.logger.error(
                        "Failed to upload %s to s3://%s/%s: %s", local_path, self.bucket, key, error
                    )
        self.logger.info(
            "Uploaded %d files of run %s to s3://%s/%s",
            len(uploaded),
            run_name,
            self.bucket,
            self._key(run_name),
        )
        return sorted(uploaded)

    def download_checkpoint(self, key: str, dest_path: str) -> bool:
        """
        Downloads one object (typically a ``.npz`` checkpoint).

        :returns: True on success.
        """
        parent = os.path.dirname(dest_path)
        if parent and not os.path.exists(parent):
            os.makedirs(parent)
        try:
            self.s3_client.download_file(self.bucket, key, dest_path)
        except (ClientError, BotoCoreError) as error:
            self.logger.error(
                "Failed to download s3://%s/%s to %s: %s", self.bucket, key, dest_path, error
            )
            return False
        self.logger.info("Downloaded s3://%s/%s to %s", self.bucket, key, dest_path)
        return True

    def list_runs(self) -> List[str]:
        """
        Lists the run names stored under the prefix.

        :returns: Sorted run names; empty on error.
        """
        base = f"{self.prefix}/" if self.prefix else ""
        runs: List[str] = []
        try:
            paginator = self.s3_client.get_paginator("list_objects_v2")
            for page in paginator.paginate(Bucket=self.bucket, Prefix=base, Delimiter="/"):
                for entry in page.get("CommonPrefixes", []):
                    runs.append(entry["Prefix"][len(base) :].rstrip("/"))
        except (ClientError, BotoCoreError) as error:
            self.logger.error("Failed to list runs in s3://%s/%s: %s", self.bucket, base, error)
            return []
        return sorted(runs)
