"""
AWS Credential Check
====================

Confirms that AWS credentials are usable before a finished run is archived
to S3.

Example usage:
--------------
    from ecla_learner.auth import verify_aws_credentials

    if verify_aws_credentials():
        RunArtifactStore("my-bucket").upload_run("runs/synthetic-ecla-seed0")

Dependencies:
-------------
- boto3

License:
--------
MIT License
"""

import boto3
from botocore.exceptions import (
    BotoCoreError,
    ClientError,
    NoCredentialsError,
    PartialCredentialsError,
)

from .logger import get_logger

logger = get_logger(__name__)


def verify_aws_credentials() -> bool:
    """
    Calls STS ``get_caller_identity`` with the default credential chain.

    :returns: True when the call succeeds, False when credentials are
        missing, partial or rejected, or when AWS cannot be reached.
    """
    try:
        identity = boto3.client("sts").get_caller_identity()
        logger.info("AWS credentials are valid for account %s.", identity.get("Account", "?"))
        return True
    except (NoCredentialsError, PartialCredentialsError):
        logger.error("AWS credentials are not configured; run artifacts stay local.")
        return False
    except ClientError as error:
        logger.error("AWS rejected the configured credentials: %s", error)
        return False
    except BotoCoreError as error:
        logger.error("Could not reach AWS to check credentials: %s", error)
        return False
