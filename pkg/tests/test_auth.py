"""
Test Suite for AWS Credential Verification
==========================================

Unit tests for the credential check that guards run uploads: configured,
missing, partial and rejected credentials, and an unreachable endpoint.

Dependencies:
-------------
- unittest.mock
- pytest
- botocore.exceptions

License:
--------
MIT License
"""

from unittest.mock import patch

import pytest
from botocore.exceptions import (
    ClientError,
    EndpointConnectionError,
    NoCredentialsError,
    PartialCredentialsError,
)

from ecla_learner.auth import verify_aws_credentials


@patch("ecla_learner.auth.boto3.client")
def test_verify_aws_credentials_success(mock_boto_client):
    """A successful STS identity call means credentials are usable."""
    mock_boto_client.return_value.get_caller_identity.return_value = {"Account": "123456789012"}
    assert verify_aws_credentials() is True
    mock_boto_client.assert_called_once_with("sts")


@patch("ecla_learner.auth.boto3.client")
def test_verify_aws_credentials_no_credentials(mock_boto_client):
    """Missing credentials are reported as False, not raised."""
    mock_boto_client.return_value.get_caller_identity.side_effect = NoCredentialsError()
    assert verify_aws_credentials() is False


@patch("ecla_learner.auth.boto3.client")
def test_verify_aws_credentials_partial_credentials(mock_boto_client):
    """Partially configured credentials are reported as False."""
    mock_boto_client.return_value.get_caller_identity.side_effect = (
        PartialCredentialsError(provider="aws", cred_var="AWS_SECRET_ACCESS_KEY")
    )
    assert verify_aws_credentials() is False


@patch("ecla_learner.auth.boto3.client")
def test_verify_aws_credentials_rejected(mock_boto_client):
    """Credentials AWS refuses are reported as False."""
    mock_boto_client.return_value.get_caller_identity.side_effect = ClientError(
        {"Error": {"Code": "InvalidClientTokenId", "Message": "bad token"}}, "GetCallerIdentity"
    )
    assert verify_aws_credentials() is False


@patch("ecla_learner.auth.boto3.client")
def test_verify_aws_credentials_unreachable(mock_boto_client):
    """A network failure reaching STS is reported as False."""
    mock_boto_client.return_value.get_caller_identity.side_effect = EndpointConnectionError(
        endpoint_url="https://sts.amazonaws.com"
    )
    assert verify_aws_credentials() is False


if __name__ == "__main__":
    pytest.main()
