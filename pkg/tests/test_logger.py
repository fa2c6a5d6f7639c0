"""
Test Suite for Logger Configuration
===================================

Unit tests for the log level resolution and the rotating log file setup.

Dependencies:
-------------
- unittest
- unittest.mock
- tempfile

License:
--------
MIT License
"""

import logging
import os
import tempfile
import unittest
from unittest.mock import patch

from ecla_learner.logger import LOG_LEVEL_ENV, configure_logging, get_logger, resolve_log_level


class TestLogger(unittest.TestCase):
    """Tests for configure_logging and resolve_log_level."""

    def tearDown(self):
        self.reset_root()

    def reset_root(self):
        root = logging.getLogger()
        for handler in list(root.handlers):
            handler.close()
            root.removeHandler(handler)

    def test_explicit_level_wins(self):
        with patch.dict(os.environ, {LOG_LEVEL_ENV: "ERROR"}):
            self.assertEqual(resolve_log_level(logging.DEBUG), logging.DEBUG)

    def test_level_from_environment(self):
        with patch.dict(os.environ, {LOG_LEVEL_ENV: "warning"}):
            self.assertEqual(resolve_log_level(), logging.WARNING)

    def test_unknown_level_falls_back_to_info(self):
        with patch.dict(os.environ, {LOG_LEVEL_ENV: "chatty"}):
            self.assertEqual(resolve_log_level(), logging.INFO)

    def test_log_file_in_run_directory(self):
        with tempfile.TemporaryDirectory() as tmp:
            run_dir = os.path.join(tmp, "run")
            configure_logging(log_dir=run_dir, log_level=logging.INFO)
            get_logger("ecla_learner.tests").info("hello from the run")
            for handler in logging.getLogger().handlers:
                handler.flush()
            with open(os.path.join(run_dir, "LOG_ecla.log"), "r", encoding="utf-8") as file:
                self.assertIn("INFO: hello from the run", file.read())
            self.assertEqual(logging.getLogger("botocore").level, logging.WARNING)
            self.reset_root()


if __name__ == "__main__":
    unittest.main()
