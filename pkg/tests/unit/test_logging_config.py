"""
Unit tests for logging setup.
"""

import logging
import warnings

from rich.logging import RichHandler

from src.orchestration.logging_config import setup_logging


class TestSetupLogging:
    """Test the root logger configuration."""

    def teardown_method(self):
        setup_logging(level="WARNING", rich_formatting=False)
        logging.captureWarnings(False)

    def test_plain_console(self):
        root = setup_logging(level="ERROR", rich_formatting=False)

        assert len(root.handlers) == 1
        assert not isinstance(root.handlers[0], RichHandler)
        assert root.handlers[0].level == logging.ERROR

    def test_rich_console(self):
        root = setup_logging(level="info")

        assert isinstance(root.handlers[0], RichHandler)
        assert root.level == logging.INFO

    def test_repeated_setup_replaces_handlers(self):
        setup_logging(rich_formatting=False)
        root = setup_logging(rich_formatting=False)

        assert len(root.handlers) == 1

    def test_log_file_records_debug(self, tmp_path):
        """The file gets DEBUG records even when the console is quiet."""
        log_file = tmp_path / "logs" / "run.log"
        setup_logging(level="WARNING", log_file=log_file, rich_formatting=False)

        logging.getLogger("src.solvers.state").debug("Newton iteration 1: residual 1.000e-03")
        for handler in logging.getLogger().handlers:
            handler.flush()

        content = log_file.read_text()
        assert "Newton iteration 1" in content
        assert "MainThread" in content

    def test_warnings_are_logged(self, tmp_path):
        log_file = tmp_path / "run.log"
        setup_logging(level="WARNING", log_file=log_file, rich_formatting=False)

        with warnings.catch_warnings():
            warnings.simplefilter("always")
            warnings.warn("overflow encountered in power", RuntimeWarning)
        for handler in logging.getLogger().handlers:
            handler.flush()

        assert "overflow encountered in power" in log_file.read_text()

    def test_unknown_level_falls_back_to_info(self):
        root = setup_logging(level="chatty", rich_formatting=False)

        assert root.level == logging.INFO
