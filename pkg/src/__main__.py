"""
dirac-ocp - Main entry point.

This module provides the CLI interface for state solves, optimal control
solves and mesh-refinement studies.
"""

import sys
import logging
from typing import List, Optional

from .cli.commands import EXIT_INVALID_INPUT, run_command
from .cli.parser import create_parser, validate_args, get_log_level
from .cli.progress import ProgressUI
from .orchestration.config import ConfigLoader
from .orchestration.logging_config import setup_logging


logger = logging.getLogger(__name__)


def main(argv: Optional[List[str]] = None) -> int:
    """Main entry point for the dirac-ocp CLI."""

    # Parse arguments
    parser = create_parser()
    args = parser.parse_args(argv)

    # Validate arguments
    error = validate_args(args)
    if error:
        parser.print_usage(sys.stderr)
        print(f"dirac-ocp: error: {error}", file=sys.stderr)
        return EXIT_INVALID_INPUT

    config_loader = ConfigLoader(config_dir=args.config_dir)

    # DIRAC_OCP_LOG sets the level, -v and -q override it
    log_level = get_log_level(args, config_loader.get_log_level())
    setup_logging(
        level=log_level,
        log_file=args.log_file,
        rich_formatting=not args.no_rich
    )

    ui = ProgressUI(use_rich=not args.no_rich)
    if not args.quiet:
        ui.show_banner(args.command)

    logger.debug(f"Arguments: {vars(args)}")
    return run_command(args, ui, config_loader)


if __name__ == "__main__":
    sys.exit(main())
