"""
CLI Argument Parser - Command line interface setup.
"""

import argparse
import re
from pathlib import Path
from typing import List, Optional


_RANGE = re.compile(r"^\s*(\d+)\s*\.\.\s*(\d+)\s*$")


def parse_levels(text: str) -> List[int]:
    """Parse ``A..B`` (inclusive) or a comma-separated list of levels."""
    match = _RANGE.match(text)
    if match:
        start, stop = int(match.group(1)), int(match.group(2))
        if stop < start:
            raise argparse.ArgumentTypeError(f"empty level range {text!r}")
        return list(range(start, stop + 1))
    try:
        levels = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected A..B or a comma-separated list, got {text!r}")
    if not levels or min(levels) < 0:
        raise argparse.ArgumentTypeError(f"levels must be nonnegative integers, got {text!r}")
    return sorted(set(levels))


def parse_floats(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def parse_quantities(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return value


def _add_common(parser: argparse.ArgumentParser):
    # Verbosity
    parser.add_argument(
        "-v", "--verbose",
        action="store_true",
        help="Verbose output (DEBUG level logging)"
    )
    parser.add_argument(
        "-q", "--quiet",
        action="store_true",
        help="Quiet output (WARNING level logging)"
    )

    # Output options
    parser.add_argument(
        "--out",
        type=Path,
        help="Output directory (default: $DIRAC_OCP_OUTPUT_DIR or ./outputs)"
    )
    parser.add_argument(
        "--log-file",
        type=Path,
        help="Also write the log to this file"
    )

    # Configuration
    parser.add_argument(
        "--config-dir",
        type=Path,
        help="Configuration directory (default: ./config)"
    )
    parser.add_argument(
        "--no-rich",
        action="store_true",
        help="Disable Rich formatting in console output"
    )


def create_parser() -> argparse.ArgumentParser:
    """
    Create the argument parser for the dirac-ocp CLI.

    Returns:
        Configured ArgumentParser
    """
    parser = argparse.ArgumentParser(
        prog="dirac-ocp",
        description="Optimal control of Dirac source amplitudes in semilinear elliptic problems",
        epilog="Example: dirac-ocp study --quantities state_l2 --levels 3..6 --reference 8 problem.toml"
    )
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="{solve,optimize,study,anchor}")

    solve = subparsers.add_parser("solve", help="Solve the state equation at one level")
    solve.add_argument("spec", type=Path, help="Problem file (TOML)")
    solve.add_argument("--level", type=int, help="Refinement level (default: finest study level)")
    solve.add_argument(
        "--control",
        type=parse_floats,
        help="Comma-separated amplitudes (default: control.fixed, else clamp(1))"
    )
    solve.add_argument("--mesh", action="store_true", help="Also write the mesh as JSON")
    _add_common(solve)

    optimize = subparsers.add_parser("optimize", help="Solve the optimal control problem at one level")
    optimize.add_argument("spec", type=Path, help="Problem file (TOML)")
    optimize.add_argument("--level", type=int, help="Refinement level (default: finest study level)")
    optimize.add_argument("--max-iter", type=_positive_int, help="Projected gradient iteration cap")
    optimize.add_argument("--no-sosc", action="store_true", help="Skip the second-order check")
    _add_common(optimize)

    study = subparsers.add_parser("study", help="Run mesh-refinement studies and fit rates")
    study.add_argument("spec", type=Path, help="Problem file (TOML)")
    study.add_argument("--levels", type=parse_levels, help="Levels, as A..B or a list (default: [study] levels)")
    study.add_argument("--reference", type=int, help="Reference level (default: max level + 2)")
    study.add_argument(
        "--quantities",
        type=parse_quantities,
        help="Comma-separated subset of state_l2,state_l1,adjoint_linf,gradient_gap,control_err"
    )
    study.add_argument("--threads", type=_positive_int, default=None, help="Worker threads for independent levels")
    study.add_argument("--markdown", action="store_true", help="Also write a Markdown summary")
    _add_common(study)

    anchor = subparsers.add_parser("anchor", help="Smooth-data Poisson rate check on the unit square")
    anchor.add_argument("--levels", type=parse_levels, help="Levels (default: 2..6 from defaults.yaml)")
    _add_common(anchor)

    return parser


def validate_args(args: argparse.Namespace) -> Optional[str]:
    """
    Validate parsed arguments.

    Args:
        args: Parsed arguments

    Returns:
        An error message, or None if the arguments are consistent
    """
    # Can't be both verbose and quiet
    if args.verbose and args.quiet:
        return "Cannot use both --verbose and --quiet"
    level = getattr(args, "level", None)
    if level is not None and level < 0:
        return f"--level must be nonnegative, got {level}"
    return None


def get_log_level(args: argparse.Namespace, env_level: str = "INFO") -> str:
    """
    Determine log level from arguments.

    Args:
        args: Parsed arguments
        env_level: Level taken from DIRAC_OCP_LOG

    Returns:
        Log level string
    """
    if args.verbose:
        return "DEBUG"
    elif args.quiet:
        return "WARNING"
    return env_level
