"""Exception types shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, data problems
exit 2, numerical failures exit 3.
"""


class SpqeError(Exception):
    """Base class for all package errors."""


class DataError(SpqeError):
    """Bad manifests, unreadable images, schema violations, shape mismatches."""


class NumericError(SpqeError):
    """Non-finite values, degenerate statistics, diverged optimization."""


class UsageError(SpqeError):
    """Invalid flag/argument combinations detected past argparse."""
