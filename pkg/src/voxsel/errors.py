"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: validation problems exit
with 2, numerical failures with 3, and an empty hyperparameter region
with 4.
"""


class VoxselError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(VoxselError):
    """Bad inputs: shapes, ranges, file contents, preconditions."""

    exit_code = 2


class NumericalError(VoxselError):
    """Non-finite quantities or other numerical breakdown mid-run."""

    exit_code = 3


class NoFeasibleRegionError(VoxselError):
    """The requested hyperparameter region is empty."""

    exit_code = 4
