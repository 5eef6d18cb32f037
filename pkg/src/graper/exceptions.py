"""Exception types shared across the package.

Two failure categories map onto the CLI exit codes: bad inputs or
invalid states (exit 1) and numerical breakdown during a fit (exit 2).
"""


class GraperError(Exception):
    """Base class for all package errors."""


class InputError(GraperError):
    """Invalid user input: malformed data, bad configuration, broken state."""


class NumericalError(GraperError):
    """A fit produced a non-finite or otherwise impossible quantity."""

    def __init__(self, message, iteration=None):
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)
        self.iteration = iteration
