"""Exception hierarchy shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific class that applies rather than bare ValueError.
"""


class StreamGPError(Exception):
    """Base class for all errors raised by this package."""


class ContractViolationError(StreamGPError):
    """An argument violates a documented precondition (shape, range, flag)."""


class DataError(StreamGPError):
    """Input data is unusable: non-finite values, bad file contents, etc."""


class IllConditionedError(StreamGPError):
    """A matrix could not be Cholesky-factorized within the jitter budget."""

    def __init__(self, matrix_name: str, detail: str = ""):
        self.matrix_name = matrix_name
        msg = f"matrix {matrix_name!r} is not positive definite within the jitter budget"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class NumericalError(StreamGPError):
    """A computation produced non-finite values (diverged training, etc.)."""


class ToleranceError(StreamGPError):
    """A validation run exceeded its configured tolerance."""
