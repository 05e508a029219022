"""Exception types raised across the package."""


class PgiError(Exception):
    """Base class for every error raised by pgikit."""


class InvalidInputError(PgiError, ValueError):
    """Input data violates a domain invariant (non-finite values, foreign ids)."""


class InvalidArgumentError(PgiError, ValueError):
    """A parameter is out of its admissible range."""


class EmptyInputError(InvalidInputError):
    pass


class SolverStalledError(PgiError, RuntimeError):
    pass


class TrainingDivergedError(PgiError, RuntimeError):
    def __init__(self, step: int, loss: float):
        super().__init__(f"training diverged at step {step} (loss={loss})")
        self.step = step
        self.loss = loss


class FormatError(PgiError, ValueError):
    """A file is malformed, truncated or carries an unknown magic/version."""


class ParseError(FormatError):
    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
