"""Exception hierarchy shared by every ladderfolio module."""


class LadderfolioError(Exception):
    """Base class for all library errors."""


class DataError(LadderfolioError, ValueError):
    """Input file or in-memory data violates a documented invariant."""


class MissingRecordError(LadderfolioError, KeyError):
    """No record exists for the requested (security, date) pair."""

    def __str__(self) -> str:  # KeyError quotes its message by default
        return str(self.args[0]) if self.args else ""


class DomainError(LadderfolioError, ValueError):
    """A weighting transform was applied outside its domain."""


class BootstrapError(LadderfolioError, RuntimeError):
    """A bootstrap iteration failed; carries the failing iteration index."""

    def __init__(self, iteration: int, message: str):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
