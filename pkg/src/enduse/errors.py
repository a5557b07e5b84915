"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes: input/format problems exit 2,
missing or inconsistent model state exits 3, anything else exits 1.
"""


class EndUseError(Exception):
    """Base class for all toolkit errors."""


class InvalidInput(EndUseError):
    """An operation received arguments violating its preconditions."""


class InputFormatError(EndUseError):
    """A file could not be parsed; carries a line number when known."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None):
        self.path = path
        self.line = line
        prefix = ""
        if path is not None:
            prefix = f"{path}:"
            if line is not None:
                prefix += f"{line}:"
            prefix += " "
        super().__init__(prefix + message)


class MissingFixtureData(EndUseError):
    """A fixture required by the pipeline has no events or signatures."""


class ModelStateError(EndUseError):
    """A model directory or document is incomplete or inconsistent."""


class VolumeInfeasible(EndUseError):
    """Requested event volume cannot be realized within the flow bounds."""
