"""Exception hierarchy shared across the package."""


class MlstmError(Exception):
    """Base class for all package errors."""


class DimensionError(MlstmError, ValueError):
    pass


class ParseError(MlstmError, ValueError):
    """Malformed input line. ``lineno`` is 1-based."""

    def __init__(self, message, lineno=None, source=None):
        self.lineno = lineno
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if lineno is not None:
            where += f"line {lineno}: "
        elif where:
            where += " "
        super().__init__(where + message)


class NonFiniteError(MlstmError, ArithmeticError):
    pass


class TrainingError(MlstmError, RuntimeError):
    pass


class CheckpointError(MlstmError, IOError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


class LabelError(MlstmError, ValueError):
    pass
