"""Exception types shared across the package."""


class HrppError(Exception):
    """Base class for all errors raised by this package."""


class NonFiniteInput(HrppError):
    """A NaN or infinity reached a boundary that feeds the ray hash."""


class EmptyScene(HrppError):
    """No valid triangles remain after ingestion filtering."""


class CapacityExceeded(HrppError):
    """The predictor table grew past its configured entry cap."""


class NoBaseline(HrppError):
    """A savings percentage was requested with zero baseline box tests."""


class UnknownGenerator(HrppError):
    """Unrecognized procedural scene generator name."""


class SceneError(HrppError):
    """A scene description violates the documented schema."""


class ParseError(HrppError):
    """Malformed input file; carries the offending path and line number."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class IndexOutOfRange(ParseError):
    """Face record references a vertex that does not exist."""
