"""Exception types raised across the package."""


class RBLError(Exception):
    """Base class for all package errors."""


class InvalidInputError(RBLError, ValueError):
    pass


class DegenerateBasisError(RBLError, ValueError):
    pass


class InvalidGeometryError(RBLError, ValueError):
    pass


class UnsupportedGeometryError(RBLError, ValueError):
    """Geometry is valid but outside the numerically supported range (e.g. H below floor)."""


class InconsistentImmersionError(RBLError, ValueError):
    pass


class NearResonanceError(RBLError, ValueError):
    pass


class InconsistentMeshError(RBLError, ValueError):
    pass


class ScenarioError(RBLError, ValueError):
    """Scenario file failed to parse or validate."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = f"[{', '.join(where)}] " if where else ""
        super().__init__(prefix + message)


class CheckError(RBLError):
    """A module error raised while executing a named scenario check."""

    def __init__(self, check, cause):
        self.check = check
        self.cause = cause
        super().__init__(f"check '{check}': {type(cause).__name__}: {cause}")
