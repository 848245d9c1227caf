"""
Exceptions raised by the constitutive toolkit.
"""
from typing import Optional


class ConstitutiveToolkitError(Exception):
    """Base class for every error raised by this package."""


class ExprError(ConstitutiveToolkitError):
    """Base class for expression language errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, position: int, source: str = ""):
        self.position = position
        self.source = source
        super().__init__(f"{message} at position {position}")


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, position: Optional[int] = None):
        self.name = name
        self.position = position
        where = f" at position {position}" if position is not None else ""
        super().__init__(f"unknown identifier '{name}'{where}")


class ExprDomainError(ExprError):
    def __init__(self, message: str, subexpression: str):
        self.reason = message
        self.subexpression = subexpression
        super().__init__(f"{message} in '{subexpression}'")


class RelationValidationError(ConstitutiveToolkitError):
    """A coefficient references arguments its family does not admit."""


class SolverError(ConstitutiveToolkitError):
    pass


class DegenerateRelationError(SolverError):
    """The relation is satisfied identically and does not determine a stress."""


class NonInvertibleRelationError(SolverError):
    """No density can be recovered from the relation for a given stress."""


class QuadratureError(ConstitutiveToolkitError):
    def __init__(self, message: str, location: float):
        self.location = location
        super().__init__(f"{message} at y={location!r}")


class ProfileOverflowError(ConstitutiveToolkitError):
    pass


class GridTooCoarseError(ConstitutiveToolkitError):
    pass


class ConfigError(ConstitutiveToolkitError):
    def __init__(self, message: str, path: Optional[str] = None):
        self.path = path
        super().__init__(f"{message}: {path}" if path else message)
