"""Exception types raised by the solver stack."""


class HdivBiotError(Exception):
    """Base class for all package errors."""


class InvalidGeometry(HdivBiotError):
    """The interface or boundary partition cannot be represented on the mesh."""


class DegenerateCell(HdivBiotError):
    """A cell with (numerically) vanishing area was encountered."""


class MissingData(HdivBiotError):
    """A case lacks data required by the requested operation."""


class SingularSystem(HdivBiotError):
    """The assembled system has a nullspace that is not removed."""


class NotSPD(HdivBiotError):
    """A preconditioner block failed its positive-definiteness check."""


class AllZero(HdivBiotError):
    """Every refinement indicator vanished; nothing can be marked."""


class ConfigError(HdivBiotError):
    """Malformed or unknown entries in a run configuration."""
