"""Exception hierarchy.

Errors fall into three families so the CLI can map them onto exit codes:
geometry and numerical failures exit with 1, configuration and I/O failures
with 2.
"""


class CemError(Exception):
    """Base class for all package errors."""


class GeometryError(CemError):
    pass


class PlacementFailure(GeometryError):
    pass


class DomainEmpty(GeometryError):
    pass


class DomainDisconnected(GeometryError):
    pass


class InconsistentGeometry(GeometryError):
    pass


class NumericalError(CemError):
    pass


class DegenerateTriangle(NumericalError):
    pass


class NotPositiveDefinite(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class NoDirichlet(NumericalError):
    pass


class ZeroReference(NumericalError):
    pass


class SingularConstraintBlock(NumericalError):
    def __init__(self, message, block=None):
        super().__init__(message)
        self.block = block


class BasisBuildError(NumericalError):
    """Wraps a failure of one basis function with its (block, eigen index)."""

    def __init__(self, block, eig, cause):
        super().__init__(f"basis ({block}, {eig}) failed: {cause}")
        self.block = block
        self.eig = eig
        self.cause = cause


class ConfigError(CemError):
    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path


class NonNested(ConfigError):
    pass


class MeshFormatError(ConfigError):
    pass


class ParseError(MeshFormatError):
    pass


class UnsupportedVersion(MeshFormatError):
    pass


class MissingTags(MeshFormatError):
    pass
