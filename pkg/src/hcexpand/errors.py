"""Exception hierarchy. The CLI maps these onto its exit codes."""


class HcexpandError(Exception):
    """Base class for all package errors."""


class ConfigError(HcexpandError):
    """Invalid experiment configuration. ``pointer`` is a JSON pointer to the offending field."""

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class GeometryError(HcexpandError):
    """Geometry description violates its invariants (overlap, clearance, containment)."""


class ResolutionError(GeometryError):
    """Requested mesh size or neighbourhood is too coarse to resolve a feature."""


class ValidationError(HcexpandError):
    """An input object (mesh, material parameters) fails validation."""


class MeshValidationError(ValidationError):
    """A mesh (generated or loaded) fails a structural invariant."""


class MeshFormatError(MeshValidationError):
    """Malformed mesh file."""


class SolverError(HcexpandError):
    """A linear solve failed or missed its residual tolerance."""


class ConsistencyError(HcexpandError):
    """An internal invariant of the expansion failed (flux balance, SPD coarse matrix, ...)."""


class PreconditionError(HcexpandError):
    """Operation called outside its supported input range."""
