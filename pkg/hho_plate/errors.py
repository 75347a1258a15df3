"""Exceptions raised by the hho_plate package.

Library code raises these; the command line catches HHOError and turns it into a one-line
message plus an exit status.
"""


class HHOError(Exception):
    """Base class for every error raised by hho_plate."""

    exit_code = 3


class MeshError(HHOError):
    """Mesh geometry or topology violates an invariant."""

    exit_code = 2


class MeshFormatError(MeshError):
    """Malformed mesh file."""

    def __init__(self, message, path=None, line=None, field=None):
        self.path = path
        self.line = line
        self.field = field
        where = []
        if path is not None:
            where.append(str(path))
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        prefix = ":".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class MeshConnectivityError(MeshError):
    """Faces shared by more than two elements, or inconsistent orientation."""


class ConfigError(HHOError, ValueError):
    """Invalid study configuration."""

    exit_code = 2


class SingularLocalSystemError(HHOError):
    """A local saddle-point or condensation block could not be factorized."""

    def __init__(self, message, element=None):
        self.element = element
        if element is not None:
            message = f"element {element}: {message}"
        super().__init__(message)


class AssemblyError(HHOError):
    """Global assembly failed."""


class SolverError(HHOError):
    """Linear solver breakdown or residual contract violated."""

    def __init__(self, message, diagnostics=None):
        self.diagnostics = dict(diagnostics or {})
        if self.diagnostics:
            details = ", ".join(f"{k}={v}" for k, v in self.diagnostics.items())
            message = f"{message} ({details})"
        super().__init__(message)
