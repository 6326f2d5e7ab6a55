"""Exception hierarchy shared across the solver."""


class KLShellError(Exception):
    """Base class for all library errors."""


class DomainError(KLShellError, ValueError):
    """A parametric or physical input lies outside its admissible range."""


class ValidationError(KLShellError, ValueError):
    """Structured input (knot vector, model file, ...) violates an invariant.

    ``path`` optionally points at the offending field (e.g. "patches[0].weights[3]").
    """

    def __init__(self, message, path=None):
        self.path = path
        if path is not None:
            message = f"{path}: {message}"
        super().__init__(message)


class DegenerateGeometryError(KLShellError):
    """Surface tangents are (numerically) parallel at an evaluation point."""


class MaterialFailureError(KLShellError):
    """A constitutive update did not converge or produced an inadmissible state."""

    def __init__(self, message, location=None):
        self.location = location
        if location is not None:
            message = f"{message} at {location}"
        super().__init__(message)


class ModelError(KLShellError, ValueError):
    """Inconsistent analysis model (merging, strips, constraints, loads)."""


class NonConvergenceError(KLShellError, RuntimeError):
    """Newton or arc-length iteration failed; carries the last residual norm."""

    def __init__(self, message, residual_norm=None, step=None, iterations=None):
        self.residual_norm = residual_norm
        self.step = step
        self.iterations = iterations
        super().__init__(message)


class SolverError(KLShellError, RuntimeError):
    """Linear algebra failure (singular or numerically unusable system)."""
