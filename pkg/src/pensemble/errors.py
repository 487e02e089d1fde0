"""Exception types shared across the package."""


class InvalidInputError(ValueError):
    """Argument violates a documented precondition."""


class UnsupportedDimensionError(InvalidInputError):
    """Operation is only defined for a specific Hilbert-space dimension."""


class SolverError(RuntimeError):
    """Root finding failed to bracket or converge."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DiagnosticError(RuntimeError):
    """A numerical self-check (quadrature, extrapolation, ...) did not pass."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
