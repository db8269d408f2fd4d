"""Exception types shared by the solvers."""


class CFLError(ValueError):
    """Time step exceeds the admissible explicit bound."""

    def __init__(self, dt, dt_max, what="step"):
        self.dt = dt
        self.dt_max = dt_max
        super().__init__(f"{what}: dt={dt:.6g} violates CFL, admissible dt <= {dt_max:.6g}")


class AdmissibilityError(ValueError):
    """Integrability exponents outside the admissible range."""


class CapacityError(ValueError):
    """Problem too large for the exact transport solver."""


class ConvergenceError(RuntimeError):
    """Iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, violation=None):
        self.violation = violation
        super().__init__(message)


class NumericalAbort(RuntimeError):
    """An invariant budget (mass, positivity, divergence) was exceeded."""


class ConfigError(ValueError):
    """Malformed or inadmissible experiment configuration."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
