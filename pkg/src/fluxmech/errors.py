"""Exception types raised by fluxmech."""


class FluxmechError(Exception):
    """Base class for all package errors."""


class ConfigError(FluxmechError, ValueError):
    """Invalid device or run configuration."""

    def __init__(self, message, field=None, line=None):
        self.message = message
        self.field = field
        self.line = line
        where = []
        if field is not None:
            where.append(f"field '{field}'")
        if line is not None:
            where.append(f"line {line}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class FluxSingularityError(FluxmechError):
    """Finite differences did not converge near the half-flux-quantum point."""


class ConvergenceError(FluxmechError):
    """An iterative solver or fit failed to converge."""


class SingularLiouvillianError(FluxmechError):
    """The steady-state linear system is singular or badly conditioned."""

    def __init__(self, message, condition_number):
        self.condition_number = condition_number
        super().__init__(f"{message} (condition estimate {condition_number:.3e})")


class BracketError(FluxmechError):
    """A root scan found no sign change inside its bracketing interval."""


class IntegrationBlowup(FluxmechError):
    """The adaptive integrator's step size underflowed."""

    def __init__(self, message, t_fail):
        self.t_fail = t_fail
        super().__init__(f"{message} at t = {t_fail:.6e} s")
