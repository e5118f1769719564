"""Exception types raised by the solvers."""


class SphFsiError(Exception):
    """Base class for all solver errors."""


class ConfigError(SphFsiError):
    """Invalid or inconsistent scenario configuration."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class DomainEscapeError(SphFsiError):
    """A particle left the non-periodic domain bounds beyond the allowed margin."""


class StaleGridError(SphFsiError):
    """A neighbor grid was queried after the particle positions changed."""


class NonphysicalStateError(SphFsiError):
    """A field value left the physically meaningful range (e.g. density <= 0)."""


class NoSupportError(SphFsiError):
    """An interpolation point has no particle within the kernel support."""


class CoincidentParticlesError(SphFsiError):
    """Two interacting particles occupy the same position."""


class ProjectionFailureError(SphFsiError):
    """Closest-point projection onto an interface element did not converge."""


class InvertedElementError(SphFsiError):
    """A finite element reached a non-positive Jacobian determinant."""


class NewtonDivergenceError(SphFsiError):
    """Newton-Raphson iteration failed to converge."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class CouplingDivergenceError(SphFsiError):
    """The partitioned fixed-point loop exceeded its iteration budget."""

    def __init__(self, message, residual_history=None):
        super().__init__(message)
        self.residual_history = list(residual_history or [])


class SeedingError(SphFsiError):
    """An open-boundary zone could not be kept filled with particles."""
