"""Exception hierarchy shared by all gradtherm modules."""


class GradthermError(Exception):
    """Base class for all package errors."""


class UnknownParameter(GradthermError):
    """Parameter file contains a key the loader does not recognize."""


class InvalidCoefficients(GradthermError):
    """Coefficient set violates the positivity/shape requirements of a solver."""


class NegativeRadicand(GradthermError):
    """Mode frequency formula has a negative radicand (n too small for mu, a3+a4)."""


class SingularModeSystem(GradthermError):
    """The 3x3 per-mode system is numerically singular for these parameters."""


class SolveFailure(GradthermError):
    """Static coercive solve failed (positivity margin too small for the grid)."""


class SizeCapExceeded(GradthermError):
    """Dense eigen-analysis requested above the configured unknown-count cap."""


class NonConvergence(GradthermError):
    """Implicit time step did not reach the residual tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class InsufficientDecay(GradthermError):
    """Energy trace decays by less than one decade; exponential fit unreliable."""


class InvalidMajorant(GradthermError):
    """Concave majorant h fails its defining inequality on the sampled range."""


class PremiseViolated(GradthermError):
    """Sequence fails the recursion premise s_{m+1} + p(s_{m+1}) <= s_m."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class DegenerateRun(GradthermError):
    """Observation integral of a run is numerically zero (stationary run)."""


class NotExponentiallyStable(GradthermError):
    """Damped pair is not exponentially stable; theorem check not applicable."""


class NotSkewInEnergyCoords(GradthermError):
    """Conservative block fails the skewness test after the energy-coordinate map."""


class ConfigError(GradthermError):
    """Malformed run configuration or CLI usage."""
