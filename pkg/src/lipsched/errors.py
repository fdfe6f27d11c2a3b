"""Exception types shared across the package."""


class LipschedError(Exception):
    """Base class for all errors raised by lipsched."""


class TrivialTransportError(LipschedError, ValueError):
    """The transport map is an isometry (all Jacobian eigenvalues equal one).

    The scheduling problem is ill-posed in that case; every schedule gives a
    zero Lipschitz bound.
    """


class AdmissibilityError(LipschedError, ValueError):
    """A map or field violates positivity/monotonicity requirements."""


class DomainError(LipschedError, ValueError):
    """An argument lies outside the domain on which an operation is defined."""


class ConfigError(LipschedError, ValueError):
    """Invalid command-line or configuration-file input."""
