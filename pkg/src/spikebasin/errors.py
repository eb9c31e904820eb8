"""Exception types raised across the package."""


class SpikeBasinError(Exception):
    """Base class for all package errors."""


class SamplingExhausted(SpikeBasinError):
    """Rejection sampling ran out of attempts (separation too large for k, R)."""


class NoValidRadius(SpikeBasinError):
    """No positive radius satisfies the quadratic domination inequality."""


class QuadratureError(SpikeBasinError):
    pass


class AllSamplesDegenerate(SpikeBasinError):
    """Every RIP sample had (numerically) zero kernel norm."""


class ZeroAmplitude(SpikeBasinError):
    pass


class BetaTooLarge(SpikeBasinError):
    pass


class VacuousCertificate(SpikeBasinError):
    """The certified basin radius is nonpositive or the curvature bound fails."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class NoiseBudgetExceeded(SpikeBasinError):
    pass


class NotSymmetric(SpikeBasinError):
    pass


class InfeasibleSeparation(SpikeBasinError):
    pass


class AlphaOutOfRange(SpikeBasinError):
    pass


class ConfigError(SpikeBasinError):
    pass
