"""Exception hierarchy shared by all modules."""


class RelBoltzError(Exception):
    """Base class for every error raised by this package."""


class OutOfDomain(RelBoltzError):
    pass


class SingularMetric(RelBoltzError):
    pass


class NotTimelike(RelBoltzError):
    pass


class LeftDomain(RelBoltzError):
    pass


class StepRejected(RelBoltzError):
    """Mass-shell correction after an RK4 step exceeded the tolerance; halve ds."""

    def __init__(self, correction, message=None):
        self.correction = correction
        super().__init__(message or f"shell correction {correction:.3e} too large")


class GeodesicAbort(RelBoltzError):
    pass


class DegeneratePair(RelBoltzError):
    pass


class ThinningViolation(RelBoltzError):
    pass


class SupportExit(RelBoltzError):
    """A momentum left the compact support on which the kernel rate bound holds."""


class NoHit(RelBoltzError):
    pass


class NoCrossing(RelBoltzError):
    pass


class VariationFold(RelBoltzError):
    pass


class NotSpacelike(RelBoltzError):
    pass


class ConfigError(RelBoltzError):
    pass
