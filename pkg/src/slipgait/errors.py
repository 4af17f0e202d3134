"""Exception hierarchy shared by all modules."""


class SlipGaitError(Exception):
    """Base class for every error raised by this package."""


# dynamics
class SingularMass(SlipGaitError):
    pass


class SingularContact(SlipGaitError):
    pass


class SingularImpact(SlipGaitError):
    pass


# gait
class DegreeTooLow(SlipGaitError, ValueError):
    pass


# control
class NearSingularDecoupling(SlipGaitError):
    pass


class SlipChannelSingular(SlipGaitError):
    pass


class HolonomicChannelSingular(SlipGaitError):
    pass


# hybrid
class StepFailed(SlipGaitError):
    """A stance phase ended without a valid impact.

    ``reason`` is one of ``fall``, ``no-impact-timeout``,
    ``singular-decoupling`` or ``negative-normal-force``.
    """

    def __init__(self, reason, message="", t=None):
        super().__init__(message or reason)
        self.reason = reason
        self.t = t


class NoImpact(StepFailed):
    def __init__(self, message="", t=None):
        super().__init__("no-impact-timeout", message, t)


class Fall(StepFailed):
    def __init__(self, message="", t=None):
        super().__init__("fall", message, t)


# analysis
class SectionMiss(SlipGaitError):
    pass


class NoConvergence(SlipGaitError):
    def __init__(self, message, best=None, residual=None, cause=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.cause = cause


class InfeasibleTargets(SlipGaitError, ValueError):
    pass


# configuration
class ParseError(SlipGaitError, ValueError):
    pass


class ValidationError(SlipGaitError, ValueError):
    pass
