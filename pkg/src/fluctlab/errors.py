"""Exception hierarchy shared by all fluctlab modules.

Every error carries a stable ``code`` used by the command line runner to
pick an exit status and to build the machine-readable error object.
"""

from __future__ import annotations


class FluctlabError(Exception):
    """Base class. ``exit_code`` follows the CLI contract."""

    exit_code = 3

    @property
    def code(self) -> str:
        return type(self).__name__


class StepLawError(FluctlabError, ValueError):
    exit_code = 2


class NonZeroMean(StepLawError):
    pass


class NonMaximalSpan(StepLawError):
    pass


class DegenerateSupport(StepLawError):
    pass


class BadMass(StepLawError):
    pass


class HorizonTooLarge(FluctlabError):
    pass


class ZeroSurvival(FluctlabError):
    pass


class ExplosionGuard(FluctlabError):
    pass


class DualityViolation(FluctlabError):
    exit_code = 4


class EmptyRange(FluctlabError):
    pass


class TruncationInsufficient(FluctlabError):
    pass


class OutOfRange(FluctlabError, ValueError):
    pass


class QuadratureFailure(FluctlabError):
    pass


class GridMismatch(FluctlabError, ValueError):
    pass


class ConfigInvalid(FluctlabError):
    exit_code = 2


class SamplerAuditFailure(FluctlabError):
    exit_code = 4
