"""Exception hierarchy shared by all modules."""


class FinslerError(Exception):
    """Base class for every error raised by finslercomp."""


class SingularPoint(FinslerError):
    pass


class NonAdmissible(FinslerError):
    pass


class InadmissibleDirection(NonAdmissible):
    pass


class KindMismatch(FinslerError, TypeError):
    pass


class DegenerateTensor(FinslerError):
    pass


class DegenerateFlag(FinslerError):
    pass


class NoConvergence(FinslerError):
    pass


class ChartExit(FinslerError):
    def __init__(self, message, t=None, x=None):
        super().__init__(message)
        self.t = t
        self.x = x


class StepFailure(FinslerError):
    pass


class RankLoss(FinslerError):
    pass


class FrameDegenerate(FinslerError):
    pass


class GridTooCoarse(FinslerError):
    pass


class CurvatureHypothesisViolated(FinslerError):
    pass


class QuadratureFailure(FinslerError):
    pass


class NonConvergent(QuadratureFailure):
    pass


class PositivityViolation(FinslerError):
    pass


class NonReversible(FinslerError):
    pass


class ConfigError(FinslerError):
    pass


class CheckFailure(FinslerError):
    pass
