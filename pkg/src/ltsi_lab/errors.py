"""Exception hierarchy shared by all ltsi_lab modules."""


class LtsiError(Exception):
    """Base class for every error raised by ltsi_lab."""


class EvalOffGrid(LtsiError):
    """A sampled symbol was evaluated at a frequency that is not a grid sample."""


class SingularAtFrequency(LtsiError):
    def __init__(self, omega, condition):
        self.omega = float(omega)
        self.condition = float(condition)
        super().__init__(f"matrix singular at omega={self.omega:g} (condition estimate {self.condition:.3e})")


class ResolventSingular(LtsiError):
    """``s`` is (numerically) an eigenvalue of ``A``."""


class NotMinimal(LtsiError):
    pass


class NotReciprocal(LtsiError):
    pass


class NotStable(LtsiError):
    pass


class InfeasibleStorage(LtsiError):
    def __init__(self, message, omega=None):
        self.omega = omega
        if omega is not None:
            message = f"{message} (omega={omega:g})"
        super().__init__(message)


class NotPositiveSemidefinite(LtsiError):
    pass


class SingularN(LtsiError):
    """The normalized reciprocity matrix has an eigenvalue at zero."""


class SingularTransform(LtsiError):
    pass


class NotCompatible(LtsiError):
    pass


class NotPositiveDefinite(LtsiError):
    pass


class LimitDisagreement(LtsiError):
    def __init__(self, omega, gap):
        self.omega = float(omega)
        self.gap = float(gap)
        super().__init__(f"left/right limits disagree at omega={self.omega:g} (gap {self.gap:.3e})")


class SignatureNotConstant(LtsiError):
    pass


class PartitionViolation(LtsiError):
    pass


class BinEvaluationFailure(LtsiError):
    pass


class UnknownModel(LtsiError):
    pass
