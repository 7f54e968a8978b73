"""Exception hierarchy shared by every module."""


class DeepBendersError(Exception):
    """Base class for all errors raised by this package."""


class NumericalFailure(DeepBendersError):
    """The LP/QP kernel could not certify a status within its budget."""


class NonConvexInput(DeepBendersError):
    pass


class VacuousCertificate(DeepBendersError):
    """The certificate produces an all-zero cut."""


class DspUnbounded(DeepBendersError):
    pass


class CorePointOutsideDomain(DspUnbounded):
    """The core point induces an infeasible primal subproblem."""


class UnsupportedStrategy(DeepBendersError):
    pass


class NspUnbounded(DeepBendersError):
    """The normalization is zero on a violating ray of the certificate cone.

    ``certificate`` carries that ray; it is a valid certificate of
    infinite normalized depth.
    """

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class DegenerateNormalization(DeepBendersError):
    """Conforti-Wolsey weights vanish (separated point equals the core point)."""


class ZeroNorm(DeepBendersError):
    pass


class InfeasibleIntersection(DeepBendersError):
    pass


class MasterInfeasible(DeepBendersError):
    pass


class TooLarge(DeepBendersError):
    pass


class ParseError(DeepBendersError):
    def __init__(self, message, line=None, offset=None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if offset is not None:
            where.append(f"token {offset}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.offset = offset
