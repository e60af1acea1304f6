"""Exception types shared across the package."""


class SingvecError(Exception):
    """Base class; the CLI maps these to exit code 2."""


class CapacityExceeded(SingvecError):
    """An enumeration would produce more points than the configured cap."""


class SingularMatrix(SingvecError):
    pass


class InvalidWeight(SingvecError, ValueError):
    pass


class NotPrimitive(SingvecError, ValueError):
    pass


class DenominatorOne(SingvecError, ValueError):
    pass


class PreconditionViolated(SingvecError):
    pass


class ZeroFunctional(SingvecError, ValueError):
    pass


class SequenceTooShort(SingvecError):
    pass


class EmptyLevel(SingvecError):
    def __init__(self, msg, node=None):
        super().__init__(msg)
        self.node = node


class HorizonTooShort(SingvecError):
    pass


class AssumptionViolated(SingvecError):
    pass


class NotInQEps(SingvecError, ValueError):
    pass


class DegenerateFit(SingvecError):
    pass


class RouteMismatch(SingvecError):
    """Two independent computations of the same quantity disagree."""


class RegimeInfeasible(SingvecError):
    pass
