"""Exception hierarchy shared by all certsynth modules."""


class CertSynthError(Exception):
    """Base class for every error raised by this package."""


# numerical kernel
class NonSymmetric(CertSynthError, ValueError):
    pass


class NoConvergence(CertSynthError, RuntimeError):
    pass


class NotHurwitz(CertSynthError, ValueError):
    pass


class DimensionMismatch(CertSynthError, ValueError):
    pass


# temporal logic
class FormulaSyntaxError(CertSynthError, ValueError):
    def __init__(self, message, line=1, column=1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class UnknownVariable(CertSynthError, KeyError):
    pass


class NonNormalizedPredicate(CertSynthError, ValueError):
    pass


class OutOfDomain(CertSynthError, ValueError):
    pass


class EmptyDomain(CertSynthError, ValueError):
    pass


class MissingOffset(CertSynthError, KeyError):
    pass


class FragmentViolation(CertSynthError, ValueError):
    pass


# system model
class ScheduleMisaligned(CertSynthError, ValueError):
    pass


class InvalidSchedule(CertSynthError, ValueError):
    pass


# certificates
class CertificateCheckFailed(CertSynthError, RuntimeError):
    pass


class SingularM(CertSynthError, ValueError):
    pass


class Infeasible(CertSynthError, RuntimeError):
    """Optimization problem has no feasible point.

    ``report`` carries diagnostics (most violated constraints, best value
    found) when the raiser can produce them.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report or {}


class MissingZ(CertSynthError, KeyError):
    pass


# linear programming
class NumericalFailure(CertSynthError, RuntimeError):
    pass


# power grid models
class DomainError(CertSynthError, ValueError):
    pass


class SingularDs(CertSynthError, ValueError):
    pass


class IslandedNetwork(CertSynthError, ValueError):
    pass


# configuration
class ConfigError(CertSynthError, ValueError):
    pass
