"""Exception types.  Each carries the name used in certificates and CLI output."""


class CertError(Exception):
    """Base class; ``code`` is the stable identifier written to certificates."""

    code = "CertError"


class DivByZeroInterval(CertError, ZeroDivisionError):
    code = "DivByZeroInterval"


class NegativeSqrt(CertError, ValueError):
    code = "NegativeSqrt"


class EmptyIntersection(CertError, ValueError):
    code = "EmptyIntersection"


class QuadratureCertFail(CertError):
    code = "QuadratureCertFail"


class DegreeError(CertError, ValueError):
    """Quadrature order too low for the polynomial degree of an integrand."""

    code = "DegreeError"


class NewtonDiverged(CertError):
    code = "NewtonDiverged"


class NotSPD(CertError):
    code = "NotSPD"


class EnclosureFail(CertError):
    code = "EnclosureFail"


class NotCoercive(CertError):
    code = "NotCoercive"


class PossiblySingular(CertError):
    code = "PossiblySingular"


class ConstantUnavailable(CertError, KeyError):
    code = "ConstantUnavailable"

    def __str__(self):
        return Exception.__str__(self)


class KantorovichFail(CertError):
    code = "KantorovichFail"


class StrategyInapplicable(CertError):
    code = "StrategyInapplicable"


class Indeterminate(CertError):
    code = "Indeterminate"


class Assumption4Unverified(CertError):
    code = "Assumption4Unverified"


class Mu1NotPositive(CertError):
    code = "Mu1NotPositive"


class SupersetDoesNotCover(CertError):
    code = "SupersetDoesNotCover"


class NonPolynomialIntegrand(CertError):
    """Even exponents make |t| appear; exact quadrature no longer applies."""

    code = "NonPolynomialIntegrand"
