"""Exception hierarchy."""


class HaarTestError(Exception):
    """Base class for all errors raised by haartest."""


class NumericalError(HaarTestError):
    """A numerical routine could not produce a trustworthy value."""


class NotOrthogonal(HaarTestError, ValueError):
    pass


class NonSquare(HaarTestError, ValueError):
    pass


class NotSymmetric(HaarTestError, ValueError):
    pass


class DimensionMismatch(HaarTestError, ValueError):
    pass


class NoConvergence(NumericalError):
    pass


class PairingFailure(NumericalError):
    """Eigenvalues of the symmetric part did not come in equal pairs."""


class DegenerateSpectrum(NumericalError):
    """Coincident eigenvalue cosines within one spectrum."""


class DegenerateAngles(NumericalError):
    """Weyl denominator vanishes at the supplied angles."""


class DegenerateInput(HaarTestError, ValueError):
    pass


class EmptySample(HaarTestError, ValueError):
    pass


class MixedDeterminants(HaarTestError, ValueError):
    pass


class NonPositiveParameter(HaarTestError, ValueError):
    pass
