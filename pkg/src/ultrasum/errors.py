"""Exception types raised across the package."""


class UltrasumError(Exception):
    """Base class for all package errors."""


class InputError(UltrasumError, ValueError):
    """Invalid user input (bad table, bad file, bad flag value)."""


class NumericCheckFailed(UltrasumError):
    """A numerical certificate or consistency check did not hold."""


# seqcore
class NonPositiveEntry(InputError):
    pass


class M0NotOne(InputError):
    pass


class TableTooShort(InputError):
    pass


class OverflowAtIndex(UltrasumError, OverflowError):
    def __init__(self, index):
        super().__init__(f"linear-domain value overflows at index {index}")
        self.index = index


class NegativeArgument(InputError):
    pass


class WindowTooSmall(InputError):
    pass


# quad
class MaxSubdivisionsExceeded(NumericCheckFailed):
    def __init__(self, result):
        super().__init__(
            f"subdivision limit reached (estimate {result.value!r}, "
            f"error {result.abs_error_estimate:.3g})")
        self.result = result


class NonFiniteIntegrand(NumericCheckFailed):
    def __init__(self, point):
        super().__init__(f"integrand is not finite at {point!r}")
        self.point = point


class EnvelopeNotSummable(NumericCheckFailed):
    pass


# kernel
class DeltaOutOfRange(InputError):
    pass


class FlavorSequenceMismatch(InputError):
    pass


class ArgumentOutsideSector(InputError):
    pass


class SandwichNotVerified(NumericCheckFailed):
    pass


# moments / formal
class ReLambdaNegative(InputError):
    pass


class MomentTableTooShort(InputError):
    pass


class ZeroSeries(InputError):
    pass


class OutsideGuard(InputError):
    pass


# extend / summation
class NoNormCertificate(NumericCheckFailed):
    pass


class DirectionOutsideSector(InputError):
    pass


class ArgumentTooFarFromDirection(InputError):
    pass


class BandExceeded(NumericCheckFailed):
    pass


class ContinuationMismatch(NumericCheckFailed):
    pass


class GrowthBoundViolated(NumericCheckFailed):
    pass
