"""Exception types raised across the package."""


class ForgeError(Exception):
    """Base class for all errors raised by forge."""


class AllZeroImage(ForgeError, ValueError):
    pass


class DimMismatch(ForgeError, ValueError):
    pass


class NonSquareGrid(ForgeError, ValueError):
    pass


class InvalidTiming(ForgeError, ValueError):
    pass


class DomainTagMismatch(ForgeError, ValueError):
    pass


class EmptyPool(ForgeError, ValueError):
    pass


class EmptyROI(ForgeError, ValueError):
    pass


class ZeroReference(ForgeError, ValueError):
    pass


class DegenerateInput(ForgeError, ValueError):
    pass


class ContainerError(ForgeError, IOError):
    """Malformed or unreadable MSD container."""


class CorruptHeader(ContainerError):
    pass


class LengthMismatch(ContainerError):
    pass


class UnsupportedDtype(ContainerError):
    pass
