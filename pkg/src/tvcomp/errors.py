"""Exception hierarchy shared across the package."""


class TvcError(Exception):
    """Base class for all tvcomp errors."""


# container / file format
class ManifestCorrupt(TvcError):
    pass


class PayloadTruncated(TvcError):
    pass


class PayloadNonFinite(TvcError):
    pass


class DtypeUnsupported(TvcError):
    pass


class IoFailure(TvcError):
    pass


# vector algebra
class ShapeMismatch(TvcError):
    pass


class NameMismatch(TvcError):
    pass


class EmptyVector(TvcError):
    pass


class EmptyList(TvcError):
    pass


class DimMismatch(TvcError):
    pass


# compression
class InvalidDensity(TvcError):
    pass


class NonFiniteScale(TvcError):
    pass


# codecs
class DomainError(TvcError):
    pass


class BitstreamCorrupt(TvcError):
    pass


class HeaderMismatch(TvcError):
    pass


class MaskOverlap(TvcError):
    pass


# composition
class RankMismatch(TvcError):
    pass


class LossNonFinite(TvcError):
    pass


class SweepRequired(TvcError):
    """Signals that no closed-form scale recommendation exists for this regime.

    Not a failure: callers are expected to fall back to a grid sweep.
    """
