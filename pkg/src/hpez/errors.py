"""Exception types raised across the toolkit."""


class HpezError(Exception):
    """Base class for all toolkit errors."""


class SizeMismatch(HpezError):
    """Raw buffer length does not match dims times element size."""


class NonFiniteValue(HpezError):
    """Input contains NaN or Inf."""


class GridTooSmall(HpezError):
    """Grid has no interior usable for neighbor sampling."""


class StencilLengthMismatch(HpezError):
    """Stencil value count does not match the kernel's support."""


class OutlierUnderflow(HpezError):
    """Outlier escape code seen but the outlier list is exhausted."""


class EmptyInput(HpezError):
    """Entropy coder was given an empty symbol sequence."""


class TruncatedStream(HpezError):
    """Bitstream ended before the expected symbol count was decoded."""


class InvalidTable(HpezError):
    """Code-length table does not describe a valid prefix code."""


class CorruptStream(HpezError):
    """Lossless-pass payload failed to decode."""


class BadMagic(HpezError):
    """Archive does not start with the expected magic bytes."""


class UnsupportedVersion(HpezError):
    """Archive version byte is newer than this implementation."""


class LengthMismatch(HpezError):
    """Archive section length disagrees with the available bytes."""


class DimsMismatch(HpezError):
    """Two grids being compared do not share the same dims."""


class RankTooLow(HpezError):
    """Metric requires a higher-rank grid (SSIM needs rank >= 2)."""
