"""Linear error-bounded quantization of prediction residuals.

A residual is mapped to an integer step count k of size 2*bound, coded
as k + radius.  Code 0 is the outlier escape: the exact original value
is stored on the side and reconstruction is verbatim.  Everything else
reconstructs as prediction + 2*bound*k, which keeps the point-wise
error within bound.  A bound of exactly 0 degenerates to lossless
behavior: only residuals of exactly 0 are codable.

Reconstructions are rounded to the grid's native element kind before
the bound check, so the value the decompressor finally emits (a float32
or an integer, not the float64 the passes run in) is the value the
guarantee was verified against.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OutlierUnderflow

DEFAULT_RADIUS = 32768

# Native-kind rounding applied to reconstructions.
ROUND_NONE = 0  # f64 grids: reconstructions are already representable
ROUND_F32 = 1   # squeeze through float32
ROUND_INT = 2   # round to nearest integer


@dataclass(frozen=True)
class LinearQuantizer:
    bound: float
    radius: int = DEFAULT_RADIUS

    def __post_init__(self):
        if self.bound < 0 or not np.isfinite(self.bound):
            raise ValueError(f"bound must be finite and >= 0, got {self.bound}")
        if not 1 <= self.radius <= 1 << 30:
            raise ValueError(f"radius out of range: {self.radius}")


@dataclass
class QuantStream:
    """Codes plus the ordered outlier values they escape to."""

    codes: np.ndarray
    outliers: np.ndarray = field(default_factory=lambda: np.empty(0, np.float64))

    def __post_init__(self):
        self.codes = np.asarray(self.codes, dtype=np.int32)
        self.outliers = np.asarray(self.outliers, dtype=np.float64)
        n_escape = int(np.count_nonzero(self.codes == 0))
        if n_escape != len(self.outliers):
            raise ValueError(
                f"{n_escape} escape codes but {len(self.outliers)} outliers"
            )


def rounding_for_kind(kind) -> int:
    """Rounding mode matching a grid's ElementKind."""
    if kind.is_integer:
        return ROUND_INT
    return ROUND_F32 if kind.dtype.itemsize == 4 else ROUND_NONE


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def round_native(values: np.ndarray, rounding: int) -> np.ndarray:
    if rounding == ROUND_F32:
        return values.astype(np.float32).astype(np.float64)
    if rounding == ROUND_INT:
        return np.rint(values)
    return values


def quantize_block(orig, pred, q: LinearQuantizer, rounding: int = ROUND_NONE):
    """Vectorized quantization of one batch of points.

    Returns (codes int32, recon float64, outliers float64).  Recon holds
    the decompressor-visible values; outliers are the originals of the
    escaped points in flat order.
    """
    orig = np.asarray(orig, dtype=np.float64)
    pred = np.asarray(pred, dtype=np.float64)
    err = orig - pred
    if q.bound > 0:
        k = _round_half_away(err / (2.0 * q.bound))
        in_range = np.abs(k) < q.radius
        k = np.where(in_range, k, 0.0)
        recon = round_native(pred + (2.0 * q.bound) * k, rounding)
        # Rounding can nudge the reconstruction past the bound; such
        # points escape so the guarantee stays exact.
        ok = in_range & (np.abs(recon - orig) <= q.bound)
        codes = np.where(ok, k.astype(np.int64) + q.radius, 0).astype(np.int32)
    else:
        recon = round_native(pred.copy(), rounding)
        ok = recon == orig
        codes = np.where(ok, q.radius, 0).astype(np.int32)
    recon = np.where(ok, recon, orig)
    outliers = orig[~ok].ravel()
    return codes, recon, outliers


def dequantize_block(pred, codes, outliers, cursor: int, q: LinearQuantizer,
                     rounding: int = ROUND_NONE):
    """Inverse of quantize_block for one batch.

    ``outliers`` is the full outlier array; ``cursor`` is how many have
    been consumed so far.  Returns (recon float64, new_cursor).
    """
    pred = np.asarray(pred, dtype=np.float64)
    codes = np.asarray(codes)
    escape = codes == 0
    k = (codes - q.radius).astype(np.float64)
    recon = round_native(pred + (2.0 * q.bound) * np.where(escape, 0.0, k),
                         rounding)
    n_esc = int(np.count_nonzero(escape))
    if n_esc:
        if cursor + n_esc > len(outliers):
            raise OutlierUnderflow(
                f"need {n_esc} outliers at cursor {cursor}, have {len(outliers)}"
            )
        recon[escape] = outliers[cursor:cursor + n_esc]
        cursor += n_esc
    return recon, cursor


def quantize(original: float, prediction: float, q: LinearQuantizer):
    """Scalar quantization: returns (code, reconstructed)."""
    codes, recon, _ = quantize_block(
        np.array([original]), np.array([prediction]), q
    )
    return int(codes[0]), float(recon[0])


def dequantize(prediction: float, code: int, outlier, q: LinearQuantizer) -> float:
    """Scalar inverse.  ``outlier`` is consulted only when code == 0."""
    if code == 0:
        if outlier is None:
            raise OutlierUnderflow("escape code with no outlier value")
        return float(outlier)
    out = np.empty(0, np.float64)
    recon, _ = dequantize_block(np.array([prediction]), np.array([code], np.int32), out, 0, q)
    return float(recon[0])
