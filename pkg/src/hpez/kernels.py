"""Interpolation kernels and multi-axis blend weights.

Coefficient rows are defined in exact rationals and exported as float64
for the vectorized passes.  Offsets are in units of the current level
stride; the predicted point sits at offset 0.

Two stencil families exist per cubic spline flavor: the inter-level row
uses neighbors at -3,-1,+1,+3 (all from coarser levels) and the
same-level row additionally reaches the current level's already
reconstructed points at -2,+2.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction as Fr

import numpy as np

from .errors import StencilLengthMismatch


class KernelTag(enum.Enum):
    LINEAR = "linear"
    CUBIC_NOT_A_KNOT = "cubic_not_a_knot"
    CUBIC_NATURAL = "cubic_natural"


@dataclass(frozen=True)
class InterpKernel:
    """A spline flavor plus the same-level flag selecting its stencil."""

    tag: KernelTag
    same_level: bool = False

    def __post_init__(self):
        if self.tag is KernelTag.LINEAR and self.same_level:
            raise ValueError("linear kernel has no same-level variant")


# Exact rows keyed by (tag, same_level): ordered (offset, coefficient).
EXACT_ROWS: dict[tuple[KernelTag, bool], tuple[tuple[int, Fr], ...]] = {
    (KernelTag.LINEAR, False): (
        (-1, Fr(1, 2)),
        (1, Fr(1, 2)),
    ),
    (KernelTag.CUBIC_NOT_A_KNOT, False): (
        (-3, Fr(-1, 16)),
        (-1, Fr(9, 16)),
        (1, Fr(9, 16)),
        (3, Fr(-1, 16)),
    ),
    (KernelTag.CUBIC_NATURAL, False): (
        (-3, Fr(-3, 40)),
        (-1, Fr(23, 40)),
        (1, Fr(23, 40)),
        (3, Fr(-3, 40)),
    ),
    (KernelTag.CUBIC_NOT_A_KNOT, True): (
        (-2, Fr(-1, 6)),
        (-1, Fr(4, 6)),
        (1, Fr(4, 6)),
        (2, Fr(-1, 6)),
    ),
    (KernelTag.CUBIC_NATURAL, True): (
        (-3, Fr(3, 62)),
        (-2, Fr(-18, 62)),
        (-1, Fr(46, 62)),
        (1, Fr(46, 62)),
        (2, Fr(-18, 62)),
        (3, Fr(3, 62)),
    ),
}

# Reduced rows for stencils truncated by the grid edge.  Each is the
# exact polynomial fit through the surviving neighbors, evaluated at 0.
EDGE_ROWS: dict[tuple[int, ...], tuple[Fr, ...]] = {
    (-1, 1, 3): (Fr(3, 8), Fr(3, 4), Fr(-1, 8)),
    (-3, -1, 1): (Fr(-1, 8), Fr(3, 4), Fr(3, 8)),
    (-2, -1, 1): (Fr(-1, 3), Fr(1, 1), Fr(1, 3)),
    (-1, 1): (Fr(1, 2), Fr(1, 2)),
    (-3, -1): (Fr(-1, 2), Fr(3, 2)),
    (-2, -1): (Fr(-1, 1), Fr(2, 1)),
    (-1,): (Fr(1, 1),),
}


def float_row(kernel: InterpKernel) -> tuple[tuple[int, ...], np.ndarray]:
    offs, coefs = zip(*EXACT_ROWS[(kernel.tag, kernel.same_level)])
    return offs, np.array([float(c) for c in coefs], dtype=np.float64)


def kernel_predict(kernel: InterpKernel, stencil) -> float:
    """Predict the midpoint value from an ordered full stencil."""
    offs, row = float_row(kernel)
    vals = np.asarray(stencil, dtype=np.float64)
    if vals.shape != (len(offs),):
        raise StencilLengthMismatch(
            f"{kernel.tag.value} same_level={kernel.same_level} wants "
            f"{len(offs)} values, got {vals.shape}"
        )
    return float(row @ vals)


def resolve_row(kernel: InterpKernel, available: tuple[int, ...]) -> tuple[tuple[int, ...], np.ndarray]:
    """Coefficient row for the neighbors actually inside the grid.

    ``available`` is the sorted subset of the kernel's nominal offsets
    that are in bounds.  Falls back to the best lower-order fit: full
    row, then 3-point quadratic, then 2-point linear, then nearest copy.
    Targets always have the -1 neighbor (position >= stride), so the
    available set is never empty.
    """
    nominal, _ = float_row(kernel)
    if available == nominal:
        return float_row(kernel)
    if kernel.tag is KernelTag.LINEAR:
        # Only the right neighbor can be missing.
        offs = (-1,)
    elif not kernel.same_level:
        keep = [o for o in (-3, -1, 1, 3) if o in available]
        offs = _best_interlevel(tuple(keep))
    else:
        keep = [o for o in (-3, -2, -1, 1, 2, 3) if o in available]
        offs = _best_samelevel(tuple(keep))
    if offs == nominal:
        return float_row(kernel)
    row = EDGE_ROWS.get(offs)
    if row is None:
        # Truncated 6-point same-level support falls back onto the
        # 4-point same-level row.
        return float_row(InterpKernel(KernelTag.CUBIC_NOT_A_KNOT, True))
    return offs, np.array([float(c) for c in row], dtype=np.float64)


def _best_interlevel(keep: tuple[int, ...]) -> tuple[int, ...]:
    for cand in ((-1, 1, 3), (-3, -1, 1), (-1, 1), (-3, -1)):
        if set(cand) <= set(keep):
            return cand
    return (-1,)


def _best_samelevel(keep: tuple[int, ...]) -> tuple[int, ...]:
    # Same-level targets sit at >= 3 strides, so only the right side
    # truncates; prefer the nearest symmetric-ish supports.
    for cand in ((-2, -1, 1, 2), (-2, -1, 1), (-2, -1)):
        if set(cand) <= set(keep):
            return cand
    return (-1,)


ZERO_VARIANCE_EPS = 1e-30


@dataclass(frozen=True)
class MdWeights:
    """Blend weights for combining per-axis 1D predictions."""

    sigma_sq: tuple[float, ...]
    alpha: tuple[float, ...]
    combined_variance: float


def md_weights(sigma_sq) -> MdWeights:
    """Variance-minimizing convex weights over 2..4 axes.

    The optimum weights each axis by the product of the other axes'
    variances, equivalently by inverse variance, which is how they are
    computed here to avoid overflow.  An axis with (near) zero variance
    is an exact predictor: the first such axis gets weight 1.
    """
    sig = tuple(float(s) for s in sigma_sq)
    n = len(sig)
    if not 2 <= n <= 4:
        raise ValueError(f"need 2..4 axes, got {n}")
    if any(s < 0 or not np.isfinite(s) for s in sig):
        raise ValueError(f"variances must be finite and >= 0, got {sig}")
    for i, s in enumerate(sig):
        if s <= ZERO_VARIANCE_EPS:
            alpha = tuple(1.0 if j == i else 0.0 for j in range(n))
            return MdWeights(sig, alpha, 0.0)
    inv = np.array([1.0 / s for s in sig], dtype=np.float64)
    total = float(inv.sum())
    alpha = tuple(float(w / total) for w in inv)
    # The harmonic combination is <= min(sig) mathematically; the clamp
    # keeps division rounding from overshooting that bound by an ulp.
    return MdWeights(sig, alpha, min(1.0 / total, min(sig)))
