"""Structured grid container and raw I/O.

Grids are 1 to 4 dimensional, dense, row-major (last dimension varies
fastest).  Four element kinds are supported: 32/64-bit IEEE floats and
32/64-bit signed integers.  Integer grids are processed by the rest of
the pipeline in 64-bit float, so 64-bit integers are exact only within
the 53-bit mantissa.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridTooSmall, NonFiniteValue, SizeMismatch

MAX_RANK = 4


class ElementKind(enum.Enum):
    F32 = "f32"
    F64 = "f64"
    I32 = "i32"
    I64 = "i64"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype(_DTYPES[self])

    @property
    def itemsize(self) -> int:
        return self.dtype.itemsize

    @property
    def is_integer(self) -> bool:
        return self in (ElementKind.I32, ElementKind.I64)


_DTYPES = {
    ElementKind.F32: "<f4",
    ElementKind.F64: "<f8",
    ElementKind.I32: "<i4",
    ElementKind.I64: "<i8",
}


class BoundMode(enum.Enum):
    ABS = "abs"
    REL = "rel"


def _check_dims(dims: tuple[int, ...]) -> tuple[int, ...]:
    dims = tuple(int(d) for d in dims)
    if not 1 <= len(dims) <= MAX_RANK:
        raise ValueError(f"rank must be 1..{MAX_RANK}, got {len(dims)}")
    if any(d < 1 for d in dims):
        raise ValueError(f"all extents must be >= 1, got {dims}")
    return dims


@dataclass(frozen=True)
class ScalarGrid:
    """Immutable dense scalar field.

    ``data`` is stored C-contiguous in the native dtype of ``kind`` and
    marked read-only after construction.
    """

    dims: tuple[int, ...]
    kind: ElementKind
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        dims = _check_dims(self.dims)
        arr = np.ascontiguousarray(self.data, dtype=self.kind.dtype).reshape(dims)
        arr.flags.writeable = False
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "data", arr)

    @property
    def rank(self) -> int:
        return len(self.dims)

    @property
    def point_count(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    @property
    def nbytes(self) -> int:
        return self.point_count * self.kind.itemsize

    def to_bytes(self) -> bytes:
        """Serialize back to the little-endian raw layout of load_raw."""
        return self.data.tobytes()

    def as_f64(self) -> np.ndarray:
        """Writable float64 working copy."""
        return self.data.astype(np.float64)


def load_raw(buf: bytes, dims, kind: ElementKind) -> ScalarGrid:
    """Build a grid from a raw little-endian buffer.

    Raises SizeMismatch when the byte count is wrong and NonFiniteValue
    when a float buffer contains NaN or Inf (the flat index of the first
    offender is reported).
    """
    dims = _check_dims(tuple(dims))
    n = int(np.prod(dims, dtype=np.int64))
    expected = n * kind.itemsize
    if len(buf) != expected:
        raise SizeMismatch(
            f"expected {expected} bytes for dims {dims} kind {kind.value}, got {len(buf)}"
        )
    arr = np.frombuffer(buf, dtype=kind.dtype).reshape(dims)
    if not kind.is_integer:
        finite = np.isfinite(arr)
        if not finite.all():
            idx = int(np.flatnonzero(~finite.ravel())[0])
            raise NonFiniteValue(f"non-finite value at flat index {idx}")
    return ScalarGrid(dims, kind, arr.copy())


def value_range(grid: ScalarGrid) -> tuple[float, float, float]:
    """(min, max, max - min) of the grid in float64."""
    a = grid.data
    lo = float(a.min())
    hi = float(a.max())
    return lo, hi, hi - lo


@dataclass(frozen=True)
class ErrorBoundSpec:
    """User-facing error bound.

    ABS mode: epsilon is the point-wise absolute bound.
    REL mode: the bound is epsilon times the grid's value range.
    """

    mode: BoundMode
    epsilon: float

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon <= 0:
            raise ValueError(f"epsilon must be finite and > 0, got {self.epsilon}")

    def resolve(self, grid: ScalarGrid) -> float:
        """Absolute point-wise bound for this grid.

        A constant grid under REL mode resolves to 0, which downstream
        treats as exact (lossless) reconstruction.
        """
        if self.mode is BoundMode.ABS:
            return float(self.epsilon)
        _, _, rng = value_range(grid)
        return float(self.epsilon) * rng


# Per-axis neighbor reach classes used when clamping samples to the
# interior: cubic needs +-1 and +-3, linear only +-1, tiny axes are
# unconstrained (and unusable for along-axis prediction measurements).
_CUBIC_REACH = 3
_LINEAR_REACH = 1


def axis_sampling_reach(extent: int) -> int | None:
    """Neighbor reach usable along one axis, or None when the axis is
    too short to measure along-axis prediction at all."""
    if extent >= 2 * _CUBIC_REACH + 1:
        return _CUBIC_REACH
    if extent >= 2 * _LINEAR_REACH + 1:
        return _LINEAR_REACH
    return None


def interior_box(dims: tuple[int, ...]) -> list[tuple[int, int]]:
    """Inclusive per-axis coordinate ranges for interior sampling.

    Raises GridTooSmall when no axis supports neighbor measurements.
    """
    ranges = []
    usable = 0
    for ext in dims:
        reach = axis_sampling_reach(ext)
        if reach is None:
            ranges.append((0, ext - 1))
        else:
            usable += 1
            ranges.append((reach, ext - 1 - reach))
    if usable == 0:
        raise GridTooSmall(f"no axis of dims {dims} is long enough to sample")
    return ranges


def sample_indices(grid: ScalarGrid, rate: float) -> np.ndarray:
    """Deterministic strided sample of interior points.

    Returns an (n, rank) int64 array of multi-indices.  The target count
    is ceil(rate * total_points), clamped to the interior size, spread
    evenly across the row-major interior index space.
    """
    if not 0 < rate <= 1:
        raise ValueError(f"sample rate must be in (0, 1], got {rate}")
    box = interior_box(grid.dims)
    sizes = [hi - lo + 1 for lo, hi in box]
    m = int(np.prod(sizes, dtype=np.int64))
    want = math.ceil(rate * grid.point_count)
    n = min(want, m)
    flat = (np.arange(n, dtype=np.int64) * m) // n
    idx = np.empty((n, grid.rank), dtype=np.int64)
    rem = flat
    for ax in range(grid.rank - 1, -1, -1):
        lo, _ = box[ax]
        idx[:, ax] = rem % sizes[ax] + lo
        rem = rem // sizes[ax]
    return idx


def sample_uniform(grid: ScalarGrid, rate: float) -> list[tuple[tuple[int, ...], float]]:
    """Deterministic interior sample as (multi_index, value) pairs."""
    idx = sample_indices(grid, rate)
    vals = grid.data[tuple(idx.T)].astype(np.float64)
    return [(tuple(int(c) for c in row), float(v)) for row, v in zip(idx, vals)]
