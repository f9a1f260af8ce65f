"""Level plans, per-level configuration, and anchor lattices.

Prediction runs level by level from coarse to fine.  Anchor points on a
fixed-stride lattice are stored losslessly and seed the first level;
each level then predicts the points of its stride lattice that the
coarser lattice does not contain.  Level numbering for error bounds is
1 at the finest stride, growing coarser.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .kernels import InterpKernel, KernelTag

DEFAULT_ANCHOR_STRIDE = 64

PARADIGM_ONED = "oned"
PARADIGM_MULTIDIM = "multidim"

# Kernel variants in cost order; index doubles as the tag nibble.
KERNEL_VARIANTS: tuple[InterpKernel, ...] = (
    InterpKernel(KernelTag.LINEAR, False),
    InterpKernel(KernelTag.CUBIC_NOT_A_KNOT, False),
    InterpKernel(KernelTag.CUBIC_NOT_A_KNOT, True),
    InterpKernel(KernelTag.CUBIC_NATURAL, False),
    InterpKernel(KernelTag.CUBIC_NATURAL, True),
)


def kernel_variant_index(kernel: InterpKernel) -> int:
    return KERNEL_VARIANTS.index(kernel)


def order_candidates(active_axes: tuple[int, ...]) -> tuple[tuple[int, ...], ...]:
    """Candidate axis orders for one-axis-at-a-time interpolation.

    Up to three axes every permutation is searched; at four the space is
    pruned to the identity plus each axis promoted to the front.
    """
    axes = tuple(sorted(active_axes))
    if len(axes) <= 3:
        return tuple(itertools.permutations(axes))
    cands = []
    for a in axes:
        rest = tuple(x for x in axes if x != a)
        cands.append((a,) + rest)
    return tuple(cands)


@dataclass(frozen=True)
class LevelConfig:
    """Kernel and traversal paradigm for one level."""

    kernel: InterpKernel
    paradigm: str = PARADIGM_ONED
    axis_order: tuple[int, ...] | None = None

    def __post_init__(self):
        if self.paradigm not in (PARADIGM_ONED, PARADIGM_MULTIDIM):
            raise ValueError(f"unknown paradigm {self.paradigm!r}")
        if self.paradigm == PARADIGM_ONED and self.axis_order is None:
            raise ValueError("one-axis paradigm needs an axis order")


def encode_tag(cfg: LevelConfig, active_axes: tuple[int, ...]) -> int:
    k = kernel_variant_index(cfg.kernel)
    if cfg.paradigm == PARADIGM_MULTIDIM:
        p = 0
    else:
        p = 1 + order_candidates(active_axes).index(tuple(cfg.axis_order))
    return p * 8 + k


def decode_tag(tag: int, active_axes: tuple[int, ...]) -> LevelConfig:
    k = tag % 8
    p = tag // 8
    kernel = KERNEL_VARIANTS[k]
    if p == 0:
        return LevelConfig(kernel, PARADIGM_MULTIDIM)
    return LevelConfig(kernel, PARADIGM_ONED, order_candidates(active_axes)[p - 1])


def level_bound(global_e: float, alpha: float, beta: float, level: int) -> float:
    """Per-level absolute bound; ``level`` counts 1 at the finest."""
    if alpha < 1 or beta < 1:
        raise ValueError(f"alpha and beta must be >= 1, got {alpha}, {beta}")
    return global_e / min(alpha ** (level - 1), beta)


@dataclass(frozen=True)
class LevelSpec:
    stride: int
    bound: float
    config: LevelConfig


@dataclass(frozen=True)
class LevelPlan:
    anchor_stride: int
    frozen_dim: int | None
    levels: tuple[LevelSpec, ...]  # coarse to fine


def active_axes_of(rank: int, frozen_dim: int | None) -> tuple[int, ...]:
    return tuple(a for a in range(rank) if a != frozen_dim)


def build_level_plan(dims, anchor_stride: int, global_e: float,
                     alpha: float = 1.0, beta: float = 1.0,
                     frozen_dim: int | None = None,
                     level_configs=None) -> LevelPlan:
    """Plan the coarse-to-fine levels for a grid.

    ``level_configs`` is an optional coarse-to-fine list; missing
    entries default to linear one-axis interpolation in axis order.
    """
    dims = tuple(int(d) for d in dims)
    if anchor_stride < 2 or anchor_stride & (anchor_stride - 1):
        raise ValueError(f"anchor stride must be a power of two >= 2, got {anchor_stride}")
    if frozen_dim is not None and not 0 <= frozen_dim < len(dims):
        raise ValueError(f"frozen_dim {frozen_dim} out of range for rank {len(dims)}")
    active = active_axes_of(len(dims), frozen_dim)
    if not active:
        raise ValueError("freezing the only axis leaves nothing to predict")
    default = LevelConfig(InterpKernel(KernelTag.LINEAR), PARADIGM_ONED, active)
    n_levels = anchor_stride.bit_length() - 1
    specs = []
    for i in range(n_levels):
        stride = anchor_stride >> (i + 1)
        level_no = stride.bit_length()  # stride 2**(l-1) is level l
        cfg = default
        if level_configs is not None and i < len(level_configs) and level_configs[i] is not None:
            cfg = level_configs[i]
        specs.append(LevelSpec(stride, level_bound(global_e, alpha, beta, level_no), cfg))
    return LevelPlan(anchor_stride, frozen_dim, tuple(specs))


def anchor_axes(dims, anchor_stride: int, frozen_dim: int | None) -> list[np.ndarray]:
    """Per-axis anchor positions (stride 1 along a frozen axis)."""
    out = []
    for ax, ext in enumerate(dims):
        step = 1 if ax == frozen_dim else anchor_stride
        out.append(np.arange(0, ext, step, dtype=np.int64))
    return out


def anchor_count(dims, anchor_stride: int, frozen_dim: int | None) -> int:
    n = 1
    for pos in anchor_axes(dims, anchor_stride, frozen_dim):
        n *= len(pos)
    return n


def gather_anchors(work: np.ndarray, anchor_stride: int, frozen_dim: int | None) -> np.ndarray:
    """Anchor values in row-major lattice order."""
    axes = anchor_axes(work.shape, anchor_stride, frozen_dim)
    return work[np.ix_(*axes)].ravel()


def scatter_anchors(work: np.ndarray, values: np.ndarray, anchor_stride: int,
                    frozen_dim: int | None) -> None:
    axes = anchor_axes(work.shape, anchor_stride, frozen_dim)
    shape = tuple(len(a) for a in axes)
    work[np.ix_(*axes)] = values.reshape(shape)


@dataclass(frozen=True, eq=False)
class CompressionConfig:
    """Everything the decompressor needs besides the coded streams."""

    predictor: str  # "interp" or "lorenzo"
    resolved_bound: float
    radius: int
    anchor_stride: int = DEFAULT_ANCHOR_STRIDE
    alpha: float = 1.0
    beta: float = 1.0
    frozen_dim: int | None = None
    level_configs: tuple[LevelConfig, ...] = ()  # coarse to fine
    md_alpha: tuple[float, ...] = ()  # per full-rank axis, f32 precision
    lorenzo_order: int = 1
    block_size: int = 0  # 0 means no per-block table
    block_table: np.ndarray | None = None  # (n_levels, n_blocks) uint8

    def __post_init__(self):
        if self.predictor not in ("interp", "lorenzo"):
            raise ValueError(f"unknown predictor {self.predictor!r}")
        if self.predictor == "lorenzo" and self.lorenzo_order not in (1, 2):
            raise ValueError(f"lorenzo order must be 1 or 2, got {self.lorenzo_order}")
