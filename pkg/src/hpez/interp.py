"""Level-wise interpolation passes over the working grid.

Targets of a level at stride s are the lattice points whose coordinates
are multiples of s (along non-frozen axes) with at least one odd
multiple.  They are processed as parity classes: the set of axes with
an odd-multiple coordinate.  Classes run in stage order (one odd axis,
then two, ...) so every stencil value a class needs was reconstructed
by an earlier class, an earlier level, or the anchors.  Within a commit
all predictions depend only on prior state, so each commit is a single
vectorized step and codes are emitted in row-major order of the class
lattice, which makes the stream independent of the traversal mode.

Traversal modes differ only in the memory walk of the arithmetic:
"fvfi" operates on C-order views (innermost loop along the fastest
varying axis), "dim_major" forces the interpolation axis innermost by
rearranging operands, which rereads the grid with the strided access
pattern the fast-varying-first order exists to avoid.  Outputs are
bit-identical either way.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import CorruptStream
from .kernels import InterpKernel, KernelTag, resolve_row
from .plan import (PARADIGM_ONED, LevelConfig, LevelSpec, decode_tag)
from .quant import (ROUND_NONE, LinearQuantizer, dequantize_block,
                    quantize_block)

TRAVERSAL_FVFI = "fvfi"
TRAVERSAL_DIM_MAJOR = "dim_major"

_INTER_UNITS = {
    KernelTag.LINEAR: (-1, 1),
    KernelTag.CUBIC_NOT_A_KNOT: (-3, -1, 1, 3),
    KernelTag.CUBIC_NATURAL: (-3, -1, 1, 3),
}
_SAME_UNITS = {
    KernelTag.CUBIC_NOT_A_KNOT: (-2, -1, 1, 2),
    KernelTag.CUBIC_NATURAL: (-3, -2, -1, 1, 2, 3),
}


class CodeSink:
    """Collects codes and outliers during compression."""

    def __init__(self):
        self.code_chunks: list[np.ndarray] = []
        self.outlier_chunks: list[np.ndarray] = []

    def put(self, codes: np.ndarray, outliers: np.ndarray):
        self.code_chunks.append(codes.ravel())
        self.outlier_chunks.append(outliers)

    def codes(self) -> np.ndarray:
        if not self.code_chunks:
            return np.empty(0, np.int32)
        return np.concatenate(self.code_chunks)

    def outliers(self) -> np.ndarray:
        if not self.outlier_chunks:
            return np.empty(0, np.float64)
        return np.concatenate(self.outlier_chunks)


class CodeSource:
    """Feeds back codes and outliers during decompression."""

    def __init__(self, codes: np.ndarray, outliers: np.ndarray):
        self.codes_arr = np.asarray(codes, dtype=np.int32)
        self.outliers = np.asarray(outliers, dtype=np.float64)
        self.pos = 0
        self.ocur = 0

    def take(self, n: int) -> np.ndarray:
        if self.pos + n > len(self.codes_arr):
            raise CorruptStream(
                f"code stream exhausted: want {n} at {self.pos}, "
                f"have {len(self.codes_arr)}")
        out = self.codes_arr[self.pos:self.pos + n]
        self.pos += n
        return out


class PassStats:
    """Per-level prediction-error and code statistics (tuning only).

    With ``dense_shape`` set, absolute prediction errors are also
    scattered into one full-size grid per level so callers can reduce
    them over arbitrary sub-regions (block-wise tuning).
    """

    def __init__(self, n_levels: int, dense_shape=None):
        self.err_sum = np.zeros(n_levels)
        self.count = np.zeros(n_levels, dtype=np.int64)
        self.code_chunks: list[list[np.ndarray]] = [[] for _ in range(n_levels)]
        self.err_grids = None
        if dense_shape is not None:
            self.err_grids = [np.zeros(dense_shape) for _ in range(n_levels)]

    def record(self, li: int, err_sum: float, n: int, codes: np.ndarray):
        self.err_sum[li] += err_sum
        self.count[li] += n
        self.code_chunks[li].append(codes.ravel())

    def level_mae(self, li: int) -> float:
        n = self.count[li]
        return float(self.err_sum[li] / n) if n else 0.0

    def all_codes(self) -> np.ndarray:
        chunks = [c for lv in self.code_chunks for c in lv]
        if not chunks:
            return np.empty(0, np.int32)
        return np.concatenate(chunks)


@dataclass
class _ClassCtx:
    work: np.ndarray
    desc: list[tuple[int, int, int]]  # per-axis (start, stop, step)
    shape: tuple[int, ...]
    stride: int
    bound: float


def _axis_count(start: int, stop: int, step: int) -> int:
    return len(range(start, stop, step))


def _class_descriptor(dims, v, frozen_axes, s):
    desc = []
    shape = []
    for ax, ext in enumerate(dims):
        if ax in frozen_axes:
            d = (0, ext, 1)
        elif ax in v:
            d = (s, ext, 2 * s)
        else:
            d = (0, ext, 2 * s)
        desc.append(d)
        shape.append(_axis_count(*d))
    return desc, tuple(shape)


def _view(work, desc):
    return work[tuple(slice(a, b, c) for a, b, c in desc)]


def _segments(start: int, step: int, count: int, ext: int, units, s: int):
    """Contiguous index runs along one axis sharing an availability set.

    Left offsets only miss at the first positions, right offsets only at
    the last, so there are at most a handful of runs.  Yields
    (j_lo, j_hi, units_available) with j_hi exclusive.
    """
    bounds = {0, count}
    for u in units:
        off = u * s
        if off < 0:
            # first j with start + j*step + off >= 0
            j = -((start + off) // step) if start + off < 0 else 0
            bounds.add(min(max(j, 0), count))
        else:
            # first j with start + j*step + off > ext-1
            j = (ext - 1 - off - start) // step + 1
            bounds.add(min(max(j, 0), count))
    cuts = sorted(bounds)
    for ja, jb in zip(cuts, cuts[1:]):
        if ja >= jb:
            continue
        lo = start + ja * step
        hi = start + (jb - 1) * step
        avail = tuple(u for u in units
                      if lo + u * s >= 0 and hi + u * s <= ext - 1)
        yield ja, jb, avail


def _rearranged(arr: np.ndarray, axis: int) -> np.ndarray:
    return np.ascontiguousarray(np.moveaxis(arr, axis, -1))


def _predict_along(ctx: _ClassCtx, axis: int, tag: KernelTag, same_level: bool,
                   traversal: str) -> np.ndarray:
    """Full-slab 1D prediction along one axis with edge fallbacks."""
    start, stop, step = ctx.desc[axis]
    count = ctx.shape[axis]
    ext = ctx.work.shape[axis]
    s = ctx.stride
    units = _SAME_UNITS[tag] if same_level else _INTER_UNITS[tag]
    kernel = InterpKernel(tag, same_level)
    pred = np.empty(ctx.shape, dtype=np.float64)
    dim_major = traversal == TRAVERSAL_DIM_MAJOR and ctx.work.ndim > 1
    for ja, jb, avail in _segments(start, step, count, ext, units, s):
        offs, row = resolve_row(kernel, avail)
        seg_desc = list(ctx.desc)
        acc = None
        for off_u, coef in zip(offs, row):
            off = off_u * s
            a0 = start + ja * step + off
            a1 = start + (jb - 1) * step + off + 1
            seg_desc[axis] = (a0, a1, step)
            nb = _view(ctx.work, seg_desc)
            if dim_major:
                nb = _rearranged(nb, axis)
            term = coef * nb
            acc = term if acc is None else acc + term
        if dim_major:
            acc = np.ascontiguousarray(np.moveaxis(acc, -1, axis))
        sel = [slice(None)] * len(ctx.shape)
        sel[axis] = slice(ja, jb)
        pred[tuple(sel)] = acc
    return pred


def _parity_mask(shape, axis: int, even: bool) -> np.ndarray:
    par = (np.arange(shape[axis]) % 2 == 0) if even else (np.arange(shape[axis]) % 2 == 1)
    view = [1] * len(shape)
    view[axis] = shape[axis]
    return np.broadcast_to(par.reshape(view), shape)


def _oned_axis(order, v) -> int:
    """Interpolation axis for a one-axis-at-a-time class: the class axis
    that the configured order visits last."""
    pos = {ax: i for i, ax in enumerate(order)}
    return max(v, key=lambda ax: pos[ax])


def _blend_weights(md_alpha, v) -> dict[int, float]:
    w = {i: max(float(md_alpha[i]), 0.0) for i in v}
    total = sum(w.values())
    if total <= 0.0:
        return {i: 1.0 / len(v) for i in v}
    return {i: w[i] / total for i in v}


class _LevelRunner:
    def __init__(self, work, *, direction, radius, frozen_axes, md_alpha,
                 rounding, traversal, sink=None, source=None,
                 stats=None, block_size=0):
        self.work = work
        self.direction = direction
        self.radius = radius
        self.frozen_axes = frozenset(frozen_axes)
        self.md_alpha = md_alpha
        self.rounding = rounding
        self.traversal = traversal
        self.sink = sink
        self.source = source
        self.stats = stats
        self.block_size = block_size
        self.active = tuple(ax for ax in range(work.ndim)
                            if ax not in self.frozen_axes)

    # -- commit ------------------------------------------------------

    def _commit(self, ctx: _ClassCtx, pred, mask, li: int):
        q = LinearQuantizer(ctx.bound, self.radius)
        tview = _view(self.work, ctx.desc)
        if self.direction == "compress":
            if mask is None:
                orig = np.ascontiguousarray(tview)
                psel = pred
            else:
                orig = tview[mask]
                psel = pred[mask]
            codes, recon, outl = quantize_block(orig, psel, q, self.rounding)
            if self.stats is not None:
                err = np.abs(orig - psel)
                self.stats.record(li, float(err.sum()), orig.size, codes)
                if self.stats.err_grids is not None:
                    g = _view(self.stats.err_grids[li], ctx.desc)
                    if mask is None:
                        g[...] = err.reshape(ctx.shape)
                    else:
                        g[mask] = err
            if mask is None:
                tview[...] = recon
            else:
                tview[mask] = recon
            self.sink.put(codes, outl)
        else:
            n = int(np.prod(ctx.shape)) if mask is None else int(np.count_nonzero(mask))
            codes = self.source.take(n)
            psel = pred if mask is None else pred[mask]
            recon, self.source.ocur = dequantize_block(
                psel.ravel(), codes, self.source.outliers, self.source.ocur,
                q, self.rounding)
            if mask is None:
                tview[...] = recon.reshape(ctx.shape)
            else:
                tview[mask] = recon

    # -- per-class prediction ----------------------------------------

    def _pred_uniform(self, ctx, cfg: LevelConfig, v, same_pass: bool):
        tag = cfg.kernel.tag
        if cfg.paradigm == PARADIGM_ONED or len(v) == 1:
            axis = _oned_axis(cfg.axis_order, v) if cfg.paradigm == PARADIGM_ONED else v[0]
            return _predict_along(ctx, axis, tag, same_pass, self.traversal)
        weights = _blend_weights(self.md_alpha, v)
        acc = None
        for i in sorted(v):
            p = _predict_along(ctx, i, tag, False, self.traversal)
            term = weights[i] * p
            acc = term if acc is None else acc + term
        return acc

    def _split_axis(self, cfg: LevelConfig, v):
        """Axis of the two-pass same-level split, or None when the
        config does not use it for this class."""
        if not cfg.kernel.same_level:
            return None
        if cfg.paradigm == PARADIGM_ONED:
            return _oned_axis(cfg.axis_order, v)
        return v[0] if len(v) == 1 else None

    def _run_class_uniform(self, v, cfg: LevelConfig, s, bound, li):
        desc, shape = _class_descriptor(self.work.shape, v, self.frozen_axes, s)
        if 0 in shape:
            return
        split = self._split_axis(cfg, v)
        if split is None:
            ctx = _ClassCtx(self.work, desc, shape, s, bound)
            pred = self._pred_uniform(ctx, cfg, v, same_pass=False)
            self._commit(ctx, pred, None, li)
            return
        ext = self.work.shape[split]
        for phase, first in ((0, s), (1, 3 * s)):
            pdesc = list(desc)
            pdesc[split] = (first, ext, 4 * s)
            pshape = tuple(_axis_count(*d) for d in pdesc)
            if 0 in pshape:
                continue
            ctx = _ClassCtx(self.work, pdesc, pshape, s, bound)
            pred = self._pred_uniform(ctx, cfg, v, same_pass=(phase == 1))
            self._commit(ctx, pred, None, li)

    # -- mixed per-block configs -------------------------------------

    def _class_tags(self, grid_tags, desc):
        coords = [np.arange(a, b, c, dtype=np.int64) // self.block_size
                  for a, b, c in desc]
        return grid_tags[np.ix_(*coords)]

    def _run_class_mixed(self, v, tags_here, s, bound, li, desc, shape):
        ctx = _ClassCtx(self.work, desc, shape, s, bound)
        uniq = [int(t) for t in np.unique(tags_here)]
        cfgs = {t: decode_tag(t, self.active) for t in uniq}
        inter_cache: dict[tuple[int, KernelTag], np.ndarray] = {}

        def inter_pred(axis, tag):
            key = (axis, tag)
            if key not in inter_cache:
                inter_cache[key] = _predict_along(ctx, axis, tag, False,
                                                  self.traversal)
            return inter_cache[key]

        def tag_pred(cfg):
            if cfg.paradigm == PARADIGM_ONED or len(v) == 1:
                axis = _oned_axis(cfg.axis_order, v) if cfg.paradigm == PARADIGM_ONED else v[0]
                return inter_pred(axis, cfg.kernel.tag)
            weights = _blend_weights(self.md_alpha, v)
            acc = None
            for i in sorted(v):
                term = weights[i] * inter_pred(i, cfg.kernel.tag)
                acc = term if acc is None else acc + term
            return acc

        pred_a = np.zeros(shape, dtype=np.float64)
        mask_a = np.zeros(shape, dtype=bool)
        split_tags = []
        for t in uniq:
            cfg = cfgs[t]
            m = tags_here == t
            split = self._split_axis(cfg, v)
            if split is not None:
                split_tags.append((t, cfg, split))
                m = m & _parity_mask(shape, split, even=True)
            p = tag_pred(cfg)
            pred_a[m] = p[m]
            mask_a |= m
        if mask_a.any():
            self._commit(ctx, pred_a, mask_a, li)
        if not split_tags:
            return
        # A same-level +-2s read along a tag's split axis can cross into
        # a block splitting a different axis and land on a point of this
        # same pass.  Sub-phasing by the count of odd parities along the
        # other split axes present makes every such read strictly earlier.
        axes_present = sorted({split for _, _, split in split_tags})
        odd = {ax: _parity_mask(shape, ax, even=False) for ax in axes_present}
        for phase in range(len(axes_present)):
            pred_b = np.zeros(shape, dtype=np.float64)
            mask_b = np.zeros(shape, dtype=bool)
            for t, cfg, split in split_tags:
                key = sum((odd[ax].astype(np.int64) for ax in axes_present
                           if ax != split), np.zeros(shape, dtype=np.int64))
                m = (tags_here == t) & odd[split] & (key == phase)
                if not m.any():
                    continue
                p = _predict_along(ctx, split, cfg.kernel.tag, True,
                                   self.traversal)
                pred_b[m] = p[m]
                mask_b |= m
            if mask_b.any():
                self._commit(ctx, pred_b, mask_b, li)

    # -- level loop ---------------------------------------------------

    def run_level(self, li: int, spec: LevelSpec, grid_tags):
        s = spec.stride
        for m in range(1, len(self.active) + 1):
            for v in itertools.combinations(self.active, m):
                desc, shape = _class_descriptor(self.work.shape, v,
                                                self.frozen_axes, s)
                if 0 in shape:
                    continue
                if grid_tags is None:
                    self._run_class_uniform(v, spec.config, s, spec.bound, li)
                    continue
                tags_here = self._class_tags(grid_tags, desc)
                uniq = np.unique(tags_here)
                if len(uniq) == 1:
                    cfg = decode_tag(int(uniq[0]), self.active)
                    self._run_class_uniform(v, cfg, s, spec.bound, li)
                else:
                    self._run_class_mixed(v, tags_here, s, spec.bound, li,
                                          desc, shape)


def block_grid_shape(dims, block_size: int) -> tuple[int, ...]:
    return tuple(-(-ext // block_size) for ext in dims)


def run_levels(work: np.ndarray, levels, *, direction: str, radius: int,
               frozen_axes=(), md_alpha=None, rounding=ROUND_NONE,
               traversal: str = TRAVERSAL_FVFI, block_size: int = 0,
               block_table: np.ndarray | None = None,
               source: CodeSource | None = None,
               stats: PassStats | None = None):
    """Run all level passes in place on ``work``.

    Compression returns (codes, outliers); decompression consumes them
    from ``source`` and returns None.  ``levels`` is the coarse-to-fine
    LevelSpec sequence; ``md_alpha`` maps every axis of ``work`` to its
    blend weight (only non-frozen entries are read).
    """
    if direction not in ("compress", "decompress"):
        raise ValueError(f"bad direction {direction!r}")
    if traversal not in (TRAVERSAL_FVFI, TRAVERSAL_DIM_MAJOR):
        raise ValueError(f"bad traversal {traversal!r}")
    if md_alpha is None:
        md_alpha = np.ones(work.ndim)
    sink = CodeSink() if direction == "compress" else None
    runner = _LevelRunner(
        work, direction=direction, radius=radius, frozen_axes=frozen_axes,
        md_alpha=md_alpha, rounding=rounding, traversal=traversal,
        sink=sink, source=source, stats=stats, block_size=block_size)
    with_tags = block_table is not None and block_size > 0
    if with_tags:
        gshape = block_grid_shape(work.shape, block_size)
    for li, spec in enumerate(levels):
        grid_tags = block_table[li].reshape(gshape) if with_tags else None
        runner.run_level(li, spec, grid_tags)
    if direction == "compress":
        return sink.codes(), sink.outliers()
    return None
