"""Level-wise interpolation passes: round trips, traversal, planning."""

import numpy as np
import pytest

from hpez.errors import CorruptStream
from hpez.interp import (TRAVERSAL_DIM_MAJOR, TRAVERSAL_FVFI, CodeSource,
                         PassStats, block_grid_shape, run_levels)
from hpez.kernels import InterpKernel, KernelTag
from hpez.plan import (PARADIGM_MULTIDIM, PARADIGM_ONED, CompressionConfig,
                       LevelConfig, anchor_count, build_level_plan,
                       encode_tag, gather_anchors, level_bound,
                       scatter_anchors)
from hpez.quant import DEFAULT_RADIUS, ROUND_F32, ROUND_NONE

from fields import trig


def _round_trip(data, e, *, level_configs=None, frozen_dim=None,
                alpha=1.0, beta=1.0, md_alpha=None, rounding=ROUND_NONE,
                traversal=TRAVERSAL_FVFI, block_size=0, block_table=None,
                anchor_stride=64):
    """Compress then decompress; returns (recon_c, recon_d, codes)."""
    plan = build_level_plan(data.shape, anchor_stride, e, alpha, beta,
                            frozen_dim, level_configs)
    frozen = () if frozen_dim is None else (frozen_dim,)
    work = data.astype(np.float64)
    codes, outliers = run_levels(
        work, plan.levels, direction="compress", radius=DEFAULT_RADIUS,
        frozen_axes=frozen, md_alpha=md_alpha, rounding=rounding,
        traversal=traversal, block_size=block_size, block_table=block_table)
    anchors = gather_anchors(work, anchor_stride, frozen_dim)
    back = np.zeros_like(work)
    scatter_anchors(back, anchors, anchor_stride, frozen_dim)
    source = CodeSource(codes, outliers)
    run_levels(back, plan.levels, direction="decompress",
               radius=DEFAULT_RADIUS, frozen_axes=frozen, md_alpha=md_alpha,
               rounding=rounding, block_size=block_size,
               block_table=block_table, source=source)
    assert source.pos == codes.size
    return work, back, codes


def _cubic_oned(rank):
    kern = InterpKernel(KernelTag.CUBIC_NOT_A_KNOT)
    return [LevelConfig(kern, PARADIGM_ONED, tuple(range(rank)))] * 6


@pytest.mark.parametrize("dims", [(300,), (70, 131), (40, 33, 65), (9, 8, 10, 11)])
def test_round_trip_ranks(dims):
    data = trig(dims, phase=0.1)
    e = 1e-3
    work, back, codes = _round_trip(data, e, level_configs=_cubic_oned(len(dims)))
    assert np.max(np.abs(work - data)) <= e
    assert np.array_equal(work, back)
    assert codes.size == data.size - anchor_count(dims, 64, None)


def test_traversal_orders_agree():
    data = trig((65, 66, 67), phase=0.1 * 2)
    _, _, codes_f = _round_trip(data, 1e-3, traversal=TRAVERSAL_FVFI)
    _, _, codes_d = _round_trip(data, 1e-3, traversal=TRAVERSAL_DIM_MAJOR)
    assert np.array_equal(codes_f, codes_d)


def test_frozen_axis_round_trip():
    data = trig((48, 65, 30), phase=0.1 * 3)
    e = 5e-4
    work, back, codes = _round_trip(data, e, frozen_dim=1)
    assert np.max(np.abs(work - data)) <= e
    assert np.array_equal(work, back)
    # frozen axis is anchored at stride 1
    assert codes.size == data.size - anchor_count(data.shape, 64, 1)


def test_zero_bound_is_lossless():
    data = np.round(trig((80, 90), phase=0.1 * 4), 3)
    work, back, _ = _round_trip(data, 0.0)
    assert np.array_equal(work, data)
    assert np.array_equal(back, data)


_KERNELS = [
    InterpKernel(KernelTag.LINEAR),
    InterpKernel(KernelTag.CUBIC_NOT_A_KNOT),
    InterpKernel(KernelTag.CUBIC_NATURAL),
    InterpKernel(KernelTag.CUBIC_NOT_A_KNOT, True),
    InterpKernel(KernelTag.CUBIC_NATURAL, True),
]


@pytest.mark.parametrize("kernel", _KERNELS, ids=lambda k: f"{k.tag.value}{'-sl' if k.same_level else ''}")
@pytest.mark.parametrize("paradigm", [PARADIGM_ONED, PARADIGM_MULTIDIM])
def test_kernel_paradigm_round_trips(kernel, paradigm):
    data = trig((50, 70), phase=0.1 * 5)
    e = 1e-3
    order = (1, 0) if paradigm == PARADIGM_ONED else None
    cfgs = [LevelConfig(kernel, paradigm, order)] * 6
    work, back, _ = _round_trip(data, e, level_configs=cfgs)
    assert np.max(np.abs(work - data)) <= e
    assert np.array_equal(work, back)


def test_weighted_multidim_blend():
    data = trig((33, 40, 50), phase=0.1 * 6)
    e = 1e-3
    kern = InterpKernel(KernelTag.CUBIC_NOT_A_KNOT)
    cfgs = [LevelConfig(kern, PARADIGM_MULTIDIM)] * 6
    work, back, _ = _round_trip(data, e, level_configs=cfgs,
                                md_alpha=np.array([0.2, 0.5, 0.3]))
    assert np.max(np.abs(work - data)) <= e
    assert np.array_equal(work, back)


def test_native_rounding_keeps_f32_work():
    data = trig((60, 80), phase=0.1 * 7).astype(np.float32)
    e = 1e-3
    work, back, _ = _round_trip(data, e, rounding=ROUND_F32)
    assert np.max(np.abs(work - data.astype(np.float64))) <= e
    assert np.array_equal(work, back)
    # every reconstructed value must survive the output cast unchanged
    assert np.array_equal(work, work.astype(np.float32).astype(np.float64))


def test_blockwise_mixed_tags():
    data = trig((70, 70), phase=0.1 * 8)
    e = 1e-3
    active = (0, 1)
    tag_a = encode_tag(LevelConfig(InterpKernel(KernelTag.LINEAR),
                                   PARADIGM_ONED, (0, 1)), active)
    tag_b = encode_tag(LevelConfig(InterpKernel(KernelTag.CUBIC_NOT_A_KNOT),
                                   PARADIGM_MULTIDIM), active)
    gshape = block_grid_shape(data.shape, 32)
    n_blocks = int(np.prod(gshape))
    table = np.empty((6, n_blocks), dtype=np.uint8)
    table[:] = tag_a
    table[:, ::2] = tag_b
    work, back, _ = _round_trip(data, e, block_size=32, block_table=table)
    assert np.max(np.abs(work - data)) <= e
    assert np.array_equal(work, back)


def test_blockwise_conflicting_split_axes():
    # same-level kernels splitting different axes in adjacent blocks:
    # boundary reads must stay committed-data-only in both directions
    data = trig((128, 128), phase=0.23)
    e = 1e-3
    active = (0, 1)
    sl = InterpKernel(KernelTag.CUBIC_NOT_A_KNOT, True)
    tag_r0 = encode_tag(LevelConfig(sl, PARADIGM_ONED, (1, 0)), active)
    tag_r1 = encode_tag(LevelConfig(sl, PARADIGM_ONED, (0, 1)), active)
    gshape = block_grid_shape(data.shape, 32)
    checker = np.indices(gshape).sum(axis=0).ravel() % 2
    table = np.where(checker, tag_r0, tag_r1)[None, :].repeat(6, axis=0)
    table = table.astype(np.uint8)
    work, back, _ = _round_trip(data, e, block_size=32, block_table=table)
    assert np.max(np.abs(work - data)) <= e
    assert np.array_equal(work, back)


def test_pass_stats_totals():
    data = trig((80, 65), phase=0.1 * 9)
    e = 1e-3
    plan = build_level_plan(data.shape, 64, e)
    stats = PassStats(len(plan.levels))
    work = data.astype(np.float64)
    codes, _ = run_levels(work, plan.levels, direction="compress",
                          radius=DEFAULT_RADIUS, stats=stats)
    assert int(stats.count.sum()) == codes.size
    assert stats.all_codes().size == codes.size
    assert np.array_equal(np.sort(stats.all_codes()), np.sort(codes))
    assert all(stats.level_mae(i) >= 0 for i in range(len(plan.levels)))


def test_dense_stats_cover_predicted_points():
    data = trig((40, 40), phase=0.1 * 10)
    plan = build_level_plan(data.shape, 64, 1e-3)
    stats = PassStats(len(plan.levels), dense_shape=data.shape)
    work = data.astype(np.float64)
    run_levels(work, plan.levels, direction="compress",
               radius=DEFAULT_RADIUS, stats=stats)
    touched = sum(int(np.count_nonzero(g >= 0) - np.count_nonzero(g == 0))
                  for g in stats.err_grids)
    filled = sum(int((g != 0).sum()) for g in stats.err_grids)
    assert touched == filled  # errors are non-negative by construction
    assert filled <= data.size - anchor_count(data.shape, 64, None)


def test_truncated_code_stream_detected():
    data = trig((70, 70), phase=0.1 * 11)
    plan = build_level_plan(data.shape, 64, 1e-3)
    work = data.astype(np.float64)
    codes, outliers = run_levels(work, plan.levels, direction="compress",
                                 radius=DEFAULT_RADIUS)
    back = np.zeros_like(work)
    scatter_anchors(back, gather_anchors(work, 64, None), 64, None)
    source = CodeSource(codes[:-10], outliers)
    with pytest.raises(CorruptStream):
        run_levels(back, plan.levels, direction="decompress",
                   radius=DEFAULT_RADIUS, source=source)


def test_anchor_counts():
    assert anchor_count((65, 65, 65), 64, None) == 8
    assert anchor_count((65, 65, 65), 64, 2) == 2 * 2 * 65
    assert anchor_count((129,), 64, None) == 3
    grid = np.arange(129, dtype=np.float64)
    assert np.array_equal(gather_anchors(grid, 64, None),
                          grid[[0, 64, 128]])


def test_level_bound_values():
    e = 0.1
    assert level_bound(e, 1.5, 4.0, 1) == e
    assert level_bound(e, 1.5, 4.0, 3) == pytest.approx(e / 2.25)
    assert level_bound(e, 1.5, 4.0, 10) == pytest.approx(e / 4.0)
    with pytest.raises(ValueError):
        level_bound(e, 0.5, 4.0, 1)


def test_level_plan_shape():
    plan = build_level_plan((100, 100), 64, 1e-2, alpha=2.0, beta=8.0)
    strides = [s.stride for s in plan.levels]
    assert strides == [32, 16, 8, 4, 2, 1]
    bounds = [s.bound for s in plan.levels]
    assert bounds == sorted(bounds)  # coarse levels are held tighter
    assert plan.levels[-1].bound == 1e-2  # finest level carries the full bound
    assert all(b <= 1e-2 for b in bounds)


def test_level_plan_validation():
    with pytest.raises(ValueError):
        build_level_plan((10, 10), 48, 1e-3)
    with pytest.raises(ValueError):
        build_level_plan((10, 10), 64, 1e-3, frozen_dim=2)
    with pytest.raises(ValueError):
        build_level_plan((10,), 64, 1e-3, frozen_dim=0)
