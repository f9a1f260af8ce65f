"""Automatic configuration search driven by sampled compression tests.

The search never touches the full grid: statistics come from a strided
point sample, and candidate configurations are scored by compressing a
centered block (at most 65 points per axis).  Scores are estimates; the
error bound itself is enforced by the quantizer regardless of what the
search picks, so a bad estimate can only cost ratio, not correctness.
All stages are deterministic functions of the grid bytes and options.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GridTooSmall
from .grid import ScalarGrid, axis_sampling_reach, sample_indices
from .interp import PassStats, TRAVERSAL_FVFI, run_levels
from .kernels import InterpKernel, KernelTag, md_weights
from .lorenzo import lorenzo_pass
from .plan import (DEFAULT_ANCHOR_STRIDE, KERNEL_VARIANTS, CompressionConfig,
                   LevelConfig, PARADIGM_MULTIDIM, PARADIGM_ONED,
                   active_axes_of, anchor_count, build_level_plan, encode_tag,
                   order_candidates)
from .quant import DEFAULT_RADIUS, ROUND_NONE, rounding_for_kind

TUNING_BLOCK_EXTENT = 65  # one anchor span plus both endpoints
OUTLIER_BITS = 64.0  # escaped values are stored as raw float64


@dataclass(frozen=True)
class QualityTarget:
    """What tuning optimizes: plain ratio, or PSNR with a rate weight."""

    kind: str = "ratio"  # "ratio" or "psnr"
    lam: float = 0.0

    def __post_init__(self):
        if self.kind not in ("ratio", "psnr"):
            raise ValueError(f"unknown target {self.kind!r}")
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class TunerOptions:
    sample_rate: float = 0.002
    block_size: int = 32
    anchor_stride: int = DEFAULT_ANCHOR_STRIDE
    radius: int = DEFAULT_RADIUS
    lorenzo_coef: float = 1.2
    alpha_set: tuple[float, ...] = (1.0, 1.25, 1.5, 1.75, 2.0)
    beta_set: tuple[float, ...] = (1.5, 2.0, 3.0, 4.0)
    kernel_set: str = "all"  # "linear" | "cubic" | "all"
    use_natural: bool = True
    use_md: bool = True
    use_same_level: bool = True
    use_freeze: bool = True
    use_eb: bool = True
    use_lorenzo: bool = True
    use_blockwise: bool = True
    traversal: str = TRAVERSAL_FVFI

    def __post_init__(self):
        if self.kernel_set not in ("linear", "cubic", "all"):
            raise ValueError(f"unknown kernel set {self.kernel_set!r}")


@dataclass(frozen=True)
class SampleStats:
    """Per-axis 1D prediction quality measured on sampled points."""

    linear_mse: tuple[float, ...]
    cubic_mse: tuple[float, ...]
    freeze_candidate: int
    sigma_sq: tuple[float, ...]
    n_samples: int


_CUBIC_ROW = (-1.0 / 16, 9.0 / 16, 9.0 / 16, -1.0 / 16)
_CUBIC_OFFS = (-3, -1, 1, 3)


def analyze_samples(grid: ScalarGrid, rate: float = 0.002) -> SampleStats:
    """Linear and cubic 1D interpolation errors along every axis.

    Unmeasurable axes (extent < 3) report the worst measured MSE so the
    blend weights treat them as uninformative rather than perfect.
    """
    idx = sample_indices(grid, rate)
    data = grid.data
    vals = data[tuple(idx.T)].astype(np.float64)
    rank = grid.rank
    lin = [0.0] * rank
    cub = [0.0] * rank
    measured = []
    for ax in range(rank):
        reach = axis_sampling_reach(grid.dims[ax])
        if reach is None:
            lin[ax] = math.nan
            cub[ax] = math.nan
            continue

        def at(off):
            shifted = idx.copy()
            shifted[:, ax] += off
            return data[tuple(shifted.T)].astype(np.float64)

        p_lin = 0.5 * (at(-1) + at(1))
        lin[ax] = float(np.mean((vals - p_lin) ** 2))
        if reach >= 3:
            p_cub = sum(c * at(o) for c, o in zip(_CUBIC_ROW, _CUBIC_OFFS))
            cub[ax] = float(np.mean((vals - p_cub) ** 2))
        else:
            cub[ax] = lin[ax]
        measured.append(ax)
    worst = max((cub[ax] for ax in measured), default=1.0)
    sigma = [cub[ax] if ax in set(measured) else max(worst, 1.0)
             for ax in range(rank)]
    freeze = max(measured, key=lambda ax: cub[ax])
    return SampleStats(tuple(lin), tuple(cub), int(freeze), tuple(sigma),
                       len(idx))


def blend_weights_f32(stats: SampleStats) -> tuple[float, ...]:
    """Full-rank blend weights at the float32 precision the header keeps."""
    rank = len(stats.sigma_sq)
    if rank < 2:
        return ()
    w = md_weights(stats.sigma_sq)
    return tuple(float(np.float32(a)) for a in w.alpha)


# -- sampled trials -------------------------------------------------------


@dataclass
class TrialResult:
    level_mae: np.ndarray
    codes: np.ndarray
    n_coded: int
    n_outliers: int
    mse: float
    value_range: float
    stats: PassStats


def tuning_block(grid: ScalarGrid, extent: int = TUNING_BLOCK_EXTENT) -> np.ndarray:
    """Centered float64 copy of at most ``extent`` points per axis."""
    sel = []
    for ext in grid.dims:
        size = min(ext, extent)
        lo = (ext - size) // 2
        sel.append(slice(lo, lo + size))
    return grid.data[tuple(sel)].astype(np.float64)


def run_block_trial(block: np.ndarray, bound: float, configs, *,
                    alpha: float = 1.0, beta: float = 1.0,
                    frozen_dim: int | None = None, md_alpha=None,
                    radius: int = DEFAULT_RADIUS,
                    anchor_stride: int = DEFAULT_ANCHOR_STRIDE,
                    traversal: str = TRAVERSAL_FVFI,
                    extra_frozen: tuple[int, ...] = (),
                    rounding: int = ROUND_NONE,
                    dense: bool = False) -> TrialResult:
    """Compress ``block`` in place of the real grid and score the result."""
    plan = build_level_plan(block.shape, anchor_stride, bound, alpha, beta,
                            frozen_dim, configs)
    frozen_axes = set(extra_frozen)
    if frozen_dim is not None:
        frozen_axes.add(frozen_dim)
    alpha_vec = np.ones(block.ndim) if md_alpha is None else np.asarray(md_alpha)
    work = block.copy()
    stats = PassStats(len(plan.levels), block.shape if dense else None)
    codes, outl = run_levels(
        work, plan.levels, direction="compress", radius=radius,
        frozen_axes=frozen_axes, md_alpha=alpha_vec, traversal=traversal,
        rounding=rounding, stats=stats)
    mse = float(np.mean((work - block) ** 2))
    rng = float(block.max() - block.min())
    mae = np.array([stats.level_mae(li) for li in range(len(plan.levels))])
    return TrialResult(mae, codes, len(codes), len(outl), mse, rng, stats)


def _entropy_bits(codes: np.ndarray) -> float:
    if codes.size == 0:
        return 0.0
    _, counts = np.unique(codes, return_counts=True)
    p = counts / codes.size
    return float(-(p * np.log2(p)).sum())


def _coded_bit_rate(codes: np.ndarray, n_outliers: int) -> float:
    """Estimated bits per coded point: code entropy plus escape payloads."""
    n = codes.size
    if n == 0:
        return 0.0
    return _entropy_bits(codes) + OUTLIER_BITS * n_outliers / n


def est_bit_rate(trial: TrialResult, elem_bits: int,
                 anchor_fraction: float) -> float:
    """Full-grid bits/value estimate: coded points at their entropy cost,
    anchors at raw element width."""
    r = _coded_bit_rate(trial.codes, trial.n_outliers)
    return (1.0 - anchor_fraction) * r + anchor_fraction * elem_bits


def est_cr(trial: TrialResult, elem_bits: int, anchor_fraction: float) -> float:
    rate = est_bit_rate(trial, elem_bits, anchor_fraction)
    if rate <= 0.0:
        return math.inf
    return elem_bits / rate


def _est_psnr(trial: TrialResult) -> float:
    if trial.mse == 0.0 or trial.value_range == 0.0:
        return math.inf
    return (20.0 * math.log10(trial.value_range)
            - 10.0 * math.log10(trial.mse))


def _target_score(trial: TrialResult, elem_bits: int, anchor_fraction: float,
                  target: QualityTarget) -> float:
    cr = est_cr(trial, elem_bits, anchor_fraction)
    if target.kind == "ratio":
        return cr
    psnr = _est_psnr(trial)
    if math.isinf(psnr):
        return math.inf
    return psnr + target.lam * math.log2(max(cr, 1e-300))


def _anchor_fraction(dims, anchor_stride: int, frozen_dim: int | None) -> float:
    total = int(np.prod(np.asarray(dims, dtype=np.int64)))
    return anchor_count(dims, anchor_stride, frozen_dim) / total


# -- candidate enumeration ------------------------------------------------


def kernel_candidates(options: TunerOptions) -> list[InterpKernel]:
    out = []
    for kern in KERNEL_VARIANTS:
        if kern.tag is not KernelTag.LINEAR:
            if options.kernel_set == "linear":
                continue
            if kern.tag is KernelTag.CUBIC_NATURAL and (
                    options.kernel_set != "all" or not options.use_natural):
                continue
            if kern.same_level and not options.use_same_level:
                continue
        out.append(kern)
    return out


def config_candidates(active: tuple[int, ...],
                      options: TunerOptions) -> list[LevelConfig]:
    """All (kernel, paradigm) combinations, cheapest kernel first so that
    argmin-first tie-breaking matches the cost preference."""
    paradigms: list[tuple[str, tuple[int, ...] | None]] = [
        (PARADIGM_ONED, order) for order in order_candidates(active)]
    if options.use_md and len(active) >= 2:
        paradigms.append((PARADIGM_MULTIDIM, None))
    return [LevelConfig(kern, par, order)
            for kern in kernel_candidates(options)
            for par, order in paradigms]


def _n_levels(anchor_stride: int) -> int:
    return max(anchor_stride.bit_length() - 1, 0)


# -- tuning stages ---------------------------------------------------------


def tune_global(grid: ScalarGrid, stats: SampleStats, ebound: float,
                target: QualityTarget, *, options: TunerOptions = TunerOptions(),
                frozen_dim: int | None = None,
                md_alpha=None) -> list[LevelConfig]:
    """Per-level (kernel, paradigm) with the lowest sampled mean absolute
    prediction error; ties go to the earlier (cheaper) candidate."""
    active = active_axes_of(grid.rank, frozen_dim)
    cands = config_candidates(active, options)
    block = tuning_block(grid)
    n_levels = _n_levels(options.anchor_stride)
    alpha_vec = _md_alpha_vec(md_alpha, grid.rank)
    maes = np.empty((len(cands), n_levels))
    for ci, cand in enumerate(cands):
        # Bound 0 keeps quantization noise out of the kernel comparison:
        # predictions read exact neighbor values, so the ranking reflects
        # truncation error alone and is independent of the user's bound.
        trial = run_block_trial(
            block, 0.0, [cand] * n_levels, frozen_dim=frozen_dim,
            md_alpha=alpha_vec, radius=options.radius,
            anchor_stride=options.anchor_stride, traversal=options.traversal,
            rounding=rounding_for_kind(grid.kind))
        maes[ci] = trial.level_mae
    return [cands[int(np.argmin(maes[:, li]))] for li in range(n_levels)]


def _md_alpha_vec(md_alpha, rank: int) -> np.ndarray:
    if md_alpha is None or len(md_alpha) == 0:
        return np.ones(rank)
    return np.asarray(md_alpha, dtype=np.float64)


@dataclass(frozen=True)
class FreezeDecision:
    frozen_dim: int | None
    configs: list[LevelConfig]
    cr_frozen: float
    cr_plain: float


def tune_freeze(grid: ScalarGrid, stats: SampleStats, ebound: float,
                target: QualityTarget, *, options: TunerOptions = TunerOptions(),
                plain_configs: list[LevelConfig] | None = None,
                md_alpha=None) -> FreezeDecision:
    """Freeze the worst-predicted axis iff the sampled compression-ratio
    estimate, anchor overhead included, improves."""
    if plain_configs is None:
        plain_configs = tune_global(grid, stats, ebound, target,
                                    options=options, md_alpha=md_alpha)
    cand = stats.freeze_candidate
    if grid.rank < 2 or not options.use_freeze:
        return FreezeDecision(None, plain_configs, -math.inf, math.inf)
    frozen_configs = tune_global(grid, stats, ebound, target, options=options,
                                 frozen_dim=cand, md_alpha=md_alpha)
    block = tuning_block(grid)
    alpha_vec = _md_alpha_vec(md_alpha, grid.rank)
    elem_bits = grid.kind.dtype.itemsize * 8
    scores = []
    for fd, cfgs in ((None, plain_configs), (cand, frozen_configs)):
        trial = run_block_trial(
            block, ebound, cfgs, frozen_dim=fd, md_alpha=alpha_vec,
            radius=options.radius, anchor_stride=options.anchor_stride,
            traversal=options.traversal,
            rounding=rounding_for_kind(grid.kind))
        af = _anchor_fraction(grid.dims, options.anchor_stride, fd)
        scores.append(est_cr(trial, elem_bits, af))
    cr_plain, cr_frozen = scores
    if cr_frozen > cr_plain:
        return FreezeDecision(cand, frozen_configs, cr_frozen, cr_plain)
    return FreezeDecision(None, plain_configs, cr_frozen, cr_plain)


def tune_eb(grid: ScalarGrid, ebound: float, target: QualityTarget, *,
            options: TunerOptions = TunerOptions(),
            configs: list[LevelConfig], frozen_dim: int | None = None,
            md_alpha=None) -> tuple[float, float]:
    """Pick the per-level bound multipliers (alpha, beta) from sampled
    trials; (1, 1) is tried first so ties keep the plain behavior."""
    cands = [(1.0, 1.0)] + [(a, b) for a in options.alpha_set
                            for b in options.beta_set]
    block = tuning_block(grid)
    alpha_vec = _md_alpha_vec(md_alpha, grid.rank)
    elem_bits = grid.kind.dtype.itemsize * 8
    af = _anchor_fraction(grid.dims, options.anchor_stride, frozen_dim)
    best = None
    best_score = -math.inf
    for a, b in cands:
        trial = run_block_trial(
            block, ebound, configs, alpha=a, beta=b, frozen_dim=frozen_dim,
            md_alpha=alpha_vec, radius=options.radius,
            anchor_stride=options.anchor_stride, traversal=options.traversal,
            rounding=rounding_for_kind(grid.kind))
        score = _target_score(trial, elem_bits, af, target)
        if score > best_score:
            best, best_score = (a, b), score
    return best


@dataclass(frozen=True)
class LorenzoDecision:
    predictor: str  # "interp" or "lorenzo"
    order: int
    rate_interp: float
    rate_lorenzo: float  # best order, before the coefficient


def tune_lorenzo(grid: ScalarGrid, interp_rate: float, ebound: float,
                 target: QualityTarget, coefficient: float, *,
                 options: TunerOptions = TunerOptions()) -> LorenzoDecision:
    """Sampled Lorenzo trials at orders 1 and 2 against the interpolation
    estimate, with the coefficient biasing against Lorenzo optimism."""
    block = tuning_block(grid)
    rounding = rounding_for_kind(grid.kind)
    rates = []
    for order in (1, 2):
        work = block.copy()
        codes, outl = lorenzo_pass(work, ebound, options.radius, order,
                                   direction="compress", rounding=rounding)
        rates.append(_coded_bit_rate(codes, len(outl)))
    best_order = 1 + int(np.argmin(rates))
    best_rate = min(rates)
    if interp_rate <= coefficient * best_rate:
        return LorenzoDecision("interp", best_order, interp_rate, best_rate)
    return LorenzoDecision("lorenzo", best_order, interp_rate, best_rate)


def _sub_extent(block_size: int, rank: int) -> int:
    # Centered sub-block holding ~4% of the block's points.
    return max(4, round(block_size * 0.04 ** (1.0 / rank)))


def _pow2_at_most(n: int) -> int:
    return 1 << max(n.bit_length() - 1, 0)


def tune_blocks(grid: ScalarGrid, global_configs: list[LevelConfig],
                ebound: float, *, options: TunerOptions = TunerOptions(),
                frozen_dim: int | None = None,
                md_alpha=None) -> np.ndarray | None:
    """Per-block per-level (kernel, paradigm) table, or None when the
    grid has no complete blocks to tune.

    Every complete block contributes a centered sub-block; sub-blocks are
    stacked on a leading batch axis that is treated as frozen, so one
    pass per candidate scores every block at once.  Ragged edge blocks
    keep the global configuration.
    """
    bs = options.block_size
    rank = grid.rank
    n_levels = _n_levels(options.anchor_stride)
    active = active_axes_of(rank, frozen_dim)
    grid_shape = tuple(-(-ext // bs) for ext in grid.dims)
    n_blocks = int(np.prod(grid_shape))
    full_counts = tuple(ext // bs for ext in grid.dims)
    n_full = int(np.prod(full_counts))
    global_tags = np.array([encode_tag(c, active) for c in global_configs],
                           dtype=np.uint8)
    table = np.tile(global_tags[:, None], (1, n_blocks))
    if n_blocks <= 1 or n_full == 0 or len(active) == 0:
        return None

    sub = _sub_extent(bs, rank)
    mini_stride = _pow2_at_most(max(sub - 1, 1))
    if mini_stride < 2:
        return None
    lo = (bs - sub) // 2

    # Stack the centered sub-block of every complete block.
    starts = [np.arange(c) * bs + lo for c in full_counts]
    mesh = np.meshgrid(*starts, indexing="ij")
    origins = np.stack([m.ravel() for m in mesh], axis=1)
    stacked = np.empty((n_full,) + (sub,) * rank, dtype=np.float64)
    for bi, org in enumerate(origins):
        sel = tuple(slice(int(o), int(o) + sub) for o in org)
        stacked[bi] = grid.data[sel]

    shifted_active = tuple(1 + a for a in active)
    cands_local = config_candidates_shifted(active, shifted_active, options)
    alpha_vec = np.concatenate(([0.0], _md_alpha_vec(md_alpha, rank)))
    extra_frozen = (0,) + (((1 + frozen_dim),) if frozen_dim is not None else ())
    mini_levels = _n_levels(mini_stride)

    err_sums = np.empty((len(cands_local), mini_levels, n_full))
    for ci, (cand, _) in enumerate(cands_local):
        # Bound 0 for the same reason as tune_global: rank blocks by pure
        # prediction error, not by quantization noise at loose bounds.
        trial = run_block_trial(
            stacked, 0.0, [cand] * mini_levels, md_alpha=alpha_vec,
            radius=options.radius, anchor_stride=mini_stride,
            traversal=options.traversal, extra_frozen=extra_frozen,
            rounding=rounding_for_kind(grid.kind), dense=True)
        for li in range(mini_levels):
            err_sums[ci, li] = trial.stats.err_grids[li].reshape(
                n_full, -1).sum(axis=1)

    winners = np.argmin(err_sums, axis=0)  # (mini_levels, n_full)

    # Mini levels align with the finest full-plan levels by stride.
    level_offset = n_levels - mini_levels
    full_index = _full_block_index(grid_shape, full_counts)
    for mli in range(mini_levels):
        fli = level_offset + mli
        if fli < 0:
            continue
        tags = np.array([cands_local[w][1] for w in winners[mli]],
                        dtype=np.uint8)
        table[fli, full_index] = tags
    return table


def config_candidates_shifted(active, shifted_active,
                              options: TunerOptions):
    """Candidates over batch-shifted axes paired with the tag they encode
    to in the original grid's numbering (positionally identical lists)."""
    orig = config_candidates(active, options)
    shifted = config_candidates(shifted_active, options)
    return [(sc, encode_tag(oc, active)) for sc, oc in zip(shifted, orig)]


def _full_block_index(grid_shape, full_counts) -> np.ndarray:
    """Flat indices (C order over the full block grid) of complete blocks."""
    coords = np.meshgrid(*[np.arange(c) for c in full_counts], indexing="ij")
    flat = np.zeros(coords[0].size, dtype=np.int64)
    for ax, c in enumerate(coords):
        flat = flat * grid_shape[ax] + c.ravel()
    return flat


# -- composition ------------------------------------------------------------


def default_config(ebound: float, rank: int,
                   options: TunerOptions = TunerOptions()) -> CompressionConfig:
    """Untuned fallback: linear one-axis interpolation everywhere."""
    n_levels = _n_levels(options.anchor_stride)
    cfg = LevelConfig(InterpKernel(KernelTag.LINEAR, False), PARADIGM_ONED,
                      tuple(range(rank)))
    return CompressionConfig(
        predictor="interp", resolved_bound=ebound, radius=options.radius,
        anchor_stride=options.anchor_stride,
        level_configs=(cfg,) * n_levels)


def tune(grid: ScalarGrid, ebound: float,
         target: QualityTarget = QualityTarget(),
         options: TunerOptions = TunerOptions()) -> CompressionConfig:
    """Full search: sample analysis, global kernel/paradigm selection,
    dimension freezing, level-bound multipliers, the Lorenzo fallback,
    and the per-block table."""
    try:
        stats = analyze_samples(grid, options.sample_rate)
    except GridTooSmall:
        return default_config(ebound, grid.rank, options)

    md_alpha = blend_weights_f32(stats) if options.use_md else ()
    configs = tune_global(grid, stats, ebound, target, options=options,
                          md_alpha=md_alpha)
    frozen_dim = None
    if grid.rank >= 2 and options.use_freeze:
        decision = tune_freeze(grid, stats, ebound, target, options=options,
                               plain_configs=configs, md_alpha=md_alpha)
        frozen_dim = decision.frozen_dim
        configs = decision.configs
        if frozen_dim is not None:
            # Axis orders were chosen for the unfrozen axis set already;
            # nothing else to remap (tune_global ran with the freeze).
            pass
    alpha, beta = (1.0, 1.0)
    if options.use_eb:
        alpha, beta = tune_eb(grid, ebound, target, options=options,
                              configs=configs, frozen_dim=frozen_dim,
                              md_alpha=md_alpha)

    if options.use_lorenzo:
        block = tuning_block(grid)
        alpha_vec = _md_alpha_vec(md_alpha, grid.rank)
        trial = run_block_trial(
            block, ebound, configs, alpha=alpha, beta=beta,
            frozen_dim=frozen_dim, md_alpha=alpha_vec, radius=options.radius,
            anchor_stride=options.anchor_stride, traversal=options.traversal,
            rounding=rounding_for_kind(grid.kind))
        elem_bits = grid.kind.dtype.itemsize * 8
        af = _anchor_fraction(grid.dims, options.anchor_stride, frozen_dim)
        rate_interp = est_bit_rate(trial, elem_bits, af)
        decision = tune_lorenzo(grid, rate_interp, ebound, target,
                                options.lorenzo_coef, options=options)
        if decision.predictor == "lorenzo":
            return CompressionConfig(
                predictor="lorenzo", resolved_bound=ebound,
                radius=options.radius, lorenzo_order=decision.order)

    block_table = None
    if options.use_blockwise:
        block_table = tune_blocks(grid, configs, ebound, options=options,
                                  frozen_dim=frozen_dim, md_alpha=md_alpha)
    return CompressionConfig(
        predictor="interp", resolved_bound=ebound, radius=options.radius,
        anchor_stride=options.anchor_stride, alpha=alpha, beta=beta,
        frozen_dim=frozen_dim, level_configs=tuple(configs),
        md_alpha=tuple(md_alpha), block_size=options.block_size if block_table is not None else 0,
        block_table=block_table)
