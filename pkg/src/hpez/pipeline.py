"""End-to-end compress and decompress built from the component layers.

Compression resolves the error bound, tunes a configuration (unless one
is supplied), runs the predictor pass, entropy-codes the quantizer
output, and assembles the archive.  The compressor-side reconstruction
is returned alongside the archive: it is bit-identical to what a later
decompress produces, so quality metrics never need a second pass.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .container import (assemble, lossless_pass, lossless_unpass, pack_codes,
                        parse, parse_config, serialize_config, unpack_codes)
from .errors import CorruptStream, LengthMismatch
from .grid import ElementKind, ErrorBoundSpec, ScalarGrid
from .interp import TRAVERSAL_FVFI, CodeSource, run_levels
from .lorenzo import lorenzo_pass
from .plan import (CompressionConfig, anchor_axes, anchor_count,
                   build_level_plan)
from .quant import rounding_for_kind
from .tuner import QualityTarget, TunerOptions, default_config, tune


@dataclass(frozen=True)
class CompressResult:
    archive: bytes
    config: CompressionConfig
    reconstruction: ScalarGrid
    seconds: float

    @property
    def ratio(self) -> float:
        return self.reconstruction.nbytes / len(self.archive)

    @property
    def bit_rate(self) -> float:
        """Compressed bits per grid point."""
        return 8.0 * len(self.archive) / self.reconstruction.point_count


def _native_anchors(grid: ScalarGrid, cfg: CompressionConfig) -> bytes:
    axes = anchor_axes(grid.dims, cfg.anchor_stride, cfg.frozen_dim)
    return grid.data[np.ix_(*axes)].tobytes()


def _interp_plan(dims, cfg: CompressionConfig):
    return build_level_plan(dims, cfg.anchor_stride, cfg.resolved_bound,
                            cfg.alpha, cfg.beta, cfg.frozen_dim,
                            cfg.level_configs)


def compress(grid: ScalarGrid, bound: ErrorBoundSpec, *,
             target: QualityTarget | None = None,
             options: TunerOptions | None = None,
             config: CompressionConfig | None = None) -> CompressResult:
    """Compress a grid under the given error bound.

    ``config`` short-circuits tuning when the caller already knows the
    configuration it wants (ablation studies, decompression replays).
    """
    t0 = time.perf_counter()
    target = target or QualityTarget()
    options = options or TunerOptions()
    ebound = bound.resolve(grid)
    if config is None:
        if ebound == 0.0:
            # Constant grid under a relative bound: prediction is exact
            # everywhere, so the untuned default already codes it losslessly.
            config = default_config(ebound, grid.rank, options)
        else:
            config = tune(grid, ebound, target, options)
    config_bytes = serialize_config(config, grid.dims)
    # Replay through the header round trip so the pass sees exactly the
    # values a decompressor will (md weights are f32 in the header).
    cfg = parse_config(config_bytes, grid.dims)

    work = grid.as_f64()
    rounding = rounding_for_kind(grid.kind)
    if cfg.predictor == "interp":
        anchors = _native_anchors(grid, cfg)
        plan = _interp_plan(grid.dims, cfg)
        frozen = () if cfg.frozen_dim is None else (cfg.frozen_dim,)
        codes, outliers = run_levels(
            work, plan.levels, direction="compress", radius=cfg.radius,
            frozen_axes=frozen, md_alpha=np.asarray(cfg.md_alpha),
            rounding=rounding, traversal=options.traversal,
            block_size=cfg.block_size, block_table=cfg.block_table)
    else:
        anchors = b""
        codes, outliers = lorenzo_pass(
            work, cfg.resolved_bound, cfg.radius, cfg.lorenzo_order,
            direction="compress", rounding=rounding)

    streams = (lossless_pass(anchors),
               lossless_pass(pack_codes(codes)),
               lossless_pass(np.ascontiguousarray(outliers, "<f8").tobytes()))
    archive = assemble(grid.dims, grid.kind, bound.mode, bound.epsilon,
                       config_bytes, streams)
    recon = ScalarGrid(grid.dims, grid.kind, work.astype(grid.kind.dtype))
    return CompressResult(archive, cfg, recon, time.perf_counter() - t0)


def decompress(archive: bytes) -> ScalarGrid:
    """Reconstruct the grid stored in an archive."""
    dims, kind, _mode, _epsilon, config_bytes, blobs = parse(archive)
    cfg = parse_config(config_bytes, dims)
    anchors_b, codes_b, outliers_b = (lossless_unpass(b) for b in blobs)
    codes = unpack_codes(codes_b)
    outliers = np.frombuffer(outliers_b, dtype="<f8")

    work = np.zeros(dims, dtype=np.float64)
    rounding = rounding_for_kind(kind)
    if cfg.predictor == "interp":
        expect = anchor_count(dims, cfg.anchor_stride, cfg.frozen_dim)
        if len(anchors_b) != expect * kind.itemsize:
            raise LengthMismatch(
                f"anchor stream holds {len(anchors_b)} bytes, "
                f"{expect * kind.itemsize} expected")
        axes = anchor_axes(dims, cfg.anchor_stride, cfg.frozen_dim)
        vals = np.frombuffer(anchors_b, dtype=kind.dtype)
        shape = tuple(len(a) for a in axes)
        work[np.ix_(*axes)] = vals.reshape(shape).astype(np.float64)
        plan = _interp_plan(dims, cfg)
        frozen = () if cfg.frozen_dim is None else (cfg.frozen_dim,)
        source = CodeSource(codes, outliers)
        run_levels(work, plan.levels, direction="decompress",
                   radius=cfg.radius, frozen_axes=frozen,
                   md_alpha=np.asarray(cfg.md_alpha), rounding=rounding,
                   traversal=TRAVERSAL_FVFI, block_size=cfg.block_size,
                   block_table=cfg.block_table, source=source)
        if source.pos != codes.size:
            raise CorruptStream(
                f"{codes.size - source.pos} unconsumed quantizer codes")
    else:
        lorenzo_pass(work, cfg.resolved_bound, cfg.radius, cfg.lorenzo_order,
                     direction="decompress", rounding=rounding,
                     codes=codes, outliers=outliers)
    return ScalarGrid(dims, kind, work.astype(kind.dtype))
