"""Reconstruction quality and throughput evaluation.

PSNR takes its dynamic range from the first (original) argument.  SSIM
is the windowed mean over full interior windows placed every second
point along each axis; window extent is 7, shrunk to fit short axes.
Timings around the codec calls are wall-clock and exclude file I/O.
"""

from __future__ import annotations

import io
import csv
import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .errors import DimsMismatch, RankTooLow
from .grid import BoundMode, ErrorBoundSpec, ScalarGrid, value_range
from .pipeline import compress, decompress
from .tuner import QualityTarget, TunerOptions

_K1 = 0.01
_K2 = 0.03
_SSIM_WINDOW = 7
_SSIM_STRIDE = 2


def _check_dims(a: ScalarGrid, b: ScalarGrid) -> None:
    if a.dims != b.dims:
        raise DimsMismatch(f"dims {a.dims} vs {b.dims}")


def psnr(a: ScalarGrid, b: ScalarGrid) -> float | None:
    """Peak signal-to-noise ratio in dB, range taken from ``a``.

    Identical grids give +inf.  A constant original (zero range) with
    any nonzero error has no defined peak ratio and returns None.
    """
    _check_dims(a, b)
    x = a.data.astype(np.float64)
    y = b.data.astype(np.float64)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    _, _, rng = value_range(a)
    if rng == 0.0:
        return None
    return 20.0 * math.log10(rng) - 10.0 * math.log10(mse)


def _window_shape(dims: tuple[int, ...]) -> tuple[int, ...]:
    out = []
    for ext in dims:
        w = min(_SSIM_WINDOW, ext)
        if w % 2 == 0:
            w -= 1
        out.append(max(w, 1))
    return tuple(out)


def ssim(a: ScalarGrid, b: ScalarGrid) -> float:
    """Mean structural similarity over sampled full windows."""
    _check_dims(a, b)
    if a.rank < 2:
        raise RankTooLow(f"ssim needs rank >= 2, got {a.rank}")
    x = a.data.astype(np.float64)
    y = b.data.astype(np.float64)
    _, _, rng = value_range(a)
    scale = rng if rng > 0 else 1.0
    c1 = (_K1 * scale) ** 2
    c2 = (_K2 * scale) ** 2

    win = _window_shape(a.dims)
    mu_x = uniform_filter(x, size=win)
    mu_y = uniform_filter(y, size=win)
    xx = uniform_filter(x * x, size=win)
    yy = uniform_filter(y * y, size=win)
    xy = uniform_filter(x * y, size=win)
    var_x = xx - mu_x * mu_x
    var_y = yy - mu_y * mu_y
    cov = xy - mu_x * mu_y

    # Centers where the window lies fully inside the grid, every
    # second one along each axis.
    sel = tuple(slice(w // 2, ext - (w // 2), _SSIM_STRIDE)
                for w, ext in zip(win, a.dims))
    mu_x, mu_y = mu_x[sel], mu_y[sel]
    var_x, var_y, cov = var_x[sel], var_y[sel], cov[sel]
    num = (2.0 * mu_x * mu_y + c1) * (2.0 * cov + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class QualityReport:
    compression_ratio: float
    bit_rate: float
    psnr: float | None
    ssim: float | None
    max_abs_error: float
    max_rel_error: float


def evaluate(original: ScalarGrid, archive: bytes,
             decompressed: ScalarGrid) -> QualityReport:
    """Full quality report for one compression run.

    SSIM is reported as None for rank-1 grids.  max_rel_error divides
    by the original's value range; it is 0 for exact reconstructions
    even when the range is 0.
    """
    _check_dims(original, decompressed)
    x = original.data.astype(np.float64)
    y = decompressed.data.astype(np.float64)
    max_abs = float(np.max(np.abs(x - y))) if x.size else 0.0
    _, _, rng = value_range(original)
    if max_abs == 0.0:
        max_rel = 0.0
    else:
        max_rel = max_abs / rng if rng > 0 else math.inf
    return QualityReport(
        compression_ratio=original.nbytes / len(archive),
        bit_rate=8.0 * len(archive) / original.point_count,
        psnr=psnr(original, decompressed),
        ssim=ssim(original, decompressed) if original.rank >= 2 else None,
        max_abs_error=max_abs,
        max_rel_error=max_rel,
    )


@dataclass(frozen=True)
class SweepRow:
    epsilon: float
    bit_rate: float
    psnr: float | None
    ssim: float | None
    cr: float
    comp_seconds: float
    decomp_seconds: float


SWEEP_COLUMNS = ("epsilon", "bit_rate", "psnr", "ssim", "cr",
                 "comp_seconds", "decomp_seconds")


def sweep(grid: ScalarGrid, epsilons, target: QualityTarget | None = None,
          *, mode: BoundMode = BoundMode.REL,
          options: TunerOptions | None = None) -> list[SweepRow]:
    """One full compress + decompress + evaluate per error bound."""
    epsilons = list(epsilons)
    if not epsilons:
        raise ValueError("sweep needs at least one epsilon")
    rows = []
    for eps in epsilons:
        res = compress(grid, ErrorBoundSpec(mode, eps),
                       target=target, options=options)
        t0 = time.perf_counter()
        out = decompress(res.archive)
        dt = time.perf_counter() - t0
        rep = evaluate(grid, res.archive, out)
        rows.append(SweepRow(eps, rep.bit_rate, rep.psnr, rep.ssim,
                             rep.compression_ratio, res.seconds, dt))
    return rows


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for r in rows:
        writer.writerow([
            f"{r.epsilon:.6g}", f"{r.bit_rate:.6g}",
            "" if r.psnr is None else f"{r.psnr:.6g}",
            "" if r.ssim is None else f"{r.ssim:.6g}",
            f"{r.cr:.6g}", f"{r.comp_seconds:.6g}", f"{r.decomp_seconds:.6g}",
        ])
    return buf.getvalue()


@dataclass(frozen=True)
class TransferEstimate:
    total_seconds: float
    baseline_seconds: float


def estimate_transfer(original_bytes: float, archive_bytes: float,
                      comp_seconds: float, decomp_seconds: float,
                      io_seconds: float, link_speed: float) -> TransferEstimate:
    """Transfer-time model: compress, ship the archive, decompress.

    ``link_speed`` is bytes per second.  The baseline ships the
    original uncompressed over the same link.
    """
    if link_speed <= 0:
        raise ValueError(f"link speed must be > 0, got {link_speed}")
    total = io_seconds + comp_seconds + decomp_seconds + \
        archive_bytes / link_speed
    return TransferEstimate(total, original_bytes / link_speed)
