"""Lorenzo scan prediction with inline quantization.

Each point is predicted from its already-visited backward neighbors in
one row-major sweep, so prediction, quantization, and reconstruction
must happen point by point.  The stencil is the tensor-product
difference filter: coefficient -prod(w[o_i]) for every backward offset
o in {0..order}^rank except the origin, with w = (1, -1) for order 1
and (1, -2, 1) for order 2.  Neighbors outside the grid contribute
zero.  The sweep is a compiled kernel; first use per signature pays a
small JIT cost that is cached on disk afterwards.
"""

from __future__ import annotations

import itertools

import numpy as np
from numba import njit

from .errors import CorruptStream, OutlierUnderflow
from .quant import ROUND_F32, ROUND_INT, ROUND_NONE


def build_stencil(rank: int, order: int):
    """Backward offsets (n, rank) and their coefficients (n,)."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    if rank < 1:
        raise ValueError(f"rank must be >= 1, got {rank}")
    w = (1.0, -1.0) if order == 1 else (1.0, -2.0, 1.0)
    offsets = []
    coeffs = []
    for o in itertools.product(range(order + 1), repeat=rank):
        if not any(o):
            continue
        c = -1.0
        for oi in o:
            c *= w[oi]
        offsets.append(o)
        coeffs.append(c)
    return np.array(offsets, dtype=np.int64), np.array(coeffs, dtype=np.float64)


@njit(cache=True)
def _scan_compress(work, dims, deltas, flat_deltas, coeffs, bound, radius,
                   rounding, codes, outliers):
    d = dims.size
    n = work.size
    coords = np.zeros(d, np.int64)
    two_e = 2.0 * bound
    n_out = 0
    for i in range(n):
        acc = 0.0
        for t in range(flat_deltas.size):
            ok = True
            for k in range(d):
                if coords[k] < deltas[t, k]:
                    ok = False
                    break
            if ok:
                acc += coeffs[t] * work[i - flat_deltas[t]]
        orig = work[i]
        code = 0
        if bound > 0.0:
            q = (orig - acc) / two_e
            kq = np.floor(abs(q) + 0.5)
            if q < 0.0:
                kq = -kq
            if -radius < kq < radius:
                recon = acc + two_e * kq
                if rounding == ROUND_F32:
                    recon = np.float64(np.float32(recon))
                elif rounding == ROUND_INT:
                    recon = np.rint(recon)
                if abs(recon - orig) <= bound:
                    code = int(kq) + radius
                    work[i] = recon
        else:
            recon = acc
            if rounding == ROUND_F32:
                recon = np.float64(np.float32(recon))
            elif rounding == ROUND_INT:
                recon = np.rint(recon)
            if recon == orig:
                code = radius
                work[i] = recon
        if code == 0:
            outliers[n_out] = orig
            n_out += 1
        codes[i] = code
        for k in range(d - 1, -1, -1):
            coords[k] += 1
            if coords[k] < dims[k]:
                break
            coords[k] = 0
    return n_out


@njit(cache=True)
def _scan_decompress(work, dims, deltas, flat_deltas, coeffs, bound, radius,
                     rounding, codes, outliers):
    d = dims.size
    n = work.size
    coords = np.zeros(d, np.int64)
    two_e = 2.0 * bound
    n_out = 0
    for i in range(n):
        code = codes[i]
        if code == 0:
            if n_out >= outliers.size:
                return -1
            work[i] = outliers[n_out]
            n_out += 1
        else:
            acc = 0.0
            for t in range(flat_deltas.size):
                ok = True
                for k in range(d):
                    if coords[k] < deltas[t, k]:
                        ok = False
                        break
                if ok:
                    acc += coeffs[t] * work[i - flat_deltas[t]]
            recon = acc + two_e * (code - radius)
            if rounding == ROUND_F32:
                recon = np.float64(np.float32(recon))
            elif rounding == ROUND_INT:
                recon = np.rint(recon)
            work[i] = recon
        for k in range(d - 1, -1, -1):
            coords[k] += 1
            if coords[k] < dims[k]:
                break
            coords[k] = 0
    return n_out


def _flat_deltas(dims, deltas) -> np.ndarray:
    strides = np.ones(len(dims), dtype=np.int64)
    for k in range(len(dims) - 2, -1, -1):
        strides[k] = strides[k + 1] * dims[k + 1]
    return deltas @ strides


def lorenzo_pass(work: np.ndarray, bound: float, radius: int, order: int, *,
                 direction: str, rounding: int = ROUND_NONE,
                 codes: np.ndarray | None = None,
                 outliers: np.ndarray | None = None):
    """Run one full Lorenzo sweep in place on ``work`` (float64, C order).

    Compression returns (codes, outliers) and leaves ``work`` holding
    the decompressor-visible reconstruction.  Decompression fills
    ``work`` from the given streams and returns None.
    """
    dims = np.array(work.shape, dtype=np.int64)
    deltas, coeffs = build_stencil(work.ndim, order)
    flat = _flat_deltas(dims, deltas)
    view = work.reshape(-1)
    if direction == "compress":
        codes_out = np.empty(view.size, dtype=np.int32)
        out_buf = np.empty(view.size, dtype=np.float64)
        n_out = _scan_compress(view, dims, deltas, flat, coeffs,
                               float(bound), radius, rounding,
                               codes_out, out_buf)
        return codes_out, out_buf[:n_out].copy()
    if direction != "decompress":
        raise ValueError(f"bad direction {direction!r}")
    if codes is None or outliers is None:
        raise ValueError("decompression needs codes and outliers")
    codes = np.ascontiguousarray(codes, dtype=np.int32)
    if codes.size != view.size:
        raise CorruptStream(
            f"code stream has {codes.size} entries for {view.size} points")
    outliers = np.ascontiguousarray(outliers, dtype=np.float64)
    n_out = _scan_decompress(view, dims, deltas, flat, coeffs, float(bound),
                             radius, rounding, codes, outliers)
    if n_out < 0:
        raise OutlierUnderflow("outlier stream exhausted mid-scan")
    return None
