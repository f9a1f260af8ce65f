"""Archive container: lossless byte pass and the on-disk layout.

Layout (all integers little-endian):

    magic "HPEZARCV" (8) | version (1) | rank (1) | dims (rank x u64) |
    element kind (1) | bound mode (1) | epsilon (f64) |
    config length (u64) + config bytes |
    3 x (stream length (u64) + stream bytes)

The three streams are anchors, entropy-coded quantizer output, and
outliers, each wrapped by the lossless pass.  A stream's first byte
tags the backend (0 store, 1 zlib) so decoding is self-describing.
"""

from __future__ import annotations

import struct
import zlib

import numpy as np

from .errors import (BadMagic, CorruptStream, LengthMismatch,
                     UnsupportedVersion)
from .grid import BoundMode, ElementKind
from .huffman import decode as huffman_decode
from .huffman import encode as huffman_encode
from .plan import (CompressionConfig, LevelConfig, active_axes_of,
                   decode_tag, encode_tag)

MAGIC = b"HPEZARCV"
VERSION = 1

BACKEND_STORE = 0
BACKEND_ZLIB = 1

_KIND_CODES = {ElementKind.F32: 0, ElementKind.F64: 1,
               ElementKind.I32: 2, ElementKind.I64: 3}
_KIND_FROM_CODE = {v: k for k, v in _KIND_CODES.items()}
_MODE_CODES = {BoundMode.ABS: 0, BoundMode.REL: 1}
_MODE_FROM_CODE = {v: k for k, v in _MODE_CODES.items()}


def lossless_pass(data: bytes, backend: int = BACKEND_ZLIB) -> bytes:
    """Wrap bytes with the chosen backend, falling back to store when
    compression does not help."""
    if backend == BACKEND_STORE:
        return bytes([BACKEND_STORE]) + data
    if backend != BACKEND_ZLIB:
        raise ValueError(f"unknown lossless backend {backend}")
    packed = zlib.compress(data, 6)
    if len(packed) >= len(data):
        return bytes([BACKEND_STORE]) + data
    return bytes([BACKEND_ZLIB]) + packed


def lossless_unpass(blob: bytes) -> bytes:
    if len(blob) < 1:
        raise CorruptStream("empty lossless blob")
    tag, payload = blob[0], blob[1:]
    if tag == BACKEND_STORE:
        return payload
    if tag == BACKEND_ZLIB:
        try:
            return zlib.decompress(payload)
        except zlib.error as exc:
            raise CorruptStream(f"zlib payload failed: {exc}") from exc
    raise CorruptStream(f"unknown lossless backend tag {tag}")


def pack_codes(codes: np.ndarray) -> bytes:
    """Entropy-code a quantizer stream.

    Layout: symbol count (u64) | table size (u32) | per-symbol code
    lengths (u8 each) | payload bit count (u64) | packed bits.
    """
    codes = np.ascontiguousarray(codes, dtype=np.int64)
    if codes.size == 0:
        return struct.pack("<QI", 0, 0)
    lengths, payload, nbits = huffman_encode(codes)
    return b"".join([
        struct.pack("<QI", codes.size, len(lengths)),
        np.ascontiguousarray(lengths, dtype=np.uint8).tobytes(),
        struct.pack("<Q", nbits),
        payload,
    ])


def unpack_codes(buf: bytes) -> np.ndarray:
    head = struct.calcsize("<QI")
    if len(buf) < head:
        raise CorruptStream("code stream header truncated")
    count, n_table = struct.unpack_from("<QI", buf, 0)
    if count == 0:
        return np.empty(0, dtype=np.int64)
    off = head
    if len(buf) < off + n_table + 8:
        raise CorruptStream("code table truncated")
    lengths = np.frombuffer(buf, dtype=np.uint8, count=n_table, offset=off)
    off += n_table
    (nbits,) = struct.unpack_from("<Q", buf, off)
    off += 8
    if len(buf) - off != (nbits + 7) // 8:
        raise CorruptStream(
            f"code payload holds {len(buf) - off} bytes, "
            f"{(nbits + 7) // 8} declared")
    return huffman_decode(lengths.astype(np.int64), buf[off:], count)


def serialize_config(cfg: CompressionConfig, dims: tuple[int, ...]) -> bytes:
    rank = len(dims)
    active = active_axes_of(rank, cfg.frozen_dim)
    parts = [struct.pack(
        "<dIHBBbdd",
        cfg.resolved_bound,
        cfg.radius,
        cfg.anchor_stride,
        0 if cfg.predictor == "interp" else 1,
        cfg.lorenzo_order,
        -1 if cfg.frozen_dim is None else cfg.frozen_dim,
        cfg.alpha,
        cfg.beta,
    )]
    md = list(cfg.md_alpha) + [0.0] * (rank - len(cfg.md_alpha))
    parts.append(np.asarray(md[:rank], dtype="<f4").tobytes())
    parts.append(struct.pack("<B", len(cfg.level_configs)))
    for lc in cfg.level_configs:
        parts.append(struct.pack("<B", encode_tag(lc, active)))
    if cfg.block_table is not None and cfg.block_size > 0:
        table = np.ascontiguousarray(cfg.block_table, dtype=np.uint8)
        parts.append(struct.pack("<BH", 1, cfg.block_size))
        parts.append(table.tobytes())
    else:
        parts.append(struct.pack("<B", 0))
    return b"".join(parts)


def parse_config(buf: bytes, dims: tuple[int, ...]) -> CompressionConfig:
    rank = len(dims)
    head = struct.calcsize("<dIHBBbdd")
    if len(buf) < head:
        raise LengthMismatch("config block too short")
    (bound, radius, anchor_stride, pred_code, lorder, frozen,
     alpha, beta) = struct.unpack_from("<dIHBBbdd", buf, 0)
    off = head
    md = np.frombuffer(buf, dtype="<f4", count=rank, offset=off)
    off += 4 * rank
    (n_levels,) = struct.unpack_from("<B", buf, off)
    off += 1
    frozen_dim = None if frozen < 0 else int(frozen)
    active = active_axes_of(rank, frozen_dim)
    levels: list[LevelConfig] = []
    for _ in range(n_levels):
        (tag,) = struct.unpack_from("<B", buf, off)
        off += 1
        levels.append(decode_tag(tag, active))
    (has_table,) = struct.unpack_from("<B", buf, off)
    off += 1
    block_size = 0
    table = None
    if has_table:
        (block_size,) = struct.unpack_from("<H", buf, off)
        off += 2
        n_blocks = 1
        for ext in dims:
            n_blocks *= -(-ext // block_size)
        need = n_levels * n_blocks
        if len(buf) - off < need:
            raise LengthMismatch("block table truncated")
        table = np.frombuffer(buf, dtype=np.uint8, count=need, offset=off)
        table = table.reshape(n_levels, n_blocks).copy()
        off += need
    return CompressionConfig(
        predictor="interp" if pred_code == 0 else "lorenzo",
        resolved_bound=bound,
        radius=int(radius),
        anchor_stride=int(anchor_stride),
        alpha=float(alpha),
        beta=float(beta),
        frozen_dim=frozen_dim,
        level_configs=tuple(levels),
        md_alpha=tuple(float(x) for x in md),
        lorenzo_order=int(lorder),
        block_size=int(block_size),
        block_table=table,
    )


def assemble(dims, kind: ElementKind, mode: BoundMode, epsilon: float,
             config_bytes: bytes, streams: tuple[bytes, bytes, bytes]) -> bytes:
    parts = [MAGIC, struct.pack("<BB", VERSION, len(dims))]
    for ext in dims:
        parts.append(struct.pack("<Q", ext))
    parts.append(struct.pack("<BBd", _KIND_CODES[kind], _MODE_CODES[mode], epsilon))
    parts.append(struct.pack("<Q", len(config_bytes)))
    parts.append(config_bytes)
    for s in streams:
        parts.append(struct.pack("<Q", len(s)))
        parts.append(s)
    return b"".join(parts)


def parse(archive: bytes):
    """Split an archive into (dims, kind, mode, epsilon, config_bytes,
    [anchor_blob, code_blob, outlier_blob])."""
    if len(archive) < len(MAGIC) + 2:
        raise BadMagic("archive shorter than its magic")
    if archive[:len(MAGIC)] != MAGIC:
        raise BadMagic(f"bad magic {archive[:len(MAGIC)]!r}")
    off = len(MAGIC)
    version, rank = struct.unpack_from("<BB", archive, off)
    off += 2
    if version > VERSION:
        raise UnsupportedVersion(f"archive version {version} > {VERSION}")
    if not 1 <= rank <= 4:
        raise LengthMismatch(f"bad rank {rank}")
    if len(archive) < off + 8 * rank + 10:
        raise LengthMismatch("header truncated")
    dims = []
    for _ in range(rank):
        (ext,) = struct.unpack_from("<Q", archive, off)
        dims.append(int(ext))
        off += 8
    kind_code, mode_code, epsilon = struct.unpack_from("<BBd", archive, off)
    off += 10
    if kind_code not in _KIND_FROM_CODE:
        raise LengthMismatch(f"bad element kind code {kind_code}")
    if mode_code not in _MODE_FROM_CODE:
        raise LengthMismatch(f"bad bound mode code {mode_code}")

    def take() -> bytes:
        nonlocal off
        if len(archive) < off + 8:
            raise LengthMismatch("section length truncated")
        (n,) = struct.unpack_from("<Q", archive, off)
        off2 = off + 8
        if len(archive) < off2 + n:
            raise LengthMismatch(
                f"section wants {n} bytes, {len(archive) - off2} remain")
        nonlocal_data = archive[off2:off2 + n]
        off = off2 + n
        return nonlocal_data

    config_bytes = take()
    streams = [take(), take(), take()]
    if off != len(archive):
        raise LengthMismatch(f"{len(archive) - off} trailing bytes")
    return tuple(dims), _KIND_FROM_CODE[kind_code], _MODE_FROM_CODE[mode_code], \
        float(epsilon), config_bytes, streams
