"""Canonical Huffman coding for quantizer code streams.

Only code lengths are serialized; codes are reassigned canonically on
both sides (sorted by length, ties by symbol value).  The bitstream is
MSB-first.  A single-symbol alphabet gets a 1-bit code so the payload
stays self-delimiting.
"""

from __future__ import annotations

import heapq

import numpy as np
from numba import njit

from .errors import EmptyInput, InvalidTable, TruncatedStream


def code_lengths(freqs: np.ndarray) -> np.ndarray:
    """Huffman code length per symbol (0 for absent symbols).

    Tree merge order is made deterministic by breaking frequency ties
    on the smallest symbol value in each subtree.
    """
    freqs = np.asarray(freqs, dtype=np.int64)
    symbols = np.flatnonzero(freqs)
    if len(symbols) == 0:
        raise EmptyInput("no symbols with nonzero frequency")
    lengths = np.zeros(len(freqs), dtype=np.uint8)
    if len(symbols) == 1:
        lengths[symbols[0]] = 1
        return lengths
    # Heap entries: (freq, tiebreak, leaf symbols).
    heap = [(int(freqs[s]), int(s), [int(s)]) for s in symbols]
    heapq.heapify(heap)
    depth = {int(s): 0 for s in symbols}
    while len(heap) > 1:
        fa, ta, la = heapq.heappop(heap)
        fb, tb, lb = heapq.heappop(heap)
        for s in la:
            depth[s] += 1
        for s in lb:
            depth[s] += 1
        merged = la + lb
        heapq.heappush(heap, (fa + fb, min(ta, tb), merged))
    for s, d in depth.items():
        lengths[s] = d
    return lengths


def canonical_codes(lengths: np.ndarray):
    """Canonical code assignment and decode tables.

    Returns (code_values uint64 per symbol, first_code int64 per length,
    first_rank int64 per length, counts int64 per length, symbols sorted
    by rank).  Raises InvalidTable when the lengths are not a complete
    prefix code (single-symbol tables are the allowed exception).
    """
    lengths = np.asarray(lengths, dtype=np.uint8)
    present = np.flatnonzero(lengths)
    if len(present) == 0:
        raise InvalidTable("all code lengths are zero")
    max_len = int(lengths.max())
    counts = np.bincount(lengths[present].astype(np.int64), minlength=max_len + 1).astype(np.int64)
    counts[0] = 0
    if len(present) == 1:
        if max_len != 1:
            raise InvalidTable("single-symbol table must use length 1")
    else:
        kraft = int(np.sum(counts * (1 << (max_len - np.arange(max_len + 1, dtype=np.int64)))))
        if kraft != 1 << max_len:
            raise InvalidTable("lengths do not form a complete prefix code")
    first_code = np.zeros(max_len + 2, dtype=np.int64)
    first_rank = np.zeros(max_len + 2, dtype=np.int64)
    code = 0
    rank = 0
    for ln in range(1, max_len + 1):
        first_code[ln] = code
        first_rank[ln] = rank
        code = (code + counts[ln]) << 1
        rank += counts[ln]
    order = np.lexsort((present, lengths[present]))
    rank_symbols = present[order].astype(np.int64)
    code_values = np.zeros(len(lengths), dtype=np.uint64)
    ranks_within = np.arange(len(rank_symbols), dtype=np.int64)
    lns = lengths[rank_symbols].astype(np.int64)
    code_values[rank_symbols] = (first_code[lns] + (ranks_within - first_rank[lns])).astype(np.uint64)
    return code_values, first_code[:max_len + 1], first_rank[:max_len + 1], counts, rank_symbols


@njit(cache=True)
def _pack_bits(symbols, code_values, code_lens, out):
    acc = np.uint64(0)
    nacc = 0
    pos = 0
    for i in range(symbols.shape[0]):
        s = symbols[i]
        length = int(code_lens[s])
        val = code_values[s]
        while length > 0:
            take = 32 if length > 32 else length
            chunk = (val >> np.uint64(length - take)) & np.uint64((1 << take) - 1)
            acc = (acc << np.uint64(take)) | chunk
            nacc += take
            length -= take
            while nacc >= 8:
                out[pos] = np.uint8((acc >> np.uint64(nacc - 8)) & np.uint64(0xFF))
                pos += 1
                nacc -= 8
    if nacc > 0:
        out[pos] = np.uint8((acc << np.uint64(8 - nacc)) & np.uint64(0xFF))
        pos += 1
    return pos


@njit(cache=True)
def _unpack_symbols(data, nbits, count, first_code, first_rank, counts, rank_symbols, out):
    code = np.int64(0)
    length = 0
    max_len = first_code.shape[0] - 1
    bitpos = 0
    for i in range(count):
        found = False
        while not found:
            if bitpos >= nbits:
                return -1  # truncated
            byte = data[bitpos >> 3]
            bit = (byte >> (7 - (bitpos & 7))) & 1
            bitpos += 1
            code = (code << 1) | np.int64(bit)
            length += 1
            if length > max_len:
                return -2  # no symbol at any valid length
            if counts[length] > 0:
                off = code - first_code[length]
                if 0 <= off < counts[length]:
                    out[i] = rank_symbols[first_rank[length] + off]
                    code = np.int64(0)
                    length = 0
                    found = True
    return bitpos


def encode(symbols: np.ndarray) -> tuple[np.ndarray, bytes, int]:
    """Encode int symbols >= 0.  Returns (lengths, payload, nbits)."""
    symbols = np.ascontiguousarray(symbols, dtype=np.int64)
    if symbols.size == 0:
        raise EmptyInput("empty symbol sequence")
    if symbols.min() < 0:
        raise ValueError("symbols must be non-negative")
    freqs = np.bincount(symbols)
    lengths = code_lengths(freqs)
    code_values, *_ = canonical_codes(lengths)
    total_bits = int(lengths[symbols].astype(np.int64).sum())
    out = np.zeros((total_bits + 7) // 8, dtype=np.uint8)
    used = _pack_bits(symbols, code_values, lengths, out)
    assert used == len(out)
    return lengths, out.tobytes(), total_bits


def decode(lengths: np.ndarray, payload: bytes, count: int) -> np.ndarray:
    """Decode ``count`` symbols from an MSB-first payload."""
    if count == 0:
        return np.empty(0, dtype=np.int64)
    _, first_code, first_rank, counts, rank_symbols = canonical_codes(lengths)
    data = np.frombuffer(payload, dtype=np.uint8)
    out = np.empty(count, dtype=np.int64)
    used = _unpack_symbols(data, len(data) * 8, count, first_code, first_rank,
                           counts, rank_symbols, out)
    if used == -1:
        raise TruncatedStream(f"bitstream ended before {count} symbols")
    if used == -2:
        raise InvalidTable("bit pattern matches no code")
    return out
