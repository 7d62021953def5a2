"""Bit <-> symbol pipeline: Hamming(7,4), diagonal interleaving, Gray mapping.

A payload is padded to nibbles, Hamming-encoded, grouped into blocks of 5
codewords, interleaved so each codeword contributes exactly one bit to each
of 7 five-bit symbols, and mapped so adjacent on-air symbol values carry bit
patterns differing in a single bit. Any single corrupted symbol per block is
therefore fully correctable.

Bit order is MSB-first within symbols and codewords.
"""

from __future__ import annotations

import numpy as np

BLOCK_CODEWORDS = 5  # codewords interleaved together (= bits per symbol)
BLOCK_SYMBOLS = 7  # symbols per block (= bits per codeword)

# Syndrome (s1,s2,s3 packed MSB-first) -> index of the flipped bit in
# [d1 d2 d3 d4 p1 p2 p3]; syndrome 0 means no error.
_SYNDROME_TO_BIT = {0b110: 0, 0b101: 1, 0b011: 2, 0b111: 3,
                    0b100: 4, 0b010: 5, 0b001: 6}


def _as_bits(bits, length: int | None = None) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.int64).reshape(-1)
    if len(arr) and not np.all((arr == 0) | (arr == 1)):
        raise ValueError("bits must be 0 or 1")
    if length is not None and len(arr) != length:
        raise ValueError(f"expected {length} bits, got {len(arr)}")
    return arr.astype(np.uint8)


def hamming74_encode(data) -> np.ndarray:
    """4 data bits -> systematic 7-bit codeword [d1 d2 d3 d4 p1 p2 p3]."""
    d = _as_bits(data, 4)
    p1 = d[0] ^ d[1] ^ d[3]
    p2 = d[0] ^ d[2] ^ d[3]
    p3 = d[1] ^ d[2] ^ d[3]
    return np.concatenate([d, [p1, p2, p3]]).astype(np.uint8)


def hamming74_decode(word) -> tuple[np.ndarray, int]:
    """Syndrome-decode a 7-bit word to (4 data bits, corrected flag).

    Single-bit errors are repaired; 2-bit errors mis-correct silently, which
    is inherent to the code.
    """
    w = _as_bits(word, 7).copy()
    s1 = w[4] ^ w[0] ^ w[1] ^ w[3]
    s2 = w[5] ^ w[0] ^ w[2] ^ w[3]
    s3 = w[6] ^ w[1] ^ w[2] ^ w[3]
    syndrome = (int(s1) << 2) | (int(s2) << 1) | int(s3)
    corrected = 0
    if syndrome:
        w[_SYNDROME_TO_BIT[syndrome]] ^= 1
        corrected = 1
    return w[:4], corrected


def gray_encode(v: int, sf: int = 5) -> int:
    """v -> v XOR (v >> 1); adjacent inputs differ in exactly one output bit."""
    if not 0 <= v < (1 << sf):
        raise ValueError(f"value {v} out of range [0, {1 << sf})")
    return v ^ (v >> 1)


def gray_decode(g: int, sf: int = 5) -> int:
    """Exact inverse of gray_encode."""
    if not 0 <= g < (1 << sf):
        raise ValueError(f"value {g} out of range [0, {1 << sf})")
    v = g
    shift = 1
    while shift < sf:
        v ^= v >> shift
        shift <<= 1
    return v


def interleave_block(codewords) -> np.ndarray:
    """Diagonally spread 5 codewords over 7 five-bit symbol values.

    Symbol s bit position c (MSB-first) carries bit (s - c) mod 7 of
    codeword c, so every codeword touches each symbol exactly once.
    """
    cw = np.asarray(codewords, dtype=np.uint8)
    if cw.shape != (BLOCK_CODEWORDS, BLOCK_SYMBOLS):
        raise ValueError(f"expected shape (5, 7), got {cw.shape}")
    symbols = np.zeros(BLOCK_SYMBOLS, dtype=np.int64)
    for s in range(BLOCK_SYMBOLS):
        for c in range(BLOCK_CODEWORDS):
            bit = cw[c, (s - c) % BLOCK_SYMBOLS]
            symbols[s] |= int(bit) << (BLOCK_CODEWORDS - 1 - c)
    return symbols


def deinterleave_block(symbols) -> np.ndarray:
    """Exact inverse of interleave_block: 7 symbol values -> 5 codewords."""
    sym = np.asarray(symbols, dtype=np.int64)
    if sym.shape != (BLOCK_SYMBOLS,):
        raise ValueError(f"expected 7 symbols, got shape {sym.shape}")
    if len(sym) and (sym.min() < 0 or sym.max() >= (1 << BLOCK_CODEWORDS)):
        raise ValueError("symbol values out of range [0, 32)")
    cw = np.zeros((BLOCK_CODEWORDS, BLOCK_SYMBOLS), dtype=np.uint8)
    for s in range(BLOCK_SYMBOLS):
        for c in range(BLOCK_CODEWORDS):
            bit = (int(sym[s]) >> (BLOCK_CODEWORDS - 1 - c)) & 1
            cw[c, (s - c) % BLOCK_SYMBOLS] = bit
    return cw


def symbol_count(payload_bits: int) -> int:
    """On-air data symbols for a payload: 7 * ceil(ceil(bits/4)/5)."""
    if payload_bits < 0:
        raise ValueError("payload_bits must be >= 0")
    codewords = -(-payload_bits // 4)
    blocks = -(-codewords // BLOCK_CODEWORDS)
    return BLOCK_SYMBOLS * blocks


def encode_payload(bits) -> np.ndarray:
    """Bits -> on-air symbol values.

    Zero-pads to a nibble boundary, Hamming-encodes, zero-codeword-pads to a
    block boundary, interleaves, then picks the symbol value whose Gray label
    equals each interleaved 5-bit group (so neighbouring de-chirp bins cost
    one bit).
    """
    b = _as_bits(bits)
    if len(b) % 4:
        b = np.concatenate([b, np.zeros(4 - len(b) % 4, dtype=np.uint8)])
    codewords = [hamming74_encode(b[i : i + 4]) for i in range(0, len(b), 4)]
    while len(codewords) % BLOCK_CODEWORDS:
        codewords.append(np.zeros(BLOCK_SYMBOLS, dtype=np.uint8))
    symbols = []
    for i in range(0, len(codewords), BLOCK_CODEWORDS):
        block = interleave_block(codewords[i : i + BLOCK_CODEWORDS])
        symbols.extend(gray_decode(int(v)) for v in block)
    return np.array(symbols, dtype=np.int64)


def decode_payload(symbols, payload_bit_len: int) -> tuple[np.ndarray, int]:
    """Invert encode_payload; returns (bits, count of corrected codewords)."""
    sym = np.asarray(symbols, dtype=np.int64).reshape(-1)
    if len(sym) % BLOCK_SYMBOLS:
        raise ValueError(f"symbol count {len(sym)} is not a multiple of 7")
    if payload_bit_len < 0:
        raise ValueError("payload_bit_len must be >= 0")
    if len(sym) != symbol_count(payload_bit_len):
        raise ValueError(
            f"{len(sym)} symbols inconsistent with {payload_bit_len}-bit payload "
            f"(expected {symbol_count(payload_bit_len)})"
        )
    bits = []
    corrected = 0
    for i in range(0, len(sym), BLOCK_SYMBOLS):
        labels = [gray_encode(int(v)) for v in sym[i : i + BLOCK_SYMBOLS]]
        for word in deinterleave_block(np.array(labels)):
            data, fixed = hamming74_decode(word)
            bits.append(data)
            corrected += fixed
    out = np.concatenate(bits)[:payload_bit_len] if bits else np.zeros(0, np.uint8)
    return out, corrected
