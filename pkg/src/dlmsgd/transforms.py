"""GD chunk transforms: split a chunk into (basis, deviation) and glue it back."""

from __future__ import annotations

from functools import lru_cache
from typing import NamedTuple

from .errors import CorruptStreamError, TransformError
from .pattern import Hamming, LastByte, Token


class BasisDeviationPair(NamedTuple):
    basis: bytes
    deviation: bytes


def lastbyte_split(chunk: bytes, n: int, k: int) -> BasisDeviationPair:
    if len(chunk) != n + k:
        raise TransformError(f"L{n},{k} expects a {n + k}-byte chunk, got {len(chunk)} bytes")
    return BasisDeviationPair(bytes(chunk[:n]), bytes(chunk[n:]))


def lastbyte_merge(pair: BasisDeviationPair) -> bytes:
    return bytes(pair.basis) + bytes(pair.deviation)


# -- Hamming ----------------------------------------------------------------
#
# The chunk is read as a 2^p-bit integer, MSB first.  Bits 0 .. 2^p-2 hold a
# Hamming(2^p-1, 2^p-1-p) word whose 1-indexed position i sits at chunk bit
# i-1; parity bits live at power-of-two positions.  The final bit is spare
# and is carried in the basis unchanged.


class _HammingLayout(NamedTuple):
    chunk_bits: int
    code_len: int
    data_positions: tuple[int, ...]
    basis_bytes: int


@lru_cache(maxsize=None)
def _layout(p: int) -> _HammingLayout:
    Hamming(p)  # validates p
    code_len = (1 << p) - 1
    data_positions = tuple(i for i in range(1, code_len + 1) if i & (i - 1))
    basis_bits = len(data_positions) + 1
    return _HammingLayout(1 << p, code_len, data_positions, -(-basis_bits // 8))


def _bit(value: int, pos: int, width: int) -> int:
    return (value >> (width - pos)) & 1


def hamming_syndrome(chunk: bytes, p: int) -> int:
    lay = _layout(p)
    c = int.from_bytes(chunk, "big")
    s = 0
    for i in range(1, lay.code_len + 1):
        if _bit(c, i, lay.chunk_bits):
            s ^= i
    return s


def hamming_split(chunk: bytes, p: int) -> BasisDeviationPair:
    lay = _layout(p)
    if len(chunk) != lay.chunk_bits // 8:
        raise TransformError(f"H{p} expects a {lay.chunk_bits // 8}-byte chunk, "
                             f"got {len(chunk)} bytes")
    c = int.from_bytes(chunk, "big")
    syndrome = hamming_syndrome(chunk, p)
    if syndrome:
        c ^= 1 << (lay.chunk_bits - syndrome)
    basis = 0
    for i in lay.data_positions:
        basis = (basis << 1) | _bit(c, i, lay.chunk_bits)
    basis = (basis << 1) | (c & 1)
    pad = lay.basis_bytes * 8 - (len(lay.data_positions) + 1)
    return BasisDeviationPair((basis << pad).to_bytes(lay.basis_bytes, "big"),
                              bytes((syndrome,)))


def hamming_merge(pair: BasisDeviationPair, p: int) -> bytes:
    lay = _layout(p)
    basis, deviation = pair
    if len(basis) != lay.basis_bytes or len(deviation) != 1:
        raise CorruptStreamError(
            f"H{p} pair must be {lay.basis_bytes}+1 bytes, got {len(basis)}+{len(deviation)}")
    flip = deviation[0]
    if flip > lay.code_len:
        raise CorruptStreamError(f"H{p} deviation {flip} exceeds codeword length {lay.code_len}")
    n_data = len(lay.data_positions)
    pad = lay.basis_bytes * 8 - (n_data + 1)
    b = int.from_bytes(basis, "big")
    if b & ((1 << pad) - 1):
        raise CorruptStreamError(f"H{p} basis has non-zero padding bits")
    b >>= pad
    spare = b & 1
    b >>= 1
    c = 0
    syndrome = 0
    for idx, i in enumerate(lay.data_positions):
        if (b >> (n_data - 1 - idx)) & 1:
            c |= 1 << (lay.chunk_bits - i)
            syndrome ^= i
    # parity bit 2^r is set iff the data syndrome has bit r set
    r = 1
    while r <= lay.code_len:
        if syndrome & r:
            c |= 1 << (lay.chunk_bits - r)
        r <<= 1
    c |= spare
    if flip:
        c ^= 1 << (lay.chunk_bits - flip)
    return c.to_bytes(lay.chunk_bits // 8, "big")


def split(token: Token, chunk: bytes) -> BasisDeviationPair:
    if isinstance(token, LastByte):
        return lastbyte_split(chunk, token.n, token.k)
    return hamming_split(chunk, token.p)


def merge(token: Token, basis: bytes, deviation: bytes) -> bytes:
    if isinstance(token, LastByte):
        if len(basis) != token.n or len(deviation) != token.k:
            raise CorruptStreamError(f"{token.render()} pair has wrong sizes "
                                     f"{len(basis)}+{len(deviation)}")
        return basis + deviation
    return hamming_merge(BasisDeviationPair(basis, deviation), token.p)
