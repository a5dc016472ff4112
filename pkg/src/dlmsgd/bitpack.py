"""MSB-first packing of variable-width unsigned integers."""

from __future__ import annotations

from typing import Iterable, Sequence


def index_width(n: int) -> int:
    """Bits needed to address ``n`` entries; never less than one."""
    return max(1, (n - 1).bit_length())


def pack_bits(values: Iterable[int], widths: Iterable[int]) -> bytes:
    """Concatenate ``values`` MSB-first and zero-pad to a whole byte."""
    acc = 0
    nbits = 0
    for v, w in zip(values, widths):
        if v >> w:
            raise ValueError(f"value {v} does not fit in {w} bits")
        acc = (acc << w) | v
        nbits += w
    pad = -nbits % 8
    return (acc << pad).to_bytes((nbits + pad) // 8, "big")


def unpack_bits(data: bytes, widths: Sequence[int], strict: bool = True) -> list[int]:
    """Inverse of :func:`pack_bits`.

    With ``strict`` the buffer must be exactly as long as the padded field
    total and the padding bits must be zero.
    """
    total = sum(widths)
    nbytes = -(-total // 8)
    if len(data) < nbytes or (strict and len(data) != nbytes):
        raise ValueError(f"need {nbytes} bytes for {total} bits, got {len(data)}")
    acc = int.from_bytes(data[:nbytes], "big")
    pad = nbytes * 8 - total
    if strict and acc & ((1 << pad) - 1):
        raise ValueError("non-zero padding bits")
    acc >>= pad
    out = [0] * len(widths)
    shift = total
    for i, w in enumerate(widths):
        shift -= w
        out[i] = (acc >> shift) & ((1 << w) - 1)
    return out
