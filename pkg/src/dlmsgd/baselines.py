"""Per-APDU comparison compressors: DLMS Null Data, Delta Array and an LZ-family
statistical compressor.  None of them carries state between APDUs.

Null and Delta keep the first reading intact.  Every later reading keeps its
``02 08`` structure header and encodes each element as either the full
tagged value or a single ``00`` (null-data) byte meaning "same as before",
or for ``log_id`` and the timestamp "exactly one step on from before"
(+1 and +period respectively).  Delta additionally replaces each counter
with a signed difference tagged ``0F`` (int8), ``10`` (int16) or ``05``
(int32); differences beyond 32 bits fall back to the full ``06`` value.
"""

from __future__ import annotations

import enum
import lzma
import struct
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Mapping, Sequence

from .dlms import (
    READING_SIZE,
    TAG_DOUBLE_LONG_UNSIGNED,
    TAG_LONG_UNSIGNED,
    TAG_OCTET_STRING,
    DateTime,
    Reading,
    decode_reading,
    encode_apdu,
    encode_reading,
)
from .errors import EncodingError, MalformedBufferError

NULL_DATA = 0x00
TAG_INTEGER = 0x0F
TAG_LONG = 0x10
TAG_DOUBLE_LONG = 0x05

_TS = struct.Struct(">HBBBBBBBhB")
_SIGNED = ((TAG_INTEGER, struct.Struct(">b")),
           (TAG_LONG, struct.Struct(">h")),
           (TAG_DOUBLE_LONG, struct.Struct(">i")))
_SIGNED_BY_TAG = dict(_SIGNED)

COUNTERS = ("log_id", "a14", "a23", "r12", "r34")
FIELD_ORDER = ("log_id", "timestamp", "log_status", "data_quality", "a14", "a23", "r12", "r34")


class BaselineKind(enum.Enum):
    UNCOMPRESSED = "none"
    NULL_DATA = "null"
    DELTA_ARRAY = "delta"
    STATISTICAL = "stat"


def _pack_ts(t: DateTime) -> bytes:
    return bytes((TAG_OCTET_STRING, 12)) + _TS.pack(
        t.year, t.month, t.day, t.weekday, t.hour, t.minute, t.second,
        t.hundredths, t.deviation, t.clock_status)


def _full_field(name: str, r: Reading) -> bytes:
    if name == "timestamp":
        return _pack_ts(r.timestamp)
    if name == "log_status":
        return struct.pack(">BH", TAG_LONG_UNSIGNED, r.log_status)
    return struct.pack(">BI", TAG_DOUBLE_LONG_UNSIGNED, getattr(r, name))


@lru_cache(maxsize=8192)
def _next_timestamp(t: DateTime, period: int) -> DateTime | None:
    try:
        return t.shifted(period)
    except (ValueError, OverflowError):
        return None  # not a calendar date (year 0, Feb 30, ...): always sent in full


def _expected(name: str, prev: Reading, period: int):
    if name == "log_id":
        return (prev.log_id + 1) & 0xFFFFFFFF
    if name == "timestamp":
        return _next_timestamp(prev.timestamp, period)
    return getattr(prev, name)


def _delta_field(name: str, prev: Reading, cur: Reading) -> bytes:
    d = getattr(cur, name) - getattr(prev, name)
    for tag, st in _SIGNED:
        lim = 1 << (st.size * 8 - 1)
        if -lim <= d < lim:
            return bytes((tag,)) + st.pack(d)
    return _full_field(name, cur)


def _check(readings: Sequence[Reading], period: int) -> None:
    if not readings:
        raise EncodingError("readings", [], "an APDU needs at least one reading")
    if period <= 0:
        raise EncodingError("period", period, "must be a positive number of minutes")


def _compress(readings: Sequence[Reading], period: int, delta: bool) -> bytes:
    _check(readings, period)
    out = bytearray(encode_reading(readings[0]))
    for prev, cur in zip(readings, readings[1:]):
        cur.validate()
        out += b"\x02\x08"
        for name in FIELD_ORDER:
            if delta and name in COUNTERS:
                out += _delta_field(name, prev, cur)
            elif getattr(cur, name) == _expected(name, prev, period):
                out.append(NULL_DATA)
            else:
                out += _full_field(name, cur)
    return bytes(out)


_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")


def _decompress(data: bytes, period: int, delta: bool) -> list[Reading]:
    if len(data) < READING_SIZE:
        raise MalformedBufferError(len(data), "shorter than one reading")
    readings = [decode_reading(data[:READING_SIZE])]
    pos = READING_SIZE
    size = len(data)

    def need(at: int, n: int) -> None:
        if at + n > size:
            raise MalformedBufferError(at, f"truncated: need {at + n - size} more bytes")

    while pos < size:
        prev = readings[-1]
        if data[pos:pos + 2] != b"\x02\x08":
            need(pos, 2)
            raise MalformedBufferError(pos, "expected structure header 02 08")
        pos += 2
        values = {}
        for name in FIELD_ORDER:
            at = pos
            need(at, 1)
            tag = data[pos]
            pos += 1
            counter = delta and name in COUNTERS
            if tag == NULL_DATA and not counter:
                values[name] = _expected(name, prev, period)
                if values[name] is None:
                    raise MalformedBufferError(at, "null timestamp after a non-calendar date")
            elif counter and tag in _SIGNED_BY_TAG:
                st = _SIGNED_BY_TAG[tag]
                need(pos, st.size)
                (d,) = st.unpack_from(data, pos)
                pos += st.size
                values[name] = getattr(prev, name) + d
            elif name == "timestamp" and tag == TAG_OCTET_STRING:
                need(pos, 13)
                if data[pos] != 12:
                    raise MalformedBufferError(pos, "date-time length must be 12")
                v = _TS.unpack_from(data, pos + 1)
                pos += 13
                values[name] = DateTime(
                    year=v[0], month=v[1], day=v[2], weekday=v[3], hour=v[4], minute=v[5],
                    second=v[6], hundredths=v[7], deviation=v[8], clock_status=v[9])
            elif name == "log_status" and tag == TAG_LONG_UNSIGNED:
                need(pos, 2)
                (values[name],) = _U16.unpack_from(data, pos)
                pos += 2
            elif name not in ("timestamp", "log_status") and tag == TAG_DOUBLE_LONG_UNSIGNED:
                need(pos, 4)
                (values[name],) = _U32.unpack_from(data, pos)
                pos += 4
            else:
                raise MalformedBufferError(at, f"unexpected tag 0x{tag:02X} for {name}")
        r = Reading(**values)
        try:
            r.validate()
        except EncodingError as exc:
            raise MalformedBufferError(pos, str(exc)) from None
        readings.append(r)
    return readings


def null_compress(readings: Sequence[Reading], period: int = 15) -> bytes:
    return _compress(readings, period, delta=False)


def null_decompress(data: bytes, period: int = 15) -> list[Reading]:
    return _decompress(data, period, delta=False)


def delta_compress(readings: Sequence[Reading], period: int = 15) -> bytes:
    return _compress(readings, period, delta=True)


def delta_decompress(data: bytes, period: int = 15) -> list[Reading]:
    return _decompress(data, period, delta=True)


# -- statistical -----------------------------------------------------------------

_FORMATS = {"raw": lzma.FORMAT_RAW, "alone": lzma.FORMAT_ALONE, "xz": lzma.FORMAT_XZ}
_FILTERS = {"lzma1": lzma.FILTER_LZMA1, "lzma2": lzma.FILTER_LZMA2}


@dataclass(frozen=True)
class StatConfig:
    """LZMA settings standing in for the DLMS V.44 compressor."""

    format: str = "raw"
    filter: str = "lzma2"
    preset: int = 9
    dict_size: int = 1 << 16

    @classmethod
    def from_mapping(cls, cfg: Mapping[str, str]) -> StatConfig:
        c = cls(
            format=cfg.get("stat.format", cls.format),
            filter=cfg.get("stat.filter", cls.filter),
            preset=int(cfg.get("stat.preset", cls.preset)),
            dict_size=int(cfg.get("stat.dict_size", cls.dict_size)),
        )
        if c.format not in _FORMATS:
            raise ValueError(f"stat.format must be one of {sorted(_FORMATS)}")
        if c.filter not in _FILTERS:
            raise ValueError(f"stat.filter must be one of {sorted(_FILTERS)}")
        if c.format == "xz" and c.filter != "lzma2":
            raise ValueError("the xz container only supports lzma2")
        if c.format == "alone" and c.filter != "lzma1":
            raise ValueError("the alone container only supports lzma1")
        return c

    def _kwargs(self) -> dict:
        filters = [{"id": _FILTERS[self.filter], "preset": self.preset,
                    "dict_size": self.dict_size}]
        kw: dict = {"format": _FORMATS[self.format], "filters": filters}
        if self.format == "xz":
            kw["check"] = lzma.CHECK_NONE
        return kw


DEFAULT_STAT = StatConfig()

_M_TRIM_THRESHOLD = -1
_M_MMAP_THRESHOLD = -3


def keep_lzma_buffers_in_heap() -> bool:
    """Stop glibc from mmap-ing each LZMA encoder's ~1 MiB of buffers.

    Every ``lzma.compress`` call allocates and frees its match finder; above
    the default mmap threshold that is a fresh zeroed mapping each time, which
    costs about ten times the compression itself on small APDUs.  Raising the
    thresholds keeps the buffers on the heap for reuse.  Returns False where
    ``mallopt`` is unavailable (non-glibc platforms); the call is harmless there.
    """
    try:
        import ctypes
        import ctypes.util

        libc = ctypes.CDLL(ctypes.util.find_library("c") or "libc.so.6")
        mallopt = libc.mallopt
    except (OSError, AttributeError):
        return False
    return bool(mallopt(_M_MMAP_THRESHOLD, 64 << 20) and mallopt(_M_TRIM_THRESHOLD, 128 << 20))


def stat_compress(data: bytes, config: StatConfig = DEFAULT_STAT) -> bytes:
    return lzma.compress(bytes(data), **config._kwargs())


def stat_decompress(data: bytes, config: StatConfig = DEFAULT_STAT) -> bytes:
    kw = config._kwargs()
    kw.pop("check", None)
    if config.format != "raw":
        kw.pop("filters")
    return lzma.decompress(data, **kw)


# -- uniform per-APDU entry points for the benchmark and CLI ---------------------

Compressor = Callable[[Sequence[Reading], bytes], bytes]


def baseline_compressor(kind: BaselineKind | str, period: int = 15,
                        stat: StatConfig = DEFAULT_STAT) -> Compressor:
    """Return ``f(readings, apdu_bytes) -> compressed bytes`` for ``kind``."""
    kind = BaselineKind(kind)
    if kind is BaselineKind.UNCOMPRESSED:
        return lambda readings, raw: raw
    if kind is BaselineKind.NULL_DATA:
        return lambda readings, raw: null_compress(readings, period)
    if kind is BaselineKind.DELTA_ARRAY:
        return lambda readings, raw: delta_compress(readings, period)
    return lambda readings, raw: stat_compress(raw, stat)


def baseline_decompress(kind: BaselineKind | str, data: bytes, period: int = 15,
                        stat: StatConfig = DEFAULT_STAT) -> bytes:
    """Inverse of :func:`baseline_compressor`, returning the APDU data buffer."""
    kind = BaselineKind(kind)
    if kind is BaselineKind.UNCOMPRESSED:
        return data
    if kind is BaselineKind.NULL_DATA:
        return encode_apdu(null_decompress(data, period)).data
    if kind is BaselineKind.DELTA_ARRAY:
        return encode_apdu(delta_decompress(data, period)).data
    return stat_decompress(data, stat)
