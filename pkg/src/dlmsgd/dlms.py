"""DLMS data-buffer codec for load-profile readings.

Each reading is an A-XDR ``structure`` of eight elements and always
encodes to exactly 49 bytes::

    off  bytes  content
      0      2  02 08             structure, 8 elements
      2      5  06 + u32          log id
      7     14  09 0C + 12 bytes  date-time octet string
     21      3  12 + u16          log status bitmap
     24      5  06 + u32          data quality bitmap
     29      5  06 + u32          A14 active energy consumption (Wh)
     34      5  06 + u32          A23 active energy generation (Wh)
     39      5  06 + u32          R12 reactive energy Q1+Q2 (varh)
     44      5  06 + u32          R34 reactive energy Q3+Q4 (varh)

The 12-byte date-time is ``year(u16) month day weekday hour minute second
hundredths deviation(i16) clock_status``, all big-endian.
"""

from __future__ import annotations

import csv
import datetime as _dt
import io
import os
import struct
from dataclasses import dataclass, field
from typing import Iterable, Iterator, TextIO

from .errors import EncodingError, MalformedBufferError

READING_SIZE = 49

TAG_STRUCTURE = 0x02
TAG_OCTET_STRING = 0x09
TAG_LONG_UNSIGNED = 0x12
TAG_DOUBLE_LONG_UNSIGNED = 0x06

WEEKDAY_UNSPECIFIED = 0xFF
HUNDREDTHS_UNSPECIFIED = 0xFF
DEVIATION_UNSPECIFIED = -0x8000

_READING = struct.Struct(">BBBIBB HBBBBBBBhB BH BI BI BI BI BI")
assert _READING.size == READING_SIZE

# (offset, expected byte) for every fixed tag/length byte of an encoded reading
TAG_OFFSETS: tuple[tuple[int, int], ...] = (
    (0, TAG_STRUCTURE),
    (1, 0x08),
    (2, TAG_DOUBLE_LONG_UNSIGNED),
    (7, TAG_OCTET_STRING),
    (8, 0x0C),
    (21, TAG_LONG_UNSIGNED),
    (24, TAG_DOUBLE_LONG_UNSIGNED),
    (29, TAG_DOUBLE_LONG_UNSIGNED),
    (34, TAG_DOUBLE_LONG_UNSIGNED),
    (39, TAG_DOUBLE_LONG_UNSIGNED),
    (44, TAG_DOUBLE_LONG_UNSIGNED),
)

# value offsets, used to point decode errors at the offending field
FIELD_OFFSETS = {
    "log_id": 3,
    "timestamp": 9,
    "log_status": 22,
    "data_quality": 25,
    "a14": 30,
    "a23": 35,
    "r12": 40,
    "r34": 45,
}

U16_MAX = 0xFFFF
U32_MAX = 0xFFFFFFFF


@dataclass(frozen=True, slots=True)
class DateTime:
    """DLMS ``date-time`` value with every field of the 12-byte encoding.

    ``deviation`` is the local time offset from UTC in minutes
    (``DEVIATION_UNSPECIFIED`` when unknown).  ``weekday`` uses 1=Monday ..
    7=Sunday and is derived from the date when omitted.
    """

    year: int
    month: int
    day: int
    hour: int = 0
    minute: int = 0
    second: int = 0
    hundredths: int = 0
    deviation: int = 0
    clock_status: int = 0
    weekday: int = field(default=-1)

    def __post_init__(self) -> None:
        if self.weekday == -1:
            try:
                wd = _dt.date(self.year, self.month, self.day).isoweekday()
            except ValueError:
                wd = WEEKDAY_UNSPECIFIED
            object.__setattr__(self, "weekday", wd)

    def validate(self) -> None:
        if (0 <= self.year <= U16_MAX and 1 <= self.month <= 12 and 1 <= self.day <= 31
                and (1 <= self.weekday <= 7 or self.weekday == WEEKDAY_UNSPECIFIED)
                and 0 <= self.hour <= 23 and 0 <= self.minute <= 59 and 0 <= self.second <= 59
                and (0 <= self.hundredths <= 99 or self.hundredths == HUNDREDTHS_UNSPECIFIED)
                and (-720 <= self.deviation <= 720 or self.deviation == DEVIATION_UNSPECIFIED)
                and 0 <= self.clock_status <= 0xFF):
            return
        checks = (
            ("year", self.year, 0 <= self.year <= U16_MAX),
            ("month", self.month, 1 <= self.month <= 12),
            ("day", self.day, 1 <= self.day <= 31),
            ("weekday", self.weekday,
             1 <= self.weekday <= 7 or self.weekday == WEEKDAY_UNSPECIFIED),
            ("hour", self.hour, 0 <= self.hour <= 23),
            ("minute", self.minute, 0 <= self.minute <= 59),
            ("second", self.second, 0 <= self.second <= 59),
            ("hundredths", self.hundredths,
             0 <= self.hundredths <= 99 or self.hundredths == HUNDREDTHS_UNSPECIFIED),
            ("deviation", self.deviation,
             -720 <= self.deviation <= 720 or self.deviation == DEVIATION_UNSPECIFIED),
            ("clock_status", self.clock_status, 0 <= self.clock_status <= 0xFF),
        )
        for name, value, ok in checks:
            if not ok:
                raise EncodingError(f"timestamp.{name}", value)

    @classmethod
    def from_datetime(cls, dt: _dt.datetime, clock_status: int = 0) -> DateTime:
        if dt.tzinfo is None:
            deviation = DEVIATION_UNSPECIFIED
        else:
            offset = dt.utcoffset()
            assert offset is not None
            deviation = int(offset.total_seconds() // 60)
        return cls(
            year=dt.year,
            month=dt.month,
            day=dt.day,
            hour=dt.hour,
            minute=dt.minute,
            second=dt.second,
            hundredths=dt.microsecond // 10_000,
            deviation=deviation,
            clock_status=clock_status,
        )

    def to_datetime(self) -> _dt.datetime:
        tz = None
        if self.deviation != DEVIATION_UNSPECIFIED:
            tz = _dt.timezone(_dt.timedelta(minutes=self.deviation))
        hundredths = 0 if self.hundredths == HUNDREDTHS_UNSPECIFIED else self.hundredths
        return _dt.datetime(
            self.year, self.month, self.day, self.hour, self.minute, self.second,
            hundredths * 10_000, tzinfo=tz,
        )

    def shifted(self, minutes: int) -> DateTime:
        """Return this instant moved by ``minutes``, keeping the non-calendar fields."""
        moved = self.to_datetime() + _dt.timedelta(minutes=minutes)
        weekday = (
            WEEKDAY_UNSPECIFIED if self.weekday == WEEKDAY_UNSPECIFIED
            else moved.isoweekday()
        )
        return DateTime(
            year=moved.year,
            month=moved.month,
            day=moved.day,
            hour=moved.hour,
            minute=moved.minute,
            second=moved.second,
            hundredths=self.hundredths,
            deviation=self.deviation,
            clock_status=self.clock_status,
            weekday=weekday,
        )

    def isoformat(self) -> str:
        return self.to_datetime().isoformat()


@dataclass(frozen=True, slots=True)
class Reading:
    """One load-profile entry (log id, timestamp, bitmaps and four energy registers)."""

    log_id: int
    timestamp: DateTime
    log_status: int
    data_quality: int
    a14: int
    a23: int
    r12: int
    r34: int

    def validate(self) -> None:
        if (0 <= self.log_id <= U32_MAX and 0 <= self.data_quality <= U32_MAX
                and 0 <= self.a14 <= U32_MAX and 0 <= self.a23 <= U32_MAX
                and 0 <= self.r12 <= U32_MAX and 0 <= self.r34 <= U32_MAX
                and 0 <= self.log_status <= U16_MAX):
            self.timestamp.validate()
            return
        for name in ("log_id", "data_quality", "a14", "a23", "r12", "r34"):
            value = getattr(self, name)
            if not 0 <= value <= U32_MAX:
                raise EncodingError(name, value, "not an unsigned 32-bit value")
        if not 0 <= self.log_status <= U16_MAX:
            raise EncodingError("log_status", self.log_status, "not an unsigned 16-bit value")
        self.timestamp.validate()


def encode_reading(r: Reading) -> bytes:
    r.validate()
    t = r.timestamp
    return _READING.pack(
        TAG_STRUCTURE, 8,
        TAG_DOUBLE_LONG_UNSIGNED, r.log_id,
        TAG_OCTET_STRING, 12,
        t.year, t.month, t.day, t.weekday, t.hour, t.minute, t.second,
        t.hundredths, t.deviation, t.clock_status,
        TAG_LONG_UNSIGNED, r.log_status,
        TAG_DOUBLE_LONG_UNSIGNED, r.data_quality,
        TAG_DOUBLE_LONG_UNSIGNED, r.a14,
        TAG_DOUBLE_LONG_UNSIGNED, r.a23,
        TAG_DOUBLE_LONG_UNSIGNED, r.r12,
        TAG_DOUBLE_LONG_UNSIGNED, r.r34,
    )


def decode_reading(b: bytes) -> Reading:
    if len(b) != READING_SIZE:
        raise MalformedBufferError(min(len(b), READING_SIZE),
                                   f"expected {READING_SIZE} bytes, got {len(b)}")
    for offset, expected in TAG_OFFSETS:
        if b[offset] != expected:
            raise MalformedBufferError(
                offset, f"expected tag 0x{expected:02X}, found 0x{b[offset]:02X}")
    v = _READING.unpack(b)
    ts = DateTime(
        year=v[6], month=v[7], day=v[8], weekday=v[9], hour=v[10], minute=v[11],
        second=v[12], hundredths=v[13], deviation=v[14], clock_status=v[15],
    )
    reading = Reading(
        log_id=v[3], timestamp=ts, log_status=v[17], data_quality=v[19],
        a14=v[21], a23=v[23], r12=v[25], r34=v[27],
    )
    try:
        reading.validate()
    except EncodingError as exc:
        name = exc.field.split(".")[0]
        raise MalformedBufferError(FIELD_OFFSETS[name], str(exc)) from None
    return reading


@dataclass(frozen=True)
class ApduDataBuffer:
    data: bytes

    def __post_init__(self) -> None:
        if len(self.data) % READING_SIZE:
            raise MalformedBufferError(
                len(self.data) - len(self.data) % READING_SIZE,
                f"length {len(self.data)} is not a multiple of {READING_SIZE}",
            )

    @property
    def reading_count(self) -> int:
        return len(self.data) // READING_SIZE

    def __len__(self) -> int:
        return len(self.data)

    def __bytes__(self) -> bytes:
        return self.data


def encode_apdu(readings: Iterable[Reading]) -> ApduDataBuffer:
    data = b"".join(encode_reading(r) for r in readings)
    if not data:
        raise EncodingError("readings", [], "an APDU needs at least one reading")
    return ApduDataBuffer(data)


def decode_apdu(buf: bytes | ApduDataBuffer) -> list[Reading]:
    data = bytes(buf)
    if len(data) % READING_SIZE:
        raise MalformedBufferError(
            len(data) - len(data) % READING_SIZE,
            f"length {len(data)} is not a multiple of {READING_SIZE}",
        )
    out = []
    for start in range(0, len(data), READING_SIZE):
        try:
            out.append(decode_reading(data[start:start + READING_SIZE]))
        except MalformedBufferError as exc:
            raise MalformedBufferError(start + exc.offset, str(exc)) from None
    return out


# -- CSV interchange ---------------------------------------------------------

CSV_COLUMNS = ("log_id", "timestamp_iso8601", "log_status", "data_quality",
               "a14", "a23", "r12", "r34")


def write_readings_csv(readings: Iterable[Reading], out: TextIO | str | os.PathLike) -> None:
    """Write readings in the CSV interchange format.

    The clock-status byte is not part of the format; it is dropped.
    """
    if isinstance(out, (str, os.PathLike)):
        with open(out, "w", newline="") as fh:
            write_readings_csv(readings, fh)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in readings:
        w.writerow((r.log_id, r.timestamp.isoformat(), r.log_status, r.data_quality,
                    r.a14, r.a23, r.r12, r.r34))


def iter_readings_csv(src: TextIO) -> Iterator[Reading]:
    rows = csv.DictReader(src)
    missing = set(CSV_COLUMNS) - set(rows.fieldnames or ())
    if missing:
        raise MalformedBufferError(0, f"CSV header lacks columns {sorted(missing)}")
    for line, row in enumerate(rows, start=2):
        try:
            ts = DateTime.from_datetime(_dt.datetime.fromisoformat(row["timestamp_iso8601"]))
            yield Reading(
                log_id=int(row["log_id"]),
                timestamp=ts,
                log_status=int(row["log_status"]),
                data_quality=int(row["data_quality"]),
                a14=int(row["a14"]),
                a23=int(row["a23"]),
                r12=int(row["r12"]),
                r34=int(row["r34"]),
            )
        except ValueError as exc:
            raise MalformedBufferError(line, f"bad CSV row: {exc}") from None


def read_readings_csv(src: TextIO | str | os.PathLike) -> list[Reading]:
    if isinstance(src, (str, os.PathLike)):
        with open(src, newline="") as fh:
            return list(iter_readings_csv(fh))
    return list(iter_readings_csv(src))


def readings_to_csv_text(readings: Iterable[Reading]) -> str:
    buf = io.StringIO()
    write_readings_csv(readings, buf)
    return buf.getvalue()
