"""Stateful pattern-based GD stream compressor.

Both ends keep one array of unique bases per basis length.  A compressed
APDU carries only what the other side cannot already know:

* Section A -- for every basis length in the pattern (ascending): a u16 BE
  count followed by that many new bases, in first-occurrence order.
* Section B -- one index per chunk, in plan order, each ``w`` bits wide
  where ``w = max(1, ceil(log2 N))`` and ``N`` is the class size after
  Section A is applied; MSB-first, zero-padded to a byte.
* Section C -- the deviations, concatenated in plan order.

There is no length or magic inside a payload; framing is the container's job.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import accumulate, repeat
from operator import mul
from typing import BinaryIO, Iterator

from . import transforms
from .errors import CorruptStreamError, StateFormatError
from .pattern import LastByte, Pattern, Token, parse_pattern

STATE_MAGIC = b"GDPS"
CONTAINER_MAGIC = b"GDPC"
FORMAT_VERSION = 1
MAX_NEW_PER_CLASS = 0xFFFF


@dataclass
class BasisClass:
    """Unique bases of one byte length, in insertion order."""

    length: int
    bases: list[bytes] = field(default_factory=list)
    index: dict[bytes, int] = field(default_factory=dict, repr=False, compare=False)

    def add(self, basis: bytes) -> int:
        pos = len(self.bases)
        self.bases.append(basis)
        self.index[basis] = pos
        return pos

    def __len__(self) -> int:
        return len(self.bases)


class _Shape:
    """Per-pattern constants needed on every APDU."""

    __slots__ = ("lengths", "stride", "prefix_size", "prefix_counts", "body_counts",
                 "prefix_dev", "body_dev", "zero_counts")

    def __init__(self, pattern: Pattern) -> None:
        self.lengths = pattern.basis_classes
        pos = {n: i for i, n in enumerate(self.lengths)}
        self.stride = pattern.stride
        self.prefix_size = pattern.prefix_size
        self.prefix_counts = [0] * len(self.lengths)
        self.body_counts = [0] * len(self.lengths)
        for t in pattern.prefix:
            self.prefix_counts[pos[t.basis_size]] += 1
        for t in pattern.body:
            self.body_counts[pos[t.basis_size]] += 1
        self.prefix_dev = sum(t.deviation_size for t in pattern.prefix)
        self.body_dev = sum(t.deviation_size for t in pattern.body)
        self.zero_counts = bytes(2 * len(self.lengths))  # Section A with nothing new


@dataclass
class CompressorState:
    pattern: Pattern
    classes: dict[int, BasisClass]
    chunks_processed: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if sorted(self.classes) != list(self.pattern.basis_classes):
            raise StateFormatError(
                f"classes {sorted(self.classes)} do not match pattern "
                f"{self.pattern.render()}")
        self.classes = {n: self.classes[n] for n in sorted(self.classes)}
        # Bases of different lengths never compare equal, so all classes can
        # share one reverse index.
        shared: dict[bytes, int] = {}
        for c in self.classes.values():
            shared.update(c.index)
            c.index = shared
        self._index = shared
        self._shape = _shape_of(self.pattern)
        self._plans: dict[int, _Plan] = {}

    @classmethod
    def new(cls, pattern: Pattern | str) -> CompressorState:
        if isinstance(pattern, str):
            pattern = parse_pattern(pattern)
        return cls(pattern, {n: BasisClass(n) for n in pattern.basis_classes})

    @property
    def total_bases(self) -> int:
        return sum(len(c) for c in self.classes.values())

    def copy(self) -> CompressorState:
        classes = {}
        for n, c in self.classes.items():
            classes[n] = BasisClass(n, list(c.bases),
                                    {b: i for i, b in enumerate(c.bases)})
        return CompressorState(self.pattern, classes, self.chunks_processed)

    def plan(self, reps: int) -> _Plan:
        plan = self._plans.get(reps)
        if plan is None:
            plan = self._plans[reps] = _plan_of(self.pattern, reps)
        return plan

    def repeats(self, length: int) -> int:
        shape = self._shape
        reps, rem = divmod(length - shape.prefix_size, shape.stride)
        if rem or reps < 1:
            return self.pattern.repeats(length)  # raises CoverageError
        return reps


@dataclass(frozen=True)
class CompressedApdu:
    new_basis_block: bytes
    reconstruction_list: bytes
    deviation_block: bytes
    chunk_count: int = field(default=0, compare=False)
    index_bits: int = field(default=0, compare=False)

    def to_bytes(self) -> bytes:
        return self.new_basis_block + self.reconstruction_list + self.deviation_block

    def __bytes__(self) -> bytes:
        return self.to_bytes()

    def __len__(self) -> int:
        return (len(self.new_basis_block) + len(self.reconstruction_list)
                + len(self.deviation_block))


class _Plan:
    """Chunk layout of one APDU length, precomputed once per repetition count.

    ``steps`` holds ``(start, basis_end, chunk_end, class position, token)``
    per chunk, token being None for LastByte.  When every token is LastByte
    the whole buffer is split by a single struct into alternating basis and
    deviation fields.
    """

    __slots__ = ("steps", "chunk_cls", "split", "devs")

    def __init__(self, tokens: tuple[Token, ...], class_pos: dict[int, int]) -> None:
        steps = []
        offset = 0
        for tok in tokens:
            end = offset + tok.chunk_size
            ci = class_pos[tok.basis_size]
            if isinstance(tok, LastByte):
                steps.append((offset, offset + tok.n, end, ci, None))
            else:
                steps.append((offset, offset, end, ci, tok))
            offset = end
        self.steps = tuple(steps)
        self.chunk_cls = tuple(s[3] for s in steps)
        if all(isinstance(t, LastByte) for t in tokens):
            self.split = struct.Struct("".join(f"{t.n}s{t.k}s" for t in tokens))
            self.devs = struct.Struct("".join(f"{t.k}s" for t in tokens))
        else:
            self.split = self.devs = None


@lru_cache(maxsize=64)
def _shape_of(pattern: Pattern) -> _Shape:
    return _Shape(pattern)


@lru_cache(maxsize=1024)
def _plan_of(pattern: Pattern, reps: int) -> _Plan:
    pos = {n: i for i, n in enumerate(pattern.basis_classes)}
    return _Plan(pattern.prefix + pattern.body * reps, pos)


_BIT_FORMATS = [f"0{w}b" for w in range(65)]


def _index_bits(idx: list[int], chunk_cls: tuple[int, ...], widths: list[int]) -> tuple[bytes, int]:
    """Section B: ``idx`` packed MSB-first with per-class widths, zero-padded."""
    fmts = [_BIT_FORMATS[w] for w in widths]
    bits = "".join(map(format, idx, map(fmts.__getitem__, chunk_cls)))
    nbits = len(bits)
    if not nbits:
        return b"", 0
    pad = -nbits % 8
    return (int(bits, 2) << pad).to_bytes((nbits + pad) // 8, "big"), nbits


def compress_apdu(state: CompressorState, apdu: bytes | bytearray | memoryview) -> CompressedApdu:
    """Compress one APDU buffer and record its new bases in ``state``."""
    data = apdu if type(apdu) is bytes else bytes(apdu)
    plan = state.plan(state.repeats(len(data)))
    classes = list(state.classes.values())
    if plan.split is not None:
        fields = plan.split.unpack(data)
        bases = fields[0::2]
        dev_block = b"".join(fields[1::2])
    else:
        bases = []
        devs = []
        for start, mid, end, ci, tok in plan.steps:
            if tok is None:
                bases.append(data[start:mid])
                devs.append(data[mid:end])
            else:
                basis, dev = transforms.split(tok, data[start:end])
                bases.append(basis)
                devs.append(dev)
        dev_block = b"".join(devs)

    idx = list(map(state._index.get, bases))
    if None not in idx:
        section_a = state._shape.zero_counts
    else:
        section_a = _ingest(state, classes, plan, bases, idx)

    widths = [(len(c.bases) - 1).bit_length() or 1 for c in classes]
    section_b, nbits = _index_bits(idx, plan.chunk_cls, widths)
    state.chunks_processed += len(idx)
    return CompressedApdu(section_a, section_b, dev_block, len(idx), nbits)


def _ingest(state: CompressorState, classes: list[BasisClass], plan: _Plan,
            bases: list[bytes], idx: list[int | None]) -> bytes:
    """Add unseen bases to the state, fill their indexes in, return Section A."""
    new: list[list[bytes]] = [[] for _ in classes]
    lookup = state._index
    for j, i in enumerate(idx):
        if i is None:
            b = bases[j]
            i = lookup.get(b)
            if i is None:
                ci = plan.chunk_cls[j]
                i = classes[ci].add(b)
                new[ci].append(b)
            idx[j] = i

    section_a = bytearray()
    for cls, fresh in zip(classes, new):
        if len(fresh) > MAX_NEW_PER_CLASS:
            raise CorruptStreamError(
                f"{len(fresh)} new {cls.length}-byte bases exceed the per-APDU limit "
                f"of {MAX_NEW_PER_CLASS}")
        section_a += len(fresh).to_bytes(2, "big")
        section_a += b"".join(fresh)
    return bytes(section_a)


@lru_cache(maxsize=4096)
def _solve_repeats(pk: int, bk: int, pb: int, bb: int, remaining: int) -> tuple[int, ...]:
    """All r >= 1 with ``ceil((pb + r*bb) / 8) + pk + r*bk == remaining``."""
    per_rep = bb + 8 * bk
    lo = max(1, (8 * (remaining - pk - 1) - pb) // per_rep)
    hi = (8 * (remaining - pk) - pb) // per_rep
    return tuple(r for r in range(lo, hi + 1)
                 if -(-(pb + r * bb) // 8) + pk + r * bk == remaining)


def _infer_repeats(state: CompressorState, pb: int, bb: int, remaining: int) -> int:
    shape = state._shape
    found = _solve_repeats(shape.prefix_dev, shape.body_dev, pb, bb, remaining)
    if not found:
        raise CorruptStreamError(
            f"payload body of {remaining} bytes matches no whole number of pattern repetitions")
    if len(found) > 1:
        raise CorruptStreamError(
            f"payload length is ambiguous for pattern {state.pattern.render()} "
            f"(could be {found[0]}..{found[-1]} repetitions); pass n_repeats")
    return found[0]


def _read_section_a(data: bytes, classes: list[BasisClass],
                    known: dict[bytes, int]) -> tuple[list[list[bytes]], int]:
    size = len(data)
    pos = 0
    pending = []
    for cls in classes:
        n = cls.length
        if pos + 2 > size:
            raise CorruptStreamError(f"truncated Section A: no count for {n}-byte class")
        count = int.from_bytes(data[pos:pos + 2], "big")
        pos += 2
        end = pos + count * n
        if end > size:
            raise CorruptStreamError(
                f"truncated Section A: {count} new {n}-byte bases need {count * n} bytes")
        fresh = [data[p:p + n] for p in range(pos, end, n)]
        if fresh and (len(set(fresh)) != count or any(b in known for b in fresh)):
            raise CorruptStreamError(f"Section A repeats an already known {n}-byte basis")
        pending.append(fresh)
        pos = end
    return pending, pos


@lru_cache(maxsize=1024)
def _index_slices(chunk_cls: tuple[int, ...], widths: tuple[int, ...]) -> tuple[slice, ...]:
    """Bit ranges of each chunk's index within Section B."""
    ends = list(accumulate(map(widths.__getitem__, chunk_cls)))
    return tuple(map(slice, [0] + ends[:-1], ends))


def decompress_apdu(state: CompressorState, payload: bytes | CompressedApdu,
                    n_repeats: int | None = None) -> bytes:
    """Rebuild one APDU buffer and apply its new bases to ``state``.

    ``state`` must mirror the compressor's state from before this APDU.  The
    number of body repetitions is inferred from the payload length unless
    given; it is only ambiguous for patterns whose body has no deviation bytes.
    State is left untouched if the payload is rejected.
    """
    data = payload if type(payload) is bytes else bytes(payload)
    classes = list(state.classes.values())
    shape = state._shape
    size = len(data)
    known = state._index
    old_sizes = [len(c.bases) for c in classes]
    if data.startswith(shape.zero_counts):
        pending = None
        pos = len(shape.zero_counts)
        sizes = old_sizes
    else:
        pending, pos = _read_section_a(data, classes, known)
        sizes = [o + len(f) for o, f in zip(old_sizes, pending)]
    widths = [(s - 1).bit_length() or 1 for s in sizes]
    pb = sum(map(mul, shape.prefix_counts, widths))
    bb = sum(map(mul, shape.body_counts, widths))
    if n_repeats is None:
        n_repeats = _infer_repeats(state, pb, bb, size - pos)
    plan = state.plan(n_repeats)

    nbits = pb + n_repeats * bb
    b_len = -(-nbits // 8)
    dev_len = shape.prefix_dev + n_repeats * shape.body_dev
    if size - pos != b_len + dev_len:
        raise CorruptStreamError(
            f"payload has {size - pos} bytes after Section A, expected {b_len + dev_len}")
    acc = int.from_bytes(data[pos:pos + b_len], "big")
    pad = b_len * 8 - nbits
    if acc & ((1 << pad) - 1):
        raise CorruptStreamError("non-zero padding in Section B")
    bits = format(acc >> pad, f"0{nbits}b")
    chunk_cls = plan.chunk_cls
    idx = list(map(int, map(bits.__getitem__, _index_slices(chunk_cls, tuple(widths))),
                   repeat(2)))
    dpos = pos + b_len

    # Provisionally extend the class arrays so one lookup covers old and new
    # bases; any failure rolls them back to keep the state untouched.
    if pending:
        for cls, fresh in zip(classes, pending):
            cls.bases.extend(fresh)
    try:
        tables = [c.bases for c in classes]
        bases = list(map(list.__getitem__, map(tables.__getitem__, chunk_cls), idx))
        if plan.devs is not None:
            parts = [b""] * (2 * len(bases))
            parts[0::2] = bases
            parts[1::2] = plan.devs.unpack_from(data, dpos)
            out = b"".join(parts)
        else:
            pieces = []
            for (start, mid, end, ci, tok), basis in zip(plan.steps, bases):
                if tok is None:
                    k = end - mid
                    pieces.append(basis)
                    pieces.append(data[dpos:dpos + k])
                    dpos += k
                else:
                    pieces.append(transforms.merge(tok, basis, data[dpos:dpos + 1]))
                    dpos += 1
            out = b"".join(pieces)
    except IndexError:
        for cls, old in zip(classes, old_sizes):
            del cls.bases[old:]
        j = next(j for j, (i, ci) in enumerate(zip(idx, chunk_cls)) if i >= sizes[ci])
        ci = chunk_cls[j]
        raise CorruptStreamError(
            f"index {idx[j]} out of range for {classes[ci].length}-byte class of size "
            f"{sizes[ci]} (chunk at offset {plan.steps[j][0]})") from None
    except BaseException:
        for cls, old in zip(classes, old_sizes):
            del cls.bases[old:]
        raise

    if pending:
        for old, fresh in zip(old_sizes, pending):
            for i, b in enumerate(fresh, start=old):
                known[b] = i
    state.chunks_processed += len(idx)
    return out


# -- persistence -------------------------------------------------------------

def _pack_pattern(pattern: Pattern) -> bytes:
    text = pattern.render().encode("utf-8")
    return struct.pack(">H", len(text)) + text


def _read_exact(fh: BinaryIO, n: int, what: str, exc: type[Exception] = StateFormatError) -> bytes:
    b = fh.read(n)
    if len(b) != n:
        raise exc(f"truncated {what}: wanted {n} bytes, got {len(b)}")
    return b


def _read_pattern(fh: BinaryIO, exc: type[Exception] = StateFormatError) -> Pattern:
    (length,) = struct.unpack(">H", _read_exact(fh, 2, "pattern length", exc))
    text = _read_exact(fh, length, "pattern string", exc).decode("utf-8")
    return parse_pattern(text)


def save_state(state: CompressorState) -> bytes:
    """Serialize a state: ``GDPS`` v1, pattern, then every basis class.

    Every class of the pattern is written, empty or not, so the file size is
    a fixed header plus the raw basis bytes (see :func:`state_size_bytes`).
    """
    out = bytearray(STATE_MAGIC)
    out.append(FORMAT_VERSION)
    out += _pack_pattern(state.pattern)
    out.append(len(state.classes))
    for n in sorted(state.classes):
        cls = state.classes[n]
        out += struct.pack(">HI", n, len(cls))
        out += b"".join(cls.bases)
    return bytes(out)


def load_state(data: bytes) -> CompressorState:
    fh = io.BytesIO(data)
    magic = fh.read(4)
    if magic != STATE_MAGIC:
        raise StateFormatError(f"not a state file (magic {magic!r})")
    version = _read_exact(fh, 1, "version")[0]
    if version != FORMAT_VERSION:
        raise StateFormatError(f"unsupported state version {version}")
    state = CompressorState.new(_read_pattern(fh))
    n_classes = _read_exact(fh, 1, "class count")[0]
    lengths = []
    for _ in range(n_classes):
        n, count = struct.unpack(">HI", _read_exact(fh, 6, "class header"))
        if n not in state.classes:
            raise StateFormatError(
                f"state has a {n}-byte class that pattern {state.pattern} does not use")
        raw = _read_exact(fh, n * count, f"{n}-byte class")
        cls = state.classes[n]
        for p in range(0, len(raw), n):
            b = raw[p:p + n]
            if b in cls.index:
                raise StateFormatError(f"duplicate basis in {n}-byte class")
            cls.add(b)
        lengths.append(n)
    if sorted(lengths) != sorted(state.classes):
        raise StateFormatError(
            f"state classes {sorted(lengths)} do not match pattern classes "
            f"{sorted(state.classes)}")
    if fh.read(1):
        raise StateFormatError("trailing bytes after state data")
    return state


def state_size_bytes(state: CompressorState) -> int:
    """Bytes needed to persist ``state``.

    ``4 + 1 + 2 + len(pattern) + 1 + 6 * classes`` of bookkeeping plus the
    sum of ``count * length`` over classes; equals ``len(save_state(state))``.
    """
    overhead = 4 + 1 + 2 + len(state.pattern.render().encode()) + 1 + 6 * len(state.classes)
    return overhead + sum(n * len(c) for n, c in state.classes.items())


# -- stream container ----------------------------------------------------------

def container_header(pattern: Pattern) -> bytes:
    return CONTAINER_MAGIC + bytes((FORMAT_VERSION,)) + _pack_pattern(pattern)


def frame(payload: bytes | CompressedApdu) -> bytes:
    payload = bytes(payload)
    return struct.pack(">I", len(payload)) + payload


def read_container_header(fh: BinaryIO) -> Pattern:
    magic = fh.read(4)
    if magic != CONTAINER_MAGIC:
        raise StateFormatError(f"not a stream container (magic {magic!r})")
    version = _read_exact(fh, 1, "version")[0]
    if version != FORMAT_VERSION:
        raise StateFormatError(f"unsupported container version {version}")
    return _read_pattern(fh)


def iter_frames(fh: BinaryIO) -> Iterator[bytes]:
    """Yield frame payloads; a truncated frame raises with its index."""
    index = 0
    while True:
        head = fh.read(4)
        if not head:
            return
        if len(head) < 4:
            raise CorruptStreamError(f"frame {index}: truncated length field")
        (length,) = struct.unpack(">I", head)
        payload = fh.read(length)
        if len(payload) != length:
            raise CorruptStreamError(
                f"frame {index}: truncated payload ({len(payload)} of {length} bytes)")
        yield payload
        index += 1


def read_container(data: bytes) -> tuple[Pattern, list[bytes]]:
    fh = io.BytesIO(data)
    pattern = read_container_header(fh)
    return pattern, list(iter_frames(fh))
