"""Pattern strings: which GD transform to apply to which bytes of an APDU.

A pattern is an optional run of prefix tokens followed by a bracketed body
that is repeated until the buffer is covered::

    [L52 L72 L16,2 L91 L41]
    L40 [L52 L72 L16,2 L91 L41]
    [H5 H6]

``Ln,k`` (or ``Lnk`` when both are single digits) is a LastByte transform
with an n-byte basis and k-byte deviation.  ``Hp`` is a Hamming transform
with p parity bits over a 2**(p-3)-byte chunk.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .errors import CoverageError, PatternError

HAMMING_PARITY_RANGE = range(4, 8)


@dataclass(frozen=True, slots=True)
class LastByte:
    n: int
    k: int

    def __post_init__(self) -> None:
        if self.n < 1 or self.k < 0:
            raise PatternError(f"LastByte needs n >= 1 and k >= 0, got n={self.n} k={self.k}")

    @property
    def chunk_size(self) -> int:
        return self.n + self.k

    @property
    def basis_size(self) -> int:
        return self.n

    @property
    def deviation_size(self) -> int:
        return self.k

    def render(self) -> str:
        if self.n < 10 and self.k < 10:
            return f"L{self.n}{self.k}"
        return f"L{self.n},{self.k}"


@dataclass(frozen=True, slots=True)
class Hamming:
    p: int

    def __post_init__(self) -> None:
        if self.p not in HAMMING_PARITY_RANGE:
            raise PatternError(
                f"unsupported Hamming parameter H{self.p}: parity bits must be in 4..7")

    @property
    def chunk_size(self) -> int:
        return 1 << (self.p - 3)

    @property
    def basis_size(self) -> int:
        # data bits of the (2^p - 1)-bit codeword plus the spare bit
        return -(-((1 << self.p) - self.p) // 8)

    @property
    def deviation_size(self) -> int:
        return 1

    def render(self) -> str:
        return f"H{self.p}"


Token = Union[LastByte, Hamming]


@dataclass(frozen=True, slots=True)
class Pattern:
    prefix: tuple[Token, ...]
    body: tuple[Token, ...]

    def __post_init__(self) -> None:
        if not self.body:
            raise PatternError("pattern body must contain at least one token")

    @property
    def stride(self) -> int:
        return sum(t.chunk_size for t in self.body)

    @property
    def prefix_size(self) -> int:
        return sum(t.chunk_size for t in self.prefix)

    @property
    def basis_classes(self) -> tuple[int, ...]:
        """Distinct basis lengths used anywhere in the pattern, ascending."""
        return tuple(sorted({t.basis_size for t in self.prefix + self.body}))

    def render(self) -> str:
        body = "[" + " ".join(t.render() for t in self.body) + "]"
        if self.prefix:
            return " ".join(t.render() for t in self.prefix) + " " + body
        return body

    def __str__(self) -> str:
        return self.render()

    def repeats(self, buffer_len: int, include_prefix: bool = True) -> int:
        """Number of body repetitions needed to tile ``buffer_len`` bytes."""
        consumed = self.prefix_size if include_prefix else 0
        remaining = buffer_len - consumed
        if remaining <= 0:
            raise CoverageError(
                self.stride, remaining, buffer_len,
                f"nothing left for the body after a {consumed}-byte prefix")
        reps, rem = divmod(remaining, self.stride)
        if rem:
            raise CoverageError(self.stride, rem, buffer_len)
        return reps


_LEXEME = re.compile(r"\s*(?:(\[)|(\])|([A-Za-z][0-9,]*))")
_LB_COMMA = re.compile(r"L(\d+),(\d+)")
_LB_PAIR = re.compile(r"L(\d)(\d)")
_HAMMING = re.compile(r"H(\d+)")


def parse_token(text: str) -> Token:
    if m := _LB_COMMA.fullmatch(text):
        return LastByte(int(m[1]), int(m[2]))
    if m := _LB_PAIR.fullmatch(text):
        return LastByte(int(m[1]), int(m[2]))
    if m := _HAMMING.fullmatch(text):
        return Hamming(int(m[1]))
    if re.fullmatch(r"L\d{3,}", text):
        raise PatternError(
            f"ambiguous token {text!r}: use the comma form Ln,k for multi-digit parameters")
    if text[:1] in ("L", "H"):
        raise PatternError(f"malformed token {text!r}")
    raise PatternError(f"unknown transform {text[:1]!r} in token {text!r}")


def parse_pattern(s: str) -> Pattern:
    prefix: list[Token] = []
    body: list[Token] = []
    state = "prefix"  # prefix -> body -> done
    pos = 0
    text = s.rstrip()
    while pos < len(text):
        m = _LEXEME.match(text, pos)
        if not m:
            raise PatternError(f"unexpected character {text[pos:].lstrip()[:1]!r} "
                               f"at position {pos} in {s!r}")
        pos = m.end()
        if m[1]:
            if state != "prefix":
                raise PatternError(f"nested or repeated '[' in {s!r}")
            state = "body"
        elif m[2]:
            if state != "body":
                raise PatternError(f"unbalanced ']' in {s!r}")
            state = "done"
        else:
            if state == "done":
                raise PatternError(f"tokens after the closing ']' in {s!r}")
            (body if state == "body" else prefix).append(parse_token(m[3]))
    if state != "done":
        raise PatternError(f"pattern {s!r} needs a bracketed body, e.g. '[L41 L32]'")
    if not body:
        raise PatternError(f"empty pattern body in {s!r}")
    return Pattern(tuple(prefix), tuple(body))


@dataclass(frozen=True, slots=True)
class Chunk:
    offset: int
    token: Token

    @property
    def end(self) -> int:
        return self.offset + self.token.chunk_size


def plan_chunks(p: Pattern, buffer_len: int, include_prefix: bool = True) -> tuple[Chunk, ...]:
    """Lay the pattern over ``buffer_len`` bytes; the chunks tile the buffer exactly."""
    reps = p.repeats(buffer_len, include_prefix)
    tokens = (p.prefix if include_prefix else ()) + p.body * reps
    plan = []
    offset = 0
    for tok in tokens:
        plan.append(Chunk(offset, tok))
        offset += tok.chunk_size
    return tuple(plan)
