"""Compression benchmark over a fleet of reading streams.

Gains are ``1 - compressed / original`` computed per household over the
whole stream and then averaged across households.  For the GD stream
compressor the first (transient) APDU of each stream is left out of the
gain; totals always include it.
"""

from __future__ import annotations

import csv
import logging
import os
import statistics
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .baselines import DEFAULT_STAT, BaselineKind, StatConfig, baseline_compressor
from .dlms import Reading, encode_reading
from .errors import PatternError
from .pattern import LastByte, Pattern, Token, parse_pattern
from .stream import CompressorState, compress_apdu, decompress_apdu, state_size_bytes
from .synth import READINGS_PER_DAY

log = logging.getLogger(__name__)

SIZES = (1, 2, 4, 12, 24, 48, 96)
UPLOAD_PERIODS = {1: "15min", 2: "30min", 4: "1h", 12: "3h", 24: "6h", 48: "12h", 96: "24h"}
DEFAULT_HEADER_ID = bytes.fromhex("4C500001")


@dataclass(frozen=True)
class PatternRegistryEntry:
    id: str
    pattern: str
    note: str

    @property
    def parsed(self) -> Pattern:
        return parse_pattern(self.pattern)


# Patterns reconstructed from their prose descriptions; every body covers
# exactly one 49-byte reading.
REGISTRY: dict[str, PatternRegistryEntry] = {e.id: e for e in (
    PatternRegistryEntry(
        "#1", "[L52 L72 L16,2 L41 L41 L41]",
        "0208 header + log id with 2-byte deviation; hour/minute deviation; "
        "rest of timestamp, bitmaps and A14 with 2-byte deviation; A23, R12, R34 "
        "with 1-byte deviation"),
    PatternRegistryEntry(
        "#2", "[L52 L54 L16,2 L41 L41 L41]",
        "as #1 but day and weekday bytes join the timestamp deviation"),
    PatternRegistryEntry(
        "#3", "[L52 L72 L16,2 L91 L41]",
        "as #1 but A23 is assumed constant and merged into the R12 basis"),
    PatternRegistryEntry(
        "#4", "[L61 L72 L16,2 L91 L41]",
        "as #3 with a 1-byte log id deviation"),
    PatternRegistryEntry(
        "#5", "[L61 L72 L17,1 L91 L41]",
        "as #4 with a 1-byte A14 deviation"),
    PatternRegistryEntry(
        "auto", "[L20 L41 L72 L50 L21 L41 L32 L41 L41 L41]",
        "one chunk per field, generated by auto_pattern(LOAD_PROFILE_SCHEMA)"),
)}


def resolve_pattern(spec: str) -> Pattern:
    """Accept a registry id (``#4``, ``4``, ``auto``) or a literal pattern string."""
    key = spec.strip()
    if key.isdigit():
        key = "#" + key
    if key in REGISTRY:
        return REGISTRY[key].parsed
    return parse_pattern(spec)


def with_header_prefix(p: Pattern, header_len: int = 4) -> Pattern:
    """Prefix the pattern with one all-basis chunk covering the header id."""
    return Pattern((LastByte(header_len, 0),) + p.prefix, p.body)


# -- automatic pattern generation ---------------------------------------------

@dataclass(frozen=True)
class FieldSpec:
    """One encoded element of a load-profile entry.

    ``size`` counts the tag bytes too.  ``varying_bytes`` is how many trailing
    value bytes are expected to change from reading to reading.
    """

    name: str
    kind: str
    size: int
    varying_bytes: int = 1


LOAD_PROFILE_SCHEMA: tuple[FieldSpec, ...] = (
    FieldSpec("structure", "structure", 2, 0),
    FieldSpec("log_id", "unsigned", 5),
    FieldSpec("timestamp", "date-time", 14),
    FieldSpec("log_status", "bitmap", 3),
    FieldSpec("data_quality", "bitmap", 5),
    FieldSpec("a14", "unsigned", 5, 2),
    FieldSpec("a23", "unsigned", 5),
    FieldSpec("r12", "unsigned", 5),
    FieldSpec("r34", "unsigned", 5),
)

_TRAILING_KINDS = ("unsigned", "bitmap")


def auto_pattern(schema: Sequence[FieldSpec]) -> Pattern:
    """Derive a pattern with one chunk per field from a load-profile schema.

    Big-endian unsigned values and bitmaps put their varying bytes last, so
    they become ``L(size-v),v``.  A date-time (``09 0C`` + 12 bytes) is split
    so hour and minute form the deviation of the first chunk.
    """
    if not schema:
        raise PatternError("empty schema")
    tokens: list[Token] = []
    bad = []
    for f in schema:
        if f.kind == "structure":
            tokens.append(LastByte(f.size, 0))
        elif f.kind in _TRAILING_KINDS and 0 <= f.varying_bytes < f.size:
            tokens.append(LastByte(f.size - f.varying_bytes, f.varying_bytes))
        elif f.kind == "date-time" and f.size == 14:
            tokens += [LastByte(7, 2), LastByte(5, 0)]
        else:
            bad.append(f.name)
    if bad:
        raise PatternError(
            f"fields whose varying bytes are not trailing big-endian bytes: {', '.join(bad)}")
    p = Pattern((), tuple(tokens))
    assert p.stride == sum(f.size for f in schema)
    return p


# -- grid ---------------------------------------------------------------------

@dataclass(frozen=True)
class CompressorSpec:
    label: str
    kind: str  # "gdp" or a BaselineKind value
    pattern: Pattern | None = None


def parse_compressors(names: Iterable[str], default_pattern: str = "#4") -> list[CompressorSpec]:
    """``gdp`` uses ``default_pattern``; ``gdp:#3`` or ``gdp:[L41 L32]`` pick one."""
    specs = []
    for name in names:
        name = name.strip()
        if name == "gdp" or name.startswith("gdp:"):
            pat_spec = name[4:] if name.startswith("gdp:") else default_pattern
            label = "gdp" + (pat_spec if pat_spec.startswith("#") else ":" + pat_spec)
            specs.append(CompressorSpec(label, "gdp", resolve_pattern(pat_spec)))
        else:
            specs.append(CompressorSpec(name, BaselineKind(name).value))
    return specs


@dataclass
class BenchReport:
    header_mode: str
    sizes: tuple[int, ...]
    labels: list[str]
    gains: dict[tuple[str, int], list[float]] = field(default_factory=dict)
    series: dict[tuple[str, int], list[list[float]]] = field(default_factory=dict)
    totals: dict[tuple[str, int], list[int]] = field(default_factory=dict)
    state_sizes: dict[tuple[str, int], list[int]] = field(default_factory=dict)

    def mean_gain(self, label: str, size: int) -> float:
        return statistics.fmean(self.gains[label, size])

    def std_gain(self, label: str, size: int) -> float:
        return statistics.pstdev(self.gains[label, size])

    def mean_series(self, label: str, size: int) -> list[float]:
        """Per-APDU gain averaged across households, APDU by APDU."""
        rows = self.series[label, size]
        return [statistics.fmean(col) for col in zip(*rows)]

    def mean_total(self, label: str, size: int) -> float:
        return statistics.fmean(self.totals[label, size])

    def write(self, out_dir: str | os.PathLike) -> None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "gains.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("compressor", "size", "mean_gain", "std"))
            for label in self.labels:
                for s in self.sizes:
                    w.writerow((label, s, f"{self.mean_gain(label, s):.6f}",
                                f"{self.std_gain(label, s):.6f}"))
        with open(os.path.join(out_dir, "totals.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("compressor", "size", "mean_total_bytes"))
            for label in ["none"] + [lb for lb in self.labels if lb != "none"]:
                for s in self.sizes:
                    if (label, s) in self.totals:
                        w.writerow((label, s, f"{self.mean_total(label, s):.1f}"))


def _split(stream: Sequence, size: int) -> int:
    n = len(stream) // size
    if n * size != len(stream):
        log.warning("dropping %d trailing readings that do not fill a %d-reading APDU",
                    len(stream) - n * size, size)
    return n


def run_grid(dataset: Sequence[Sequence[Reading]],
             compressors: Sequence[CompressorSpec] | Sequence[str] = ("gdp", "null", "delta", "stat"),
             sizes: Sequence[int] = SIZES,
             header_mode: str = "none",
             period: int = 15,
             stat: StatConfig = DEFAULT_STAT,
             header_id: bytes = DEFAULT_HEADER_ID,
             verify: bool = False) -> BenchReport:
    """Compress every household stream at every APDU size with every compressor.

    ``header_mode="id4"`` prepends a 4-byte header id to each APDU: baselines
    send it verbatim, the GD compressor treats it as an extra prefix chunk.
    """
    if header_mode not in ("none", "id4"):
        raise ValueError("header_mode must be 'none' or 'id4'")
    specs = [c if isinstance(c, CompressorSpec) else parse_compressors([c])[0]
             for c in compressors]
    hdr = header_id if header_mode == "id4" else b""
    report = BenchReport(header_mode, tuple(sizes), [s.label for s in specs])

    for stream in dataset:
        encoded = [encode_reading(r) for r in stream]
        for size in sizes:
            n_apdus = _split(stream, size)
            apdus = [b"".join(encoded[i * size:(i + 1) * size]) for i in range(n_apdus)]
            originals = [len(hdr) + len(a) for a in apdus]
            report.totals.setdefault(("none", size), []).append(sum(originals))
            for spec in specs:
                comp = _run_one(spec, stream, apdus, size, hdr, period, stat, verify, report)
                per_apdu = [1 - c / o for c, o in zip(comp, originals)]
                skip = 1 if spec.kind == "gdp" and len(comp) > 1 else 0
                gain = 1 - sum(comp[skip:]) / sum(originals[skip:])
                report.gains.setdefault((spec.label, size), []).append(gain)
                report.series.setdefault((spec.label, size), []).append(per_apdu)
                report.totals.setdefault((spec.label, size), []).append(sum(comp))
    return report


def _run_one(spec: CompressorSpec, stream: Sequence[Reading], apdus: list[bytes], size: int,
             hdr: bytes, period: int, stat: StatConfig, verify: bool,
             report: BenchReport) -> list[int]:
    if spec.kind == "gdp":
        assert spec.pattern is not None
        pattern = with_header_prefix(spec.pattern, len(hdr)) if hdr else spec.pattern
        state = CompressorState.new(pattern)
        mirror = CompressorState.new(pattern) if verify else None
        sizes = []
        for apdu in apdus:
            buf = hdr + apdu
            payload = compress_apdu(state, buf).to_bytes()
            if mirror is not None and decompress_apdu(mirror, payload) != buf:
                raise AssertionError(f"{spec.label} roundtrip failed at size {size}")
            sizes.append(len(payload))
        report.state_sizes.setdefault((spec.label, size), []).append(state_size_bytes(state))
        return sizes
    fn = baseline_compressor(spec.kind, period, stat)
    return [len(hdr) + len(fn(stream[i * size:(i + 1) * size], apdu))
            for i, apdu in enumerate(apdus)]


def track_state_growth(dataset: Sequence[Sequence[Reading]], pattern: Pattern | str,
                       size: int = 1, header_id: bytes = b"") -> list[list[int]]:
    """State size in bytes after each simulated day, one series per household."""
    if isinstance(pattern, str):
        pattern = resolve_pattern(pattern)
    if READINGS_PER_DAY % size:
        raise ValueError(f"APDU size {size} does not divide a day of {READINGS_PER_DAY} readings")
    if header_id:
        pattern = with_header_prefix(pattern, len(header_id))
    per_day = READINGS_PER_DAY // size
    out = []
    for stream in dataset:
        encoded = [encode_reading(r) for r in stream]
        state = CompressorState.new(pattern)
        series = []
        for i in range(_split(stream, size)):
            compress_apdu(state, header_id + b"".join(encoded[i * size:(i + 1) * size]))
            if (i + 1) % per_day == 0:
                series.append(state_size_bytes(state))
        out.append(series)
    return out


def write_state_growth(path: str | os.PathLike, growth: dict[str, list[list[int]]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("household", "day", "pattern", "state_bytes"))
        for pat_id, per_household in growth.items():
            for h, series in enumerate(per_household):
                for day, nbytes in enumerate(series, start=1):
                    w.writerow((h, day, pat_id, nbytes))


def plot_report(report: BenchReport, out_dir: str | os.PathLike) -> list[str]:
    """Write gain and total-size charts as SVG (needs matplotlib)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    written = []
    xs = [UPLOAD_PERIODS.get(s, str(s)) for s in report.sizes]
    fig, ax = plt.subplots(figsize=(7, 4))
    for label in report.labels:
        ax.plot(xs, [100 * report.mean_gain(label, s) for s in report.sizes],
                marker="o", label=label)
    ax.set_xlabel("upload period")
    ax.set_ylabel("compression gain [%]")
    ax.legend()
    path = os.path.join(out_dir, "gains.svg")
    fig.savefig(path)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(7, 4))
    for label in ["none"] + report.labels:
        ax.plot(xs, [report.mean_total(label, s) / 1000 for s in report.sizes],
                marker="o", label=label)
    ax.set_xlabel("upload period")
    ax.set_ylabel("total uploaded per meter [kB]")
    ax.legend()
    path = os.path.join(out_dir, "totals.svg")
    fig.savefig(path)
    plt.close(fig)
    written.append(path)
    return written
