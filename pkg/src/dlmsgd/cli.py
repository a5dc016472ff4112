"""Command-line entry point: ``dlmsgd <command> ...``."""

from __future__ import annotations

import argparse
import datetime as _dt
import glob
import logging
import os
import sys
import tempfile
from typing import Sequence

from . import bench, stream
from .baselines import (
    BaselineKind,
    StatConfig,
    baseline_compressor,
    baseline_decompress,
    keep_lzma_buffers_in_heap,
)
from .config import load_config
from .dlms import DateTime, decode_apdu, encode_apdu, read_readings_csv, write_readings_csv
from .errors import DlmsGdError, StateFormatError
from .synth import fleet_profiles, generate_stream, READINGS_PER_DAY

log = logging.getLogger("dlmsgd")

PATTERN_HELP = """\
pattern grammar:
  [TOKENS]          body, repeated until the buffer is covered
  TOKENS [TOKENS]   prefix tokens applied once per APDU, then the body
  Lnk / Ln,k        LastByte: n-byte basis, k-byte deviation (comma form
                    when either number has two or more digits, e.g. L16,2)
  Hp                Hamming with p parity bits over a 2^(p-3)-byte chunk
registry ids: #1 #2 #3 #4 #5 auto   (e.g. --pattern '#4')
"""


def atomic_write(path: str, data: bytes) -> None:
    """Write ``data`` to ``path`` through a temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        umask = os.umask(0)
        os.umask(umask)
        os.chmod(tmp, 0o666 & ~umask)
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _read_apdu_input(path: str) -> bytes:
    if path.lower().endswith(".csv"):
        return encode_apdu(read_readings_csv(path)).data
    with open(path, "rb") as fh:
        return fh.read()


def _load_state(path: str) -> stream.CompressorState:
    with open(path, "rb") as fh:
        return stream.load_state(fh.read())


def cmd_gen(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    households = args.households if args.households is not None else int(cfg["gen.households"])
    days = args.days if args.days is not None else int(cfg["gen.days"])
    seed = args.seed if args.seed is not None else int(cfg["gen.seed"])
    start = DateTime.from_datetime(_dt.datetime.fromisoformat(args.start or cfg["gen.start"]))
    os.makedirs(args.out, exist_ok=True)
    profiles = fleet_profiles(households, seed, float(cfg["gen.generation_share"]))
    for i, profile in enumerate(profiles):
        readings = generate_stream(profile, start, days * READINGS_PER_DAY)
        write_readings_csv(readings, os.path.join(args.out, f"household_{i:03d}.csv"))
    print(f"wrote {households} households x {days * READINGS_PER_DAY} readings to {args.out}")
    return 0


def cmd_encode(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    atomic_write(args.out, encode_apdu(read_readings_csv(args.input)).data)
    return 0


def cmd_decode(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    with open(args.input, "rb") as fh:
        readings = decode_apdu(fh.read())
    if args.out == "-":
        write_readings_csv(readings, sys.stdout)
    else:
        write_readings_csv(readings, args.out)
    return 0


def cmd_compress(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    wanted = bench.resolve_pattern(args.pattern) if args.pattern else None
    if os.path.exists(args.state):
        state = _load_state(args.state)
        if wanted is not None and wanted != state.pattern:
            raise StateFormatError(
                f"--pattern {wanted} does not match the state file pattern {state.pattern}")
    elif wanted is None:
        raise StateFormatError(f"state file {args.state} does not exist; give --pattern")
    else:
        state = stream.CompressorState.new(wanted)

    if os.path.exists(args.out) and os.path.getsize(args.out):
        with open(args.out, "rb") as fh:
            container_pattern = stream.read_container_header(fh)
        if container_pattern != state.pattern:
            raise StateFormatError(
                f"container {args.out} uses pattern {container_pattern}, state uses "
                f"{state.pattern}")
        header = b""
    else:
        header = stream.container_header(state.pattern)

    data = _read_apdu_input(args.input)
    if args.header_id:
        data = bytes.fromhex(args.header_id) + data
    payload = stream.compress_apdu(state, data)
    with open(args.out, "ab") as fh:
        fh.write(header + stream.frame(payload))
    atomic_write(args.state, stream.save_state(state))
    log.info("%d -> %d bytes (%d new bases)", len(data), len(payload),
             state.total_bases)
    return 0


def cmd_decompress(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    with open(args.container, "rb") as fh:
        pattern = stream.read_container_header(fh)
        if args.state and os.path.exists(args.state):
            state = _load_state(args.state)
            if state.pattern != pattern:
                raise StateFormatError(
                    f"state pattern {state.pattern} does not match container pattern {pattern}")
        else:
            state = stream.CompressorState.new(pattern)
        out = []
        for index, payload in enumerate(stream.iter_frames(fh)):
            if index < args.start_frame:
                continue
            try:
                out.append(stream.decompress_apdu(state, payload))
            except DlmsGdError as exc:
                raise type(exc)(f"frame {index}: {exc}") from None
    if args.header_len:
        out = [apdu[args.header_len:] for apdu in out]
    atomic_write(args.out, b"".join(out))
    if args.state:
        atomic_write(args.state, stream.save_state(state))
    return 0


def cmd_baseline(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    stat = StatConfig.from_mapping(cfg)
    if args.decompress:
        with open(args.input, "rb") as fh:
            result = baseline_decompress(args.kind, fh.read(), args.period, stat)
    else:
        data = _read_apdu_input(args.input)
        readings = decode_apdu(data) if BaselineKind(args.kind) in (
            BaselineKind.NULL_DATA, BaselineKind.DELTA_ARRAY) else []
        result = baseline_compressor(args.kind, args.period, stat)(readings, data)
    atomic_write(args.out, result)
    return 0


def cmd_bench(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    files = sorted(glob.glob(os.path.join(args.dataset, "*.csv")))
    if not files:
        raise DlmsGdError(f"no CSV files in {args.dataset}")
    dataset = [read_readings_csv(f) for f in files]
    sizes = tuple(int(s) for s in args.sizes.split(","))
    specs = bench.parse_compressors(args.compressors.split(","), args.pattern)
    period = args.period if args.period is not None else int(cfg["bench.period"])
    header_id = bytes.fromhex(cfg["bench.header_id"])
    report = bench.run_grid(dataset, specs, sizes, args.header_mode, period,
                            StatConfig.from_mapping(cfg), header_id, verify=args.verify)
    report.write(args.out)
    growth_ids = [p for p in args.state_patterns.split(",") if p] if args.state_patterns else []
    if not growth_ids:
        growth_ids = [args.pattern]
    growth = {pid: bench.track_state_growth(
                  dataset, pid, 1, header_id if args.header_mode == "id4" else b"")
              for pid in growth_ids}
    bench.write_state_growth(os.path.join(args.out, "state_growth.csv"), growth)
    if args.plots:
        bench.plot_report(report, args.out)
    for spec in specs:
        gains = " ".join(f"{report.mean_gain(spec.label, s):6.3f}" for s in sizes)
        print(f"{spec.label:<10} {gains}")
    return 0


def cmd_state_inspect(args: argparse.Namespace, cfg: dict[str, str]) -> int:
    state = _load_state(args.file)
    print(f"pattern: {state.pattern}")
    print(f"{'class':>6} {'count':>8} {'bytes':>10}")
    total_count = total_bytes = 0
    for n, cls in state.classes.items():
        if not len(cls):
            continue
        print(f"{n:>6} {len(cls):>8} {n * len(cls):>10}")
        total_count += len(cls)
        total_bytes += n * len(cls)
    print(f"{'total':>6} {total_count:>8} {total_bytes:>10}")
    print(f"state_bytes: {stream.state_size_bytes(state)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="dlmsgd",
        description="Pattern-based generalized deduplication for DLMS meter readings.",
        epilog=PATTERN_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    p.add_argument("--config", help="key = value file overriding packaged defaults")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic fleet as CSV files")
    g.add_argument("--households", type=int)
    g.add_argument("--days", type=int)
    g.add_argument("--seed", type=int)
    g.add_argument("--start", help="ISO 8601 start time")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("encode", help="CSV readings -> raw APDU data buffer")
    e.add_argument("--input", required=True)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_encode)

    d = sub.add_parser("decode", help="raw APDU data buffer -> CSV readings")
    d.add_argument("--input", required=True)
    d.add_argument("--out", default="-")
    d.set_defaults(func=cmd_decode)

    fmt = argparse.RawDescriptionHelpFormatter
    c = sub.add_parser("compress", help="compress one APDU into a stream container",
                       epilog=PATTERN_HELP, formatter_class=fmt)
    c.add_argument("--input", required=True, help="APDU binary or readings CSV")
    c.add_argument("--state", required=True, help="compressor state file (created if missing)")
    c.add_argument("--pattern", help="pattern string or registry id")
    c.add_argument("--header-id", help="hex bytes prepended to the APDU (pattern needs a prefix)")
    c.add_argument("--out", required=True, help="stream container to append to")
    c.set_defaults(func=cmd_compress)

    x = sub.add_parser("decompress", help="decompress the frames of a stream container")
    x.add_argument("--container", required=True)
    x.add_argument("--state", help="decompressor state file (created/updated)")
    x.add_argument("--start-frame", type=int, default=0,
                   help="skip frames already applied to --state")
    x.add_argument("--header-len", type=int, default=0, help="strip this many header bytes")
    x.add_argument("--out", required=True)
    x.set_defaults(func=cmd_decompress)

    b = sub.add_parser("baseline", help="run a DLMS baseline compressor on one APDU")
    b.add_argument("--kind", required=True, choices=["null", "delta", "stat"])
    b.add_argument("--input", required=True)
    b.add_argument("--out", required=True)
    b.add_argument("--period", type=int, default=15, help="load profile period in minutes")
    b.add_argument("--decompress", action="store_true")
    b.set_defaults(func=cmd_baseline)

    r = sub.add_parser("bench", help="run the compression benchmark grid",
                       epilog=PATTERN_HELP, formatter_class=fmt)
    r.add_argument("--dataset", required=True, help="directory of household CSV files")
    r.add_argument("--compressors", default="gdp,null,delta,stat",
                   help="comma list; gdp, gdp:#3, gdp:auto, null, delta, stat")
    r.add_argument("--pattern", default="#4", help="pattern for plain 'gdp'")
    r.add_argument("--sizes", default=",".join(map(str, bench.SIZES)))
    r.add_argument("--header-mode", choices=["none", "id4"], default="none")
    r.add_argument("--period", type=int)
    r.add_argument("--state-patterns", help="comma list of patterns for state_growth.csv")
    r.add_argument("--verify", action="store_true", help="also roundtrip every GD APDU")
    r.add_argument("--plots", action="store_true", help="write SVG charts (needs matplotlib)")
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_bench)

    s = sub.add_parser("state", help="state file utilities")
    ssub = s.add_subparsers(dest="state_command", required=True)
    si = ssub.add_parser("inspect", help="print per-class basis counts")
    si.add_argument("file")
    si.set_defaults(func=cmd_state_inspect)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    keep_lzma_buffers_in_heap()
    try:
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (DlmsGdError, OSError, ValueError) as exc:
        print(f"dlmsgd: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
