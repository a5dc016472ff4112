import io
import random

import pytest

from dlmsgd.dlms import encode_apdu
from dlmsgd.errors import CorruptStreamError, CoverageError, StateFormatError
from dlmsgd.pattern import parse_pattern
from dlmsgd.stream import (
    CompressorState,
    compress_apdu,
    container_header,
    decompress_apdu,
    frame,
    iter_frames,
    load_state,
    read_container,
    save_state,
    state_size_bytes,
)

from conftest import make_reading
from oracles import empty_known, wire_size

TWO_CLASS = "[L41 L32]"
A1, A2 = b"AAAA", b"aaaa"
B1, B2 = b"BBB", b"bbb"


def two_class_reading(a, d1, b, d2):
    return a + bytes([d1]) + b + d2.to_bytes(2, "big")


def test_two_class_scenario_bytes():
    comp = CompressorState.new(TWO_CLASS)
    first = compress_apdu(comp, two_class_reading(A1, 1, B1, 2) + two_class_reading(A2, 3, B2, 4))
    # classes ascending: 3-byte then 4-byte; indexes 0,0,1,1 in 1 bit each
    assert first.new_basis_block == b"\x00\x02BBBbbb\x00\x02AAAAaaaa"
    assert first.reconstruction_list == bytes([0b00110000])
    assert first.deviation_block == bytes([1, 0, 2, 3, 0, 4])

    second = compress_apdu(comp, two_class_reading(A1, 5, B2, 6) + two_class_reading(A2, 7, B1, 8))
    assert second.new_basis_block == b"\x00\x00\x00\x00"
    assert second.index_bits == 4
    assert second.reconstruction_list == bytes([0b01100000])
    assert second.deviation_block == bytes([5, 0, 6, 7, 0, 8])
    assert len(second) == 4 + 1 + 6

    dec = CompressorState.new(TWO_CLASS)
    assert decompress_apdu(dec, first.to_bytes()) == two_class_reading(A1, 1, B1, 2) + two_class_reading(A2, 3, B2, 4)
    assert decompress_apdu(dec, second.to_bytes()) == two_class_reading(A1, 5, B2, 6) + two_class_reading(A2, 7, B1, 8)
    assert dec.classes[3].bases == [B1, B2] and dec.classes[4].bases == [A1, A2]


def test_repeated_new_basis_sent_once():
    st = CompressorState.new(TWO_CLASS)
    c = compress_apdu(st, two_class_reading(A1, 1, B1, 2) * 3)
    assert c.new_basis_block == b"\x00\x01BBB\x00\x01AAAA"
    assert c.reconstruction_list == b"\x00"


def test_index_width_grows_with_class():
    st = CompressorState.new("[L30]")
    compress_apdu(st, b"abcdef")
    c = compress_apdu(st, b"ghiabc")
    assert c.index_bits == 4  # N = 3 after ingestion -> 2 bits per chunk
    assert c.reconstruction_list == bytes([0b10000000])


def test_pattern_4_steady_state_single_reading():
    p = parse_pattern("[L61 L72 L16,2 L91 L41]")
    st = CompressorState.new(p)
    r0 = make_reading(0)
    compress_apdu(st, encode_apdu([r0]).data)
    # same bases again: 5 zero counts, 5 one-bit indexes, 1+2+2+1+1 deviation bytes
    r1 = make_reading(0, log_id=r0.log_id + 1, a14=r0.a14 + 1)
    c = compress_apdu(st, encode_apdu([r1]).data)
    assert len(c) == 5 * 2 + 1 + 7


def test_size_formula_random_streams():
    rng = random.Random(11)
    for text in ("[L61 L72 L16,2 L91 L41]", "L40 [L41 L32]", "[H5 H4 L21]", "[L30]"):
        p = parse_pattern(text)
        st = CompressorState.new(p)
        known = empty_known(p)
        alphabet = [bytes([rng.randrange(4)]) for _ in range(3)]
        for _ in range(60):
            length = p.prefix_size + p.stride * rng.randrange(1, 5)
            apdu = b"".join(rng.choice(alphabet) for _ in range(length))
            assert len(compress_apdu(st, apdu)) == wire_size(p, known, apdu)


def test_dropped_basis_gives_index_error():
    comp = CompressorState.new("[L21]")
    dec = CompressorState.new("[L21]")
    decompress_apdu(dec, compress_apdu(comp, b"aa1bb2cc3dd4").to_bytes())
    dec.classes[2].bases.pop()
    del dec.classes[2].index[b"dd"]
    payload = compress_apdu(comp, b"dd5").to_bytes()
    with pytest.raises(CorruptStreamError, match="out of range"):
        decompress_apdu(dec, payload)


@pytest.mark.parametrize("cut", [1, 3, 9])
def test_truncated_payload(cut):
    comp = CompressorState.new(TWO_CLASS)
    payload = compress_apdu(comp, two_class_reading(A1, 1, B1, 2)).to_bytes()
    dec = CompressorState.new(TWO_CLASS)
    with pytest.raises(CorruptStreamError):
        decompress_apdu(dec, payload[:-cut])
    assert dec.total_bases == 0  # rejected payloads leave the state alone


def test_duplicate_basis_in_section_a():
    with pytest.raises(CorruptStreamError, match="repeats"):
        decompress_apdu(CompressorState.new("[L30]"), b"\x00\x02aaaaaa\x00")


def test_nonzero_padding_rejected():
    payload = bytearray(compress_apdu(CompressorState.new("[L21]"), b"aa1").to_bytes())
    payload[-2] |= 1
    with pytest.raises(CorruptStreamError, match="padding"):
        decompress_apdu(CompressorState.new("[L21]"), bytes(payload))


def test_no_deviation_pattern_needs_repeat_count():
    comp = CompressorState.new("[L30]")
    payload = compress_apdu(comp, b"aaa" * 5).to_bytes()
    with pytest.raises(CorruptStreamError, match="ambiguous"):
        decompress_apdu(CompressorState.new("[L30]"), payload)
    assert decompress_apdu(CompressorState.new("[L30]"), payload, n_repeats=5) == b"aaa" * 5


def test_coverage_error_propagates():
    with pytest.raises(CoverageError):
        compress_apdu(CompressorState.new(TWO_CLASS), b"x" * 14)


def test_partition_invariance_and_roundtrip():
    rs = [make_reading(i, a14=50_000 + 37 * i * i) for i in range(48)]
    data = encode_apdu(rs).data
    finals = []
    for size in (1, 4, 48):
        comp = CompressorState.new("[L61 L72 L16,2 L91 L41]")
        dec = CompressorState.new("[L61 L72 L16,2 L91 L41]")
        out = b""
        for i in range(0, 48, size):
            chunk = data[i * 49:(i + size) * 49]
            out += decompress_apdu(dec, compress_apdu(comp, chunk).to_bytes())
        assert out == data
        assert save_state(dec) == save_state(comp)
        finals.append(save_state(comp))
    assert finals[0] == finals[1] == finals[2]


def test_empty_state_file_layout():
    st = CompressorState.new(TWO_CLASS)
    blob = save_state(st)
    assert blob == (b"GDPS\x01\x00\x09[L41 L32]\x02"
                    b"\x00\x03\x00\x00\x00\x00" b"\x00\x04\x00\x00\x00\x00")
    assert state_size_bytes(st) == len(blob)
    compress_apdu(st, two_class_reading(A1, 1, B1, 2))
    assert state_size_bytes(st) == len(blob) + 7 == len(save_state(st))


def test_state_roundtrip_keeps_order():
    st = CompressorState.new("[H5 L21]")
    rng = random.Random(3)
    for _ in range(20):
        compress_apdu(st, rng.randbytes(7 * 3))
    back = load_state(save_state(st))
    assert back == st
    assert [c.bases for c in back.classes.values()] == [c.bases for c in st.classes.values()]


@pytest.mark.parametrize("blob,msg", [
    (b"XXXX\x01", "magic"),
    (b"GDPS\x02", "version"),
    (b"GDPS\x01\x00\x05[L30]\x01\x00\x03\x00\x00\x00\x02abc", "truncated"),
    (b"GDPS\x01\x00\x05[L30]\x01\x00\x03\x00\x00\x00\x02abcabc", "duplicate"),
    (b"GDPS\x01\x00\x05[L30]\x01\x00\x04\x00\x00\x00\x00", "does not use"),
    (b"GDPS\x01\x00\x05[L30]\x00", "do not match"),
    (b"GDPS\x01\x00\x05[L30]\x01\x00\x03\x00\x00\x00\x00!", "trailing"),
])
def test_bad_state_files(blob, msg):
    with pytest.raises(StateFormatError, match=msg):
        load_state(blob)


def test_container_roundtrip_and_truncation():
    p = parse_pattern(TWO_CLASS)
    comp = CompressorState.new(p)
    payloads = [compress_apdu(comp, two_class_reading(A1, i, B1, i)).to_bytes() for i in range(3)]
    blob = container_header(p) + b"".join(frame(x) for x in payloads)
    assert blob.startswith(b"GDPC\x01\x00\x09[L41 L32]")
    assert read_container(blob) == (p, payloads)
    with pytest.raises(CorruptStreamError, match="frame 2"):
        read_container(blob[:-1])
    with pytest.raises(CorruptStreamError, match="frame 3"):
        read_container(blob + b"\x00\x00")
    assert list(iter_frames(io.BytesIO(b""))) == []
    with pytest.raises(StateFormatError):
        read_container(b"GDPS\x01")


def test_state_pattern_class_mismatch():
    from dlmsgd.stream import BasisClass
    with pytest.raises(StateFormatError):
        CompressorState(parse_pattern(TWO_CLASS), {4: BasisClass(4)})
