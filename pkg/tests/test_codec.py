import pytest
from hypothesis import given, strategies as st

from pharmatrace.codec import DecodeError, Reader, Writer, read_frames, write_frame


def test_fixed_width_layout():
    data = Writer().u8(7).u32(1).u64(2).i64(-3).getvalue()
    assert data == b"\x07" + b"\x00\x00\x00\x01" + b"\x00" * 7 + b"\x02" + b"\xff" * 7 + b"\xfd"


def test_length_prefixes():
    data = Writer().str_("ab").bytes_(b"\x00\x01").getvalue()
    assert data == b"\x00\x00\x00\x02ab" + b"\x00\x00\x00\x02\x00\x01"


@given(
    st.integers(min_value=0, max_value=2**64 - 1),
    st.integers(min_value=-(2**63), max_value=2**63 - 1),
    st.integers(min_value=0, max_value=2**128 - 1),
    st.text(max_size=64),
    st.binary(max_size=64),
)
def test_roundtrip(u, i, big, s, b):
    data = Writer().u64(u).i64(i).u128(big).str_(s).bytes_(b).getvalue()
    r = Reader(data)
    assert (r.u64(), r.i64(), r.u128(), r.str_(), r.bytes_()) == (u, i, big, s, b)
    r.expect_eof()


def test_truncation_raises():
    with pytest.raises(DecodeError):
        Reader(b"\x00\x00").u32()
    with pytest.raises(DecodeError):
        Reader(b"\x00\x00\x00\x05ab").bytes_()


def test_trailing_bytes_detected():
    with pytest.raises(DecodeError):
        Reader(b"\x00\x01").expect_eof()


def test_oversized_length_prefix():
    # A corrupt length prefix must not attempt a giant allocation.
    with pytest.raises(DecodeError):
        Reader(b"\xff\xff\xff\xffxx").bytes_()


def test_frames_roundtrip():
    blob = write_frame(b"one") + write_frame(b"") + write_frame(b"three")
    assert read_frames(blob) == [b"one", b"", b"three"]
    with pytest.raises(DecodeError):
        read_frames(blob[:-1])
