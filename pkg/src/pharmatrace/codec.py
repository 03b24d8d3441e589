"""Canonical binary encoding used for hashing, signing and on-disk records.

All integers are big-endian and fixed width; variable-length payloads carry
a u32 length prefix. The byte layout is identical on every platform, which
is what makes block hashes, state hashes and the block log bit-exact.
See docs/formats.md for the field-by-field layout of each record type.
"""

from __future__ import annotations

import struct


class DecodeError(ValueError):
    pass


class Writer:
    """Accumulates canonical bytes."""

    def __init__(self) -> None:
        self._parts: list[bytes] = []

    def u8(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">B", v))
        return self

    def u32(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">I", v))
        return self

    def u64(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">Q", v))
        return self

    def u128(self, v: int) -> "Writer":
        if v < 0 or v >= 1 << 128:
            raise ValueError("u128 out of range")
        self._parts.append(v.to_bytes(16, "big"))
        return self

    def i64(self, v: int) -> "Writer":
        self._parts.append(struct.pack(">q", v))
        return self

    def raw(self, b: bytes) -> "Writer":
        self._parts.append(b)
        return self

    def bytes_(self, b: bytes) -> "Writer":
        self.u32(len(b))
        self._parts.append(b)
        return self

    def str_(self, s: str) -> "Writer":
        return self.bytes_(s.encode("utf-8"))

    def getvalue(self) -> bytes:
        return b"".join(self._parts)


class Reader:
    """Decodes canonical bytes; raises DecodeError on truncation."""

    def __init__(self, data: bytes) -> None:
        self._data = data
        self._pos = 0

    def _take(self, n: int) -> bytes:
        if self._pos + n > len(self._data):
            raise DecodeError(f"truncated read of {n} bytes at offset {self._pos}")
        out = self._data[self._pos : self._pos + n]
        self._pos += n
        return out

    def u8(self) -> int:
        return struct.unpack(">B", self._take(1))[0]

    def u32(self) -> int:
        return struct.unpack(">I", self._take(4))[0]

    def u64(self) -> int:
        return struct.unpack(">Q", self._take(8))[0]

    def u128(self) -> int:
        return int.from_bytes(self._take(16), "big")

    def i64(self) -> int:
        return struct.unpack(">q", self._take(8))[0]

    def raw(self, n: int) -> bytes:
        return self._take(n)

    def bytes_(self) -> bytes:
        n = self.u32()
        if n > len(self._data) - self._pos:
            raise DecodeError(f"length prefix {n} exceeds remaining input")
        return self._take(n)

    def str_(self) -> str:
        try:
            return self.bytes_().decode("utf-8")
        except UnicodeDecodeError as exc:
            raise DecodeError(f"invalid utf-8: {exc}") from exc

    def eof(self) -> bool:
        return self._pos >= len(self._data)

    def expect_eof(self) -> None:
        if not self.eof():
            raise DecodeError(f"{len(self._data) - self._pos} trailing bytes")


def write_frame(payload: bytes) -> bytes:
    """Length-prefixed frame: u32 payload length + payload."""
    return struct.pack(">I", len(payload)) + payload


def read_frames(data: bytes) -> list[bytes]:
    """Split a byte string into length-prefixed frames."""
    frames = []
    pos = 0
    while pos < len(data):
        if pos + 4 > len(data):
            raise DecodeError("truncated frame length prefix")
        (n,) = struct.unpack(">I", data[pos : pos + 4])
        pos += 4
        if pos + n > len(data):
            raise DecodeError("truncated frame payload")
        frames.append(data[pos : pos + n])
        pos += n
    return frames
