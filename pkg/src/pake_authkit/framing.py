"""Byte framing helpers shared by the hash transcripts and wire codecs.

All length prefixes are 4-byte big-endian; unambiguous framing prevents
concatenation collisions in hashed tuples.
"""

import struct

from .errors import MalformedEnvelope

U32 = struct.Struct(">I")
U64 = struct.Struct(">Q")


def lp(data: bytes) -> bytes:
    """Length-prefix `data` with a 4-byte big-endian count."""
    return U32.pack(len(data)) + data


def lp_str(s: str) -> bytes:
    return lp(s.encode("utf-8"))


class Cursor:
    """Sequential reader over a byte string with positioned errors."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def remaining(self) -> int:
        return len(self.data) - self.pos

    def take(self, n: int, what: str = "field") -> bytes:
        if n < 0 or self.remaining() < n:
            raise MalformedEnvelope("truncated", self.pos, what)
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str = "byte") -> int:
        return self.take(1, what)[0]

    def u32(self, what: str = "u32") -> int:
        return U32.unpack(self.take(4, what))[0]

    def u64(self, what: str = "u64") -> int:
        return U64.unpack(self.take(8, what))[0]

    def take_lp(self, what: str = "field", limit: int | None = None) -> bytes:
        n = self.u32(what + " length")
        if limit is not None and n > limit:
            raise MalformedEnvelope("oversize", self.pos - 4, f"{what} of {n} bytes")
        return self.take(n, what)

    def expect_end(self):
        if self.remaining():
            raise MalformedEnvelope("trailing_garbage", self.pos)
