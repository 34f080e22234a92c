"""Little-endian reader shared by the checkpoint and bank formats."""
from __future__ import annotations

import struct

from .exceptions import FormatError


class ByteReader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise FormatError(f"file truncated while reading {what}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def at_end(self) -> bool:
        return self.pos == len(self.data)
