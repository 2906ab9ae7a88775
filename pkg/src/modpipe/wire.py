"""Length-prefixed binary encoding shared by certificates and marker blocks.

Conventions: big-endian integers; variable-length fields carry a u16
byte-length prefix; strings are UTF-8.
"""

from __future__ import annotations


class WireError(ValueError):
    """Structurally invalid length-prefixed data."""


class Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise WireError(f"need {n} bytes at offset {self.pos}, have {len(self.data) - self.pos}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return int.from_bytes(self.take(2), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def bytes16(self) -> bytes:
        return self.take(self.u16())

    def str16(self) -> str:
        raw = self.bytes16()
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WireError(f"field is not UTF-8: {exc}") from exc

    def done(self) -> bool:
        return self.pos == len(self.data)


def u8(v: int) -> bytes:
    return bytes([v & 0xFF])


def u16(v: int) -> bytes:
    return int(v).to_bytes(2, "big")


def u64(v: int) -> bytes:
    return int(v).to_bytes(8, "big")


def bytes16(raw: bytes) -> bytes:
    if len(raw) > 0xFFFF:
        raise WireError(f"field of {len(raw)} bytes exceeds u16 length prefix")
    return u16(len(raw)) + raw


def str16(s: str) -> bytes:
    return bytes16(s.encode("utf-8"))
