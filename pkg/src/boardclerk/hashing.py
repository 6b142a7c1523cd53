"""Canonical hashing and byte encoding.

Every identifier in the system is a SHA-256 digest over a canonical
serialization: fields are concatenated in declaration order, variable-length
fields are length-prefixed, and integers are big-endian.  The hash function
name is exported so runs can record it in their output metadata.
"""

from __future__ import annotations

import hashlib

HASH_NAME = "sha256"
DIGEST_SIZE = 32


def digest(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def enc_u32(value: int) -> bytes:
    return value.to_bytes(4, "big")


def enc_u64(value: int) -> bytes:
    return value.to_bytes(8, "big")


def enc_i64(value: int) -> bytes:
    return value.to_bytes(8, "big", signed=True)


def enc_bytes(data: bytes) -> bytes:
    """Length-prefixed byte string."""
    return enc_u32(len(data)) + data


def enc_list(items: list[bytes]) -> bytes:
    """Count-prefixed concatenation of already-encoded items."""
    return enc_u32(len(items)) + b"".join(items)


class Reader:
    """Cursor over a canonical byte string, for deserialization."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise ValueError("truncated input")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return int.from_bytes(self.take(4), "big")

    def u64(self) -> int:
        return int.from_bytes(self.take(8), "big")

    def i64(self) -> int:
        return int.from_bytes(self.take(8), "big", signed=True)

    def bytes_(self) -> bytes:
        return self.take(self.u32())

    def count(self) -> int:
        return self.u32()

    def done(self) -> bool:
        return self.pos == len(self.data)

    def expect_done(self) -> None:
        if not self.done():
            raise ValueError("trailing bytes after decode")
