"""Little-endian binary IO shared by the checkpoint and clip file formats.

All formats follow the same scheme: a 4-byte magic, a u32 version, format
specific header fields, then payload tensors stored as
(rank u32, dims u32..., float32 values row-major).
"""
from __future__ import annotations

import struct

import numpy as np


class BinaryFormatError(ValueError):
    """Structured parse error carrying the byte offset of the failure."""

    def __init__(self, offset: int, message: str):
        super().__init__(f"at byte {offset}: {message}")
        self.offset = offset


class Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise BinaryFormatError(self.pos, f"truncated while reading {what}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def magic(self, expected: bytes) -> None:
        got = self.take(4, "magic")
        if got != expected:
            raise BinaryFormatError(0, f"bad magic {got!r}, expected {expected!r}")

    def u32(self, what: str = "u32") -> int:
        return struct.unpack("<I", self.take(4, what))[0]

    def u64(self, what: str = "u64") -> int:
        return struct.unpack("<Q", self.take(8, what))[0]

    def f32_array(self, count: int, what: str = "float payload") -> np.ndarray:
        raw = self.take(4 * count, what)
        return np.frombuffer(raw, dtype="<f4").copy()

    def tensor(self, what: str = "tensor") -> np.ndarray:
        rank = self.u32(f"{what} rank")
        if rank > 8:
            raise BinaryFormatError(self.pos - 4, f"{what} rank {rank} out of range")
        dims = [self.u32(f"{what} dim") for _ in range(rank)]
        n = 1
        for d in dims:
            n *= d
        return self.f32_array(n, f"{what} values").reshape(dims)

    def expect_end(self) -> None:
        if self.pos != len(self.data):
            raise BinaryFormatError(self.pos, "trailing bytes after payload")


class Writer:
    def __init__(self):
        self.parts: list[bytes] = []

    def magic(self, magic: bytes) -> None:
        assert len(magic) == 4
        self.parts.append(magic)

    def u32(self, value: int) -> None:
        self.parts.append(struct.pack("<I", value))

    def u64(self, value: int) -> None:
        self.parts.append(struct.pack("<Q", value))

    def f32_array(self, arr: np.ndarray) -> None:
        self.parts.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())

    def tensor(self, arr: np.ndarray) -> None:
        self.u32(arr.ndim)
        for d in arr.shape:
            self.u32(d)
        self.f32_array(arr)

    def getvalue(self) -> bytes:
        return b"".join(self.parts)
