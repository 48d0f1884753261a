"""Shared low-level helpers for the binary sidecar formats.

All formats share one framing discipline: 4-byte magic, u32 version,
little-endian payload, trailing CRC32 (zlib polynomial) over every
preceding byte. Writers stage to a temp file in the target directory and
atomically rename, so readers never observe partial files.
"""
from __future__ import annotations

import os
import struct
import tempfile
import zlib

import numpy as np

from .errors import CrcMismatch, MagicMismatch, TruncatedFile, VersionMismatch


def require(buf: bytes, offset: int, count: int, what: str) -> None:
    if offset + count > len(buf):
        raise TruncatedFile(f"stream ends inside {what} (need {count} bytes at offset {offset})")


def check_header(buf: bytes, offset: int, magic: bytes, version: int) -> int:
    """Validate magic + version at offset; return offset advanced past them."""
    require(buf, offset, 8, "header")
    if buf[offset : offset + 4] != magic:
        raise MagicMismatch(
            f"expected magic {magic!r}, found {buf[offset:offset + 4]!r}"
        )
    (got,) = struct.unpack_from("<I", buf, offset + 4)
    if got != version:
        raise VersionMismatch(f"{magic.decode()} version {got} not supported (expected {version})")
    return offset + 8


def check_crc(buf: bytes, start: int, end: int) -> None:
    """Verify the u32 CRC stored at [end-4, end) over buf[start:end-4]."""
    require(buf, end - 4, 4, "checksum")
    (stored,) = struct.unpack_from("<I", buf, end - 4)
    actual = zlib.crc32(buf[start : end - 4]) & 0xFFFFFFFF
    if stored != actual:
        raise CrcMismatch(f"checksum mismatch: stored {stored:#010x}, computed {actual:#010x}")


def append_crc(chunks: list[bytes]) -> bytes:
    body = b"".join(chunks)
    return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)


def floats_le(a: np.ndarray) -> bytes:
    """Row-major little-endian float64 bytes."""
    return np.ascontiguousarray(a, dtype="<f8").tobytes()


def read_floats(buf: bytes, offset: int, count: int, shape: tuple[int, ...], what: str) -> tuple[np.ndarray, int]:
    nbytes = count * 8
    require(buf, offset, nbytes, what)
    a = np.frombuffer(buf, dtype="<f8", count=count, offset=offset).reshape(shape)
    return a.astype(np.float64, copy=True), offset + nbytes


def atomic_write(path: str | os.PathLike, data: bytes) -> None:
    path = os.fspath(path)
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=directory)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
