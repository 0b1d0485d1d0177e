"""Little-endian record reading and writing shared by the CAFM and CAFW containers."""

import struct
import zlib
from pathlib import Path
from typing import Callable, Sequence, Tuple, TypeVar, Union

import numpy as np

from ..utils.errors import (
    CainnError,
    ChecksumMismatchError,
    DataIOError,
    MagicMismatchError,
    TruncatedFileError,
    VersionMismatchError,
)

PathLike = Union[str, Path]
T = TypeVar("T")


class BinaryWriter:
    """Accumulates a container body and seals it with a trailing CRC32."""

    def __init__(self, magic: bytes, version: int) -> None:
        self._buffer = bytearray(magic)
        self.u32(version)

    def u8(self, value: int) -> "BinaryWriter":
        self._buffer += struct.pack("<B", value)
        return self

    def u32(self, value: int) -> "BinaryWriter":
        self._buffer += struct.pack("<I", value)
        return self

    def f64(self, values: Sequence[float]) -> "BinaryWriter":
        self._buffer += np.asarray(values, dtype="<f8").tobytes()
        return self

    def raw(self, payload: bytes) -> "BinaryWriter":
        self._buffer += payload
        return self

    def text(self, value: str) -> "BinaryWriter":
        encoded = value.encode("utf-8")
        return self.u32(len(encoded)).raw(encoded)

    def array(self, values: np.ndarray, dtype: np.dtype) -> "BinaryWriter":
        little_endian = np.dtype(dtype).newbyteorder("<")
        return self.raw(np.ascontiguousarray(values, dtype=little_endian).tobytes())

    def finish(self) -> bytes:
        body = bytes(self._buffer)
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    def write_to(self, path: PathLike) -> None:
        try:
            Path(path).write_bytes(self.finish())
        except OSError as e:
            raise DataIOError(f"Cannot write {path}: {e}") from e


class BinaryReader:
    """Sequential reader over a whole container file.

    :meth:`decode` verifies the trailing CRC32 before any field is interpreted.
    Every read past the end raises TruncatedFileError; :meth:`finish` checks
    that exactly the CRC32 remains and that it matches the body.
    """

    def __init__(self, data: bytes, path: PathLike = "<memory>") -> None:
        self._data = data
        self._offset = 0
        self.path = str(path)

    @classmethod
    def open(cls, path: PathLike) -> "BinaryReader":
        try:
            return cls(Path(path).read_bytes(), path)
        except FileNotFoundError as e:
            raise DataIOError(f"File not found: {path}") from e
        except OSError as e:
            raise DataIOError(f"Cannot read {path}: {e}") from e

    def _take(self, count: int) -> bytes:
        end = self._offset + count
        if count < 0 or end > len(self._data):
            raise TruncatedFileError(
                f"{self.path}: truncated, needed {count} bytes at offset {self._offset}"
            )
        chunk = self._data[self._offset : end]
        self._offset = end
        return chunk

    def expect_header(self, magic: bytes, version: int) -> None:
        found = self._data[: len(magic)]
        if found != magic:
            raise MagicMismatchError(f"{self.path}: expected magic {magic!r}, found {found!r}")
        self._take(len(magic))
        found_version = self.u32()
        if found_version != version:
            raise VersionMismatchError(
                f"{self.path}: unsupported format version {found_version}, expected {version}"
            )

    def u8(self) -> int:
        return struct.unpack("<B", self._take(1))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self._take(4))[0]

    def f64(self, count: int) -> np.ndarray:
        return np.frombuffer(self._take(8 * count), dtype="<f8").astype(np.float64)

    def text(self) -> str:
        raw = self._take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as e:
            raise DataIOError(f"{self.path}: invalid UTF-8 text block") from e

    def array(self, shape: Tuple[int, ...], dtype: np.dtype) -> np.ndarray:
        dtype = np.dtype(dtype)
        count = int(np.prod(shape, dtype=np.int64))
        raw = self._take(count * dtype.itemsize)
        return np.frombuffer(raw, dtype=dtype.newbyteorder("<")).astype(dtype).reshape(shape)

    def finish(self) -> None:
        body_end = self._offset
        stored = self._take(4)
        if self._offset != len(self._data):
            raise DataIOError(
                f"{self.path}: {len(self._data) - self._offset} unexpected trailing bytes"
            )
        expected = zlib.crc32(self._data[:body_end]) & 0xFFFFFFFF
        if struct.unpack("<I", stored)[0] != expected:
            raise ChecksumMismatchError(f"{self.path}: CRC32 mismatch")

    def sealed(self) -> bool:
        """Whether the last four bytes are the CRC32 of everything before them."""
        if len(self._data) < 4:
            return False
        (stored,) = struct.unpack("<I", self._data[-4:])
        return zlib.crc32(self._data[:-4]) & 0xFFFFFFFF == stored

    def decode(self, magic: bytes, version: int, parse: Callable[["BinaryReader"], T]) -> T:
        """
        Check the container frame and run ``parse`` over the body.

        A sealed file is read normally: magic, version, body, trailer. When the
        CRC32 does not match, header fields are not trusted. The body is walked
        once more only to tell a cut file from a corrupted one.

        Args:
            magic: Expected leading bytes
            version: Expected format version
            parse: Reads the fields after the version

        Returns:
            Whatever ``parse`` returns

        Raises:
            TruncatedFileError: If the file ends before the contents it declares
            ChecksumMismatchError: If the CRC32 does not match a complete body
            MagicMismatchError: If a sealed file is a different container
            VersionMismatchError: If a sealed file has another version
        """
        frame = len(magic) + 8
        if len(self._data) < frame:
            raise TruncatedFileError(
                f"{self.path}: {len(self._data)} bytes, shorter than the {frame}-byte frame"
            )
        if self.sealed():
            self.expect_header(magic, version)
            result = parse(self)
            self.finish()
            return result

        found = self._data[: len(magic)]
        if found != magic:
            raise ChecksumMismatchError(
                f"{self.path}: CRC32 mismatch, magic {found!r} (expected {magic!r})"
            )
        self._offset = len(magic) + 4
        try:
            parse(self)
        except TruncatedFileError:
            raise
        except (CainnError, ValueError) as e:
            raise ChecksumMismatchError(f"{self.path}: CRC32 mismatch") from e
        if self._offset + 4 > len(self._data):
            raise TruncatedFileError(f"{self.path}: truncated, CRC32 missing")
        raise ChecksumMismatchError(f"{self.path}: CRC32 mismatch")
