"""CAFM feature-map container.

``"CAFM" | u32 version=1 | u32 N, C, H, W | u8 dtype flag | payload | u32 CRC32``,
little-endian, payload in N->C->H->W order.
"""

from ..core.tensor import Precision, Tensor
from ..utils.errors import DataIOError
from .binary_io import BinaryReader, BinaryWriter, PathLike

FEATURE_MAGIC = b"CAFM"
FEATURE_VERSION = 1


def encode_features(t: Tensor) -> bytes:
    writer = BinaryWriter(FEATURE_MAGIC, FEATURE_VERSION)
    for extent in t.shape:
        writer.u32(extent)
    writer.u8(t.precision.flag)
    writer.array(t.data, t.precision.dtype)
    return writer.finish()


def write_features(t: Tensor, path: PathLike) -> None:
    """Write a tensor at its own precision. Raises DataIOError if the path is unwritable."""
    try:
        with open(path, "wb") as handle:
            handle.write(encode_features(t))
    except OSError as e:
        raise DataIOError(f"Cannot write {path}: {e}") from e


def _parse_body(reader: BinaryReader) -> Tensor:
    shape = tuple(reader.u32() for _ in range(4))
    flag = reader.u8()
    if flag not in (0, 1):
        raise DataIOError(f"{reader.path}: unknown dtype flag {flag}")
    return Tensor.wrap(reader.array(shape, Precision.from_flag(flag).dtype))


def decode_features(reader: BinaryReader) -> Tensor:
    return reader.decode(FEATURE_MAGIC, FEATURE_VERSION, _parse_body)


def read_features(path: PathLike) -> Tensor:
    """
    Read a CAFM file.

    Raises:
        TruncatedFileError: If the file ends before N*C*H*W elements and the CRC32
        ChecksumMismatchError: If the CRC32 does not match a complete file
        MagicMismatchError: If an intact file is not a CAFM container
        VersionMismatchError: If an intact file has a version other than 1
    """
    return decode_features(BinaryReader.open(path))
