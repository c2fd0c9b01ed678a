"""
ARCN parameter checkpoint codec.

Layout (little-endian): magic "ARCN", version u32, record count u32, then per
record name length u32, UTF-8 name, rank u32, dims u32 each, f64 payload;
finally the optimizer step counter as u64.
"""

import struct
from pathlib import Path

import numpy as np
from loguru import logger

from src.errors import DataError
from src.numerics.params import ParameterSet

MAGIC = b"ARCN"
VERSION = 1


def write_checkpoint(params: ParameterSet, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    chunks = [MAGIC, struct.pack("<II", VERSION, len(params))]
    for name, tensor in params.items():
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack(f"<I{tensor.ndim}I", tensor.ndim, *tensor.shape))
        chunks.append(np.ascontiguousarray(tensor.data, dtype="<f8").tobytes())
    chunks.append(struct.pack("<Q", params.step))
    path.write_bytes(b"".join(chunks))
    logger.debug(f"Wrote {len(params)} parameters ({params.num_values()} values) to {path}")


class _Reader:
    def __init__(self, blob: bytes, path: Path):
        self.blob = blob
        self.path = path
        self.offset = 0

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.blob):
            raise DataError("truncated checkpoint", self.path)
        chunk = self.blob[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def u32(self, count: int = 1) -> tuple[int, ...]:
        return struct.unpack(f"<{count}I", self.take(4 * count))


def read_checkpoint(path: Path) -> ParameterSet:
    path = Path(path)
    try:
        reader = _Reader(path.read_bytes(), path)
    except OSError as e:
        raise DataError(f"cannot read checkpoint: {e}", path) from e

    if reader.take(4) != MAGIC:
        raise DataError("not an ARCN checkpoint", path)
    version, count = reader.u32(2)
    if version != VERSION:
        raise DataError(f"unsupported checkpoint version {version}", path)

    params = ParameterSet()
    for _ in range(count):
        (name_len,) = reader.u32()
        name = reader.take(name_len).decode("utf-8")
        (rank,) = reader.u32()
        shape = reader.u32(rank)
        size = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(reader.take(8 * size), dtype="<f8").reshape(shape)
        params.add(name, data.astype(np.float64))
    (params.step,) = struct.unpack("<Q", reader.take(8))
    if reader.offset != len(reader.blob):
        raise DataError("trailing bytes after checkpoint", path)
    return params
