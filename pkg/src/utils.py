import struct
from collections.abc import Callable, Iterable
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import TypeVar

import numpy as np

from src.config import get_config
from src.errors import DataError

REPO_DIR = Path(__file__).resolve().parent.parent
DEFAULT_LF_TABLE = REPO_DIR / "config" / "priors" / "default_lf.txt"

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int | None = None) -> list[R]:
    """Map over items on a thread pool, results in input order"""
    items = list(items)
    workers = threads or get_config().app.threads
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(workers, len(items))) as pool:
        return list(pool.map(fn, items))


FRAME_FILE_VERSION = 1


def write_frame_file(
    path: Path, magic: bytes, frames: np.ndarray, period_us: int, kind: int | None = None
) -> None:
    """
    Write an (N, D) matrix as a little-endian frame file.

    Header: magic, version u32, [kind u8], dims u32, frame-period-µs u32, frame-count u32;
    then the f32 payload in row-major order.
    """
    frames = np.asarray(frames)
    if frames.ndim != 2:
        raise ValueError(f"Frame matrix must be 2-D, got shape {frames.shape}")
    header = magic + struct.pack("<I", FRAME_FILE_VERSION)
    if kind is not None:
        header += struct.pack("<B", kind)
    header += struct.pack("<III", frames.shape[1], period_us, frames.shape[0])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(header + np.ascontiguousarray(frames, dtype="<f4").tobytes())


def read_frame_file(
    path: Path, magic: bytes, with_kind: bool = False
) -> tuple[np.ndarray, int, int | None]:
    """Inverse of write_frame_file: (frames as float64, period µs, kind)"""
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise DataError(f"cannot read frame file: {e}", path) from e

    if blob[:4] != magic:
        raise DataError(f"bad magic {blob[:4]!r}, expected {magic!r}", path)
    offset = 4
    header_size = 4 + (1 if with_kind else 0) + 12
    if len(blob) < offset + header_size:
        raise DataError("truncated header", path)
    (version,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    if version != FRAME_FILE_VERSION:
        raise DataError(f"unsupported version {version}", path)
    kind = None
    if with_kind:
        (kind,) = struct.unpack_from("<B", blob, offset)
        offset += 1
    dims, period_us, count = struct.unpack_from("<III", blob, offset)
    offset += 12

    payload = blob[offset:]
    if len(payload) != 4 * dims * count:
        raise DataError(f"payload holds {len(payload)} bytes, header declares {dims}x{count}", path)
    frames = np.frombuffer(payload, dtype="<f4").reshape(count, dims).astype(np.float64)
    return frames, period_us, kind
