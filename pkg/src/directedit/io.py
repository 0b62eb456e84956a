"""Binary tensor files (FDT1), Netpbm previews and atomic writes."""
from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .core import DTYPE, InvalidArgument

MAGIC = b"FDT1"
_HEADER = struct.Struct("<4s4I")


class FormatError(InvalidArgument):
    """A file does not follow the expected binary layout."""


def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to a temp file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_fdt(arr) -> bytes:
    arr = np.asarray(arr)
    if arr.ndim != 4:
        raise InvalidArgument(f"FDT1 stores 4-D tensors, got shape {arr.shape}")
    header = _HEADER.pack(MAGIC, *arr.shape)
    return header + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def decode_fdt(buf: bytes) -> np.ndarray:
    if len(buf) < _HEADER.size:
        raise FormatError(f"FDT1 header truncated ({len(buf)} bytes)")
    magic, t, h, w, c = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if min(t, h, w, c) < 1:
        raise FormatError(f"FDT1 dims must be positive, got {(t, h, w, c)}")
    n = t * h * w * c
    body = buf[_HEADER.size:]
    if len(body) != 4 * n:
        raise FormatError(f"FDT1 payload has {len(body)} bytes, header implies {4 * n}")
    arr = np.frombuffer(body, dtype="<f4").reshape(t, h, w, c).astype(DTYPE)
    if not np.all(np.isfinite(arr)):
        raise FormatError("FDT1 payload contains non-finite values")
    return arr


def write_fdt(path, arr) -> None:
    atomic_write(path, encode_fdt(arr))


def read_fdt(path) -> np.ndarray:
    return decode_fdt(Path(path).read_bytes())


def quantize(frame) -> np.ndarray:
    """Clamp to [0, 1] and map linearly onto 0..255."""
    return np.rint(np.clip(np.asarray(frame, dtype=DTYPE), 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_ppm(frame) -> bytes:
    """Binary P6 for an ``(H, W, C)`` frame. Non-RGB frames show channel 0 as gray."""
    frame = np.asarray(frame)
    if frame.ndim == 2:
        frame = frame[:, :, None]
    if frame.shape[2] != 3:
        frame = np.repeat(frame[:, :, :1], 3, axis=2)
    h, w = frame.shape[:2]
    return b"P6\n%d %d\n255\n" % (w, h) + quantize(frame).tobytes()


def encode_pgm(frame) -> bytes:
    frame = np.asarray(frame)
    if frame.ndim == 3:
        frame = frame[:, :, 0]
    h, w = frame.shape
    return b"P5\n%d %d\n255\n" % (w, h) + quantize(frame).tobytes()


def decode_pnm(buf: bytes) -> np.ndarray:
    """Read a binary P5/P6 file with maxval 255 into a uint8 array."""
    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(buf) and not buf[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError("truncated Netpbm header")
        tokens.append(buf[start:pos])
    pos += 1
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise FormatError(f"only maxval 255 is supported, got {maxval}")
    channels = {b"P5": 1, b"P6": 3}.get(magic)
    if channels is None:
        raise FormatError(f"unsupported Netpbm magic {magic!r}")
    data = np.frombuffer(buf[pos:pos + w * h * channels], dtype=np.uint8)
    if data.size != w * h * channels:
        raise FormatError("truncated Netpbm payload")
    return data.reshape(h, w, channels) if channels == 3 else data.reshape(h, w)
