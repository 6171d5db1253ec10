"""Input image readers and writers.

Two formats: PGM (P2 ascii or P5 binary, values scaled to [0, 1] by the
declared maxval) and raw32 (three little-endian int32 for rows, cols,
channels followed by row-major little-endian float32 samples).
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InputError, IoError
from .tensor import as_tensor

RAW32_SUFFIX = ".raw32"


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read image '{path}': {exc}") from None


def _pgm_tokens(data: bytes, count: int) -> tuple[list[int], int]:
    """First ``count`` whitespace-separated integers after the magic,
    skipping '#' comments; returns them plus the offset one byte past the
    final token's trailing whitespace character."""
    tokens: list[int] = []
    i = 2  # past the magic
    current = b""
    while i < len(data) and len(tokens) < count:
        ch = data[i : i + 1]
        if ch == b"#":
            while i < len(data) and data[i : i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            if current:
                try:
                    tokens.append(int(current))
                except ValueError:
                    raise InputError(f"bad integer {current!r} in image header") from None
                current = b""
        else:
            current += ch
        i += 1
    if len(tokens) < count:
        raise InputError("truncated image header")
    return tokens, i


def read_pgm(path) -> np.ndarray:
    """Grayscale image as a rows x cols float array in [0, 1]."""
    data = _read_bytes(path)
    magic = data[:2]
    if magic not in (b"P2", b"P5"):
        raise InputError(f"unsupported image magic {magic!r}, expected P2 or P5")
    (w, h, maxval), offset = _pgm_tokens(data, 3)
    if w < 1 or h < 1:
        raise InputError(f"bad image size {w}x{h}")
    if not 0 < maxval < 65536:
        raise InputError(f"maxval must be in 1..65535, got {maxval}")
    if magic == b"P2":
        try:
            values = np.array(data[offset:].split(), dtype=np.float64)
        except ValueError:
            raise InputError("non-numeric pixel data in ascii image") from None
    else:
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        need = h * w * dtype.itemsize
        raw = data[offset : offset + need]
        if len(raw) < need:
            raise InputError(f"image data truncated: {len(raw)} of {need} bytes")
        values = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    if values.size != h * w:
        raise InputError(f"expected {h * w} pixels, found {values.size}")
    if values.min() < 0 or values.max() > maxval:
        raise InputError("pixel values outside 0..maxval")
    return (values / maxval).reshape(h, w)


def write_pgm(path, values01) -> None:
    """Write a [0, 1] plane as binary PGM with maxval 255."""
    values = as_tensor(values01)
    if values.ndim == 3 and values.shape[2] == 1:
        values = values[:, :, 0]
    if values.ndim != 2:
        raise InputError(f"grayscale image must be rank-2, got shape {values.shape}")
    h, w = values.shape
    bytes_ = np.clip(np.rint(values * 255.0), 0, 255).astype(np.uint8)
    try:
        Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + bytes_.tobytes())
    except OSError as exc:
        raise IoError(f"cannot write image '{path}': {exc}") from None


def read_raw32(path) -> np.ndarray:
    """rows x cols x channels float array from the raw32 container."""
    data = _read_bytes(path)
    if len(data) < 12:
        raise InputError("raw32 file shorter than its 12-byte header")
    h, w, c = (int(v) for v in np.frombuffer(data[:12], dtype="<i4"))
    if h < 1 or w < 1 or c < 1:
        raise InputError(f"bad raw32 shape {h}x{w}x{c}")
    need = h * w * c * 4
    if len(data) - 12 != need:
        raise InputError(
            f"raw32 payload is {len(data) - 12} bytes, header implies {need}"
        )
    values = np.frombuffer(data, dtype="<f4", offset=12).astype(np.float64)
    return values.reshape(h, w, c)


def write_raw32(path, values) -> None:
    values = as_tensor(values)
    if values.ndim == 2:
        values = values[:, :, None]
    if values.ndim != 3:
        raise InputError(f"raw32 image must be rank-2 or rank-3, got {values.shape}")
    header = np.array(values.shape, dtype="<i4").tobytes()
    try:
        Path(path).write_bytes(header + values.astype("<f4").tobytes())
    except OSError as exc:
        raise IoError(f"cannot write image '{path}': {exc}") from None


def read_image(path) -> np.ndarray:
    """Dispatch on suffix: .raw32 or PGM; always returns rank-3 or rank-2."""
    if str(path).endswith(RAW32_SUFFIX):
        return read_raw32(path)
    return read_pgm(path)
