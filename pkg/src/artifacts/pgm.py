"""
Binary portable graymap (P5) reader and writer
"""
from pathlib import Path
from typing import Optional

import numpy as np

from src.utils.errors import ArtifactError

MAX_16BIT = 65535


def write_pgm(path: Path, counts: np.ndarray, maxval: Optional[int] = None) -> Path:
    """Write a 2D array of non-negative integers

    maxval defaults to the image maximum (at least 1); values < 256 use one
    byte per pixel, otherwise two bytes big-endian.
    """
    data = np.asarray(counts)
    if data.ndim != 2:
        raise ArtifactError(f"PGM needs a 2D array, got shape {data.shape}")
    if data.size and data.min() < 0:
        raise ArtifactError("PGM pixels must be >= 0")
    peak = int(data.max()) if data.size else 0
    maxval = max(peak, 1) if maxval is None else int(maxval)
    if not 1 <= maxval <= MAX_16BIT or peak > maxval:
        raise ArtifactError(f"PGM maxval {maxval} invalid for image maximum {peak}")

    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    n_rows, n_cols = data.shape
    header = f"P5\n{n_cols} {n_rows}\n{maxval}\n".encode("ascii")
    path = Path(path)
    try:
        with open(path, "wb") as f:
            f.write(header)
            f.write(data.astype(dtype).tobytes())
    except OSError as e:
        raise ArtifactError(f"cannot write {path}: {e}") from e
    return path


def _header_tokens(raw: bytes, count: int):
    """First `count` whitespace-separated header tokens and the offset after them"""
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ArtifactError("truncated PGM header")
        tokens.append(raw[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path: Path) -> np.ndarray:
    """Read a binary PGM into an int64 array (rows x cols)"""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise ArtifactError(f"cannot read {path}: {e}") from e

    tokens, offset = _header_tokens(raw, 4)
    if tokens[0] != b"P5":
        raise ArtifactError(f"{path} is not a binary PGM (magic {tokens[0]!r})")
    try:
        n_cols, n_rows, maxval = (int(t) for t in tokens[1:])
    except ValueError as e:
        raise ArtifactError(f"bad PGM header in {path}: {e}") from e

    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    expected = n_rows * n_cols * dtype.itemsize
    body = raw[offset:offset + expected]
    if len(body) != expected:
        raise ArtifactError(f"{path}: expected {expected} raster bytes, found {len(body)}")
    return np.frombuffer(body, dtype=dtype).reshape(n_rows, n_cols).astype(np.int64)
