"""On-disk matrix format and text manifests for workbench artifacts.

Matrix file layout (all integers little-endian):
  bytes 0-7    magic  b"DDROMMTX"
  bytes 8-11   format version (u32)
  bytes 12-15  reserved (zero)
  bytes 16-23  row count (u64)
  bytes 24-31  column count (u64)
  payload      float64 entries, column-major
  trailer      crc32 of the payload (u64)
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"DDROMMTX"
VERSION = 1


class MatrixFormatError(RuntimeError):
    pass


def save_matrix(path, mat: np.ndarray) -> None:
    mat = np.asarray(mat, dtype=np.float64)
    if mat.ndim == 1:
        mat = mat.reshape(-1, 1)
    if mat.ndim != 2:
        raise ValueError("only 1- or 2-dimensional arrays are supported")
    payload = np.asfortranarray(mat).tobytes(order="F")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<II", VERSION, 0))
        f.write(struct.pack("<QQ", mat.shape[0], mat.shape[1]))
        f.write(payload)
        f.write(struct.pack("<Q", zlib.crc32(payload)))


def load_matrix(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 40:
        raise MatrixFormatError(f"{path}: truncated header")
    if raw[:8] != MAGIC:
        raise MatrixFormatError(f"{path}: bad magic bytes")
    version, _ = struct.unpack("<II", raw[8:16])
    if version != VERSION:
        raise MatrixFormatError(f"{path}: format version {version}, expected {VERSION}")
    rows, cols = struct.unpack("<QQ", raw[16:32])
    nbytes = rows * cols * 8
    if len(raw) != 32 + nbytes + 8:
        raise MatrixFormatError(f"{path}: truncated payload")
    payload = raw[32 : 32 + nbytes]
    (crc,) = struct.unpack("<Q", raw[32 + nbytes :])
    if crc != zlib.crc32(payload):
        raise MatrixFormatError(f"{path}: checksum failure")
    return np.frombuffer(payload, dtype=np.float64).reshape((rows, cols), order="F").copy()


def save_manifest(path, entries: dict) -> None:
    """Plain key = value text manifest; values are str()-serialized."""
    with open(path, "w") as f:
        for k, v in entries.items():
            f.write(f"{k} = {v}\n")


def load_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        k, _, v = line.partition("=")
        out[k.strip()] = v.strip()
    return out
