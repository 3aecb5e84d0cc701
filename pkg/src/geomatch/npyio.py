"""Strict NPY v1.0 reader/writer for the feature-file contract.

Only little-endian float32, C-order payloads are accepted: shape (H, W, C)
for feature maps and (H, W) for masks. The reader re-implements header
parsing instead of delegating to ``np.load`` so that off-contract files
(other dtypes, Fortran order, format v2/v3) are rejected explicitly.
"""

from __future__ import annotations

import ast
import io
import os

import numpy as np

from .errors import InputError
from .tensor import FeatureMap, InstanceMask

_MAGIC = b"\x93NUMPY"


def _read_header(fh: io.BufferedReader, path: str) -> tuple[tuple[int, ...], int]:
    magic = fh.read(6)
    if magic != _MAGIC:
        raise InputError(f"{path}: not an NPY file (bad magic)")
    version = fh.read(2)
    if len(version) != 2 or version[0] != 1 or version[1] != 0:
        raise InputError(f"{path}: unsupported NPY version {tuple(version)}, require 1.0")
    raw_len = fh.read(2)
    if len(raw_len) != 2:
        raise InputError(f"{path}: truncated header")
    header_len = int.from_bytes(raw_len, "little")
    header = fh.read(header_len)
    if len(header) != header_len:
        raise InputError(f"{path}: truncated header")
    try:
        meta = ast.literal_eval(header.decode("latin1").strip())
    except (ValueError, SyntaxError) as exc:
        raise InputError(f"{path}: malformed NPY header: {exc}") from exc
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise InputError(f"{path}: malformed NPY header dict")
    if meta["descr"] != "<f4":
        raise InputError(f"{path}: dtype descriptor {meta['descr']!r} not allowed, require '<f4'")
    if meta["fortran_order"] is not False:
        raise InputError(f"{path}: fortran_order must be False")
    shape = meta["shape"]
    if not (isinstance(shape, tuple) and all(isinstance(s, int) and s > 0 for s in shape)):
        raise InputError(f"{path}: invalid shape {shape!r}")
    return shape, header_len


def read_array(path: str | os.PathLike, ndim: int) -> np.ndarray:
    """Read a validated float32 C-order array of the given rank."""
    path = os.fspath(path)
    with open(path, "rb") as fh:
        shape, _ = _read_header(fh, path)
        if len(shape) != ndim:
            raise InputError(f"{path}: expected {ndim}-d tensor, got shape {shape}")
        count = int(np.prod(shape))
        data = np.fromfile(fh, dtype="<f4", count=count)
        if data.size != count:
            raise InputError(f"{path}: payload shorter than header shape {shape}")
        if fh.read(1):
            raise InputError(f"{path}: trailing bytes after payload")
    return data.reshape(shape)


def read_feature_map(path: str | os.PathLike, normalized: bool = False) -> FeatureMap:
    return FeatureMap(read_array(path, 3), normalized=normalized)


def read_mask(path: str | os.PathLike) -> InstanceMask:
    return InstanceMask(read_array(path, 2) != 0.0)


def write_array(path: str | os.PathLike, array: np.ndarray) -> None:
    """Write an NPY v1.0 little-endian float32 C-order file."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = {
        "descr": "<f4",
        "fortran_order": False,
        "shape": tuple(int(s) for s in arr.shape),
    }
    body = ("{'descr': '<f4', 'fortran_order': False, 'shape': %s, }"
            % repr(header["shape"])).encode("latin1")
    # Pad so that the data block starts on a 64-byte boundary.
    pad = 64 - ((len(_MAGIC) + 2 + 2 + len(body) + 1) % 64)
    body += b" " * (pad % 64) + b"\n"
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(bytes([1, 0]))
        fh.write(len(body).to_bytes(2, "little"))
        fh.write(body)
        fh.write(arr.tobytes(order="C"))


def write_feature_map(path: str | os.PathLike, f: FeatureMap) -> None:
    write_array(path, f.data)


def write_mask(path: str | os.PathLike, m: InstanceMask) -> None:
    write_array(path, m.bits.astype(np.float32))
