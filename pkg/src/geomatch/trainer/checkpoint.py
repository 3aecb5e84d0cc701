"""Binary checkpoint files: versioned header, layer descriptors, float32
little-endian parameter vector."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import InputError
from .stack import LAYER_KINDS, LayerSpec, PostProcessor

MAGIC = b"GMCK"
VERSION = 1


def save_checkpoint(proc: PostProcessor, path: str | Path) -> None:
    parts = [MAGIC, struct.pack("<II", VERSION, len(proc.specs))]
    for s in proc.specs:
        skip = -1 if s.skip_from is None else s.skip_from
        parts.append(struct.pack("<BIIi", LAYER_KINDS.index(s.kind),
                                 s.in_channels, s.out_channels, skip))
    vec = np.asarray(proc.params, dtype="<f4")
    parts.append(struct.pack("<Q", vec.size))
    parts.append(vec.tobytes())
    Path(path).write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path) -> PostProcessor:
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise InputError(f"{path}: not a checkpoint file")
    layer_fmt = struct.calcsize("<BIIi")
    if len(blob) < 12:
        raise InputError(f"{path}: truncated checkpoint header")
    version, n_layers = struct.unpack_from("<II", blob, 4)
    if version != VERSION:
        raise InputError(f"{path}: unsupported checkpoint version {version}")
    pos = 12
    if len(blob) < pos + n_layers * layer_fmt + 8:
        raise InputError(f"{path}: truncated layer table")
    specs = []
    for _ in range(n_layers):
        kind_i, cin, cout, skip = struct.unpack_from("<BIIi", blob, pos)
        pos += layer_fmt
        if kind_i >= len(LAYER_KINDS):
            raise InputError(f"{path}: unknown layer kind {kind_i}")
        specs.append(LayerSpec(LAYER_KINDS[kind_i], cin, cout,
                               None if skip < 0 else skip))
    (count,) = struct.unpack_from("<Q", blob, pos)
    pos += 8
    if pos + 4 * count != len(blob):
        raise InputError(f"{path}: truncated or oversized parameter payload")
    vec = np.frombuffer(blob, dtype="<f4", count=count, offset=pos)
    return PostProcessor(specs=tuple(specs), params=vec.astype(np.float64))
