"""Versioned binary parameter checkpoints.

Layout (all integers little-endian):

    magic   8 bytes  b"TDCKPT1\\n"
    u32     header length
    bytes   header JSON (utf-8), free-form metadata
    u32     entry count
    entry*  u16 name length | name utf-8 | u8 ndim | ndim * u64 dims
            | float64 buffer (C order)
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Union

import numpy as np

from ..errors import IoError

MAGIC = b"TDCKPT1\n"


def save_checkpoint(
    path: Union[str, Path], arrays: dict[str, np.ndarray], header: dict
) -> None:
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(arrays)))
        for name, array in arrays.items():
            data = np.asarray(array, dtype=np.float64)
            if not data.flags["C_CONTIGUOUS"]:
                data = np.ascontiguousarray(data)  # keeps ndim for ndim >= 1
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(data.tobytes())


def load_checkpoint(path: Union[str, Path]) -> tuple[dict, dict[str, np.ndarray]]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise IoError(f"{path}: not a tabdetect checkpoint")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        (count,) = struct.unpack("<I", fh.read(4))
        arrays: dict[str, np.ndarray] = {}
        for _ in range(count):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim))
            size = int(np.prod(shape)) if shape else 1
            buffer = fh.read(size * 8)
            arrays[name] = np.frombuffer(buffer, dtype="<f8").reshape(shape).copy()
    return header, arrays
