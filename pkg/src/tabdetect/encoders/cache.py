"""Length-prefixed binary cache for encoded corpora.

Layout (little-endian):

    magic    7 bytes  b"TDENC1\\n"
    u32      header length
    bytes    header JSON: {"payload": "bag"|"tokens"|"column",
                           "fingerprint": str, "count": int,
                           "d_num": int, "d_cat": int}   (dims only for column)
    row*     u32 payload length | payload

Payloads:
    bag     u32 nnz, then nnz * (u32 feature id, u32 count)
    tokens  u32 length, then length * u32 ids
    column  d_num f64 num | d_num u8 num_mask | d_cat u32 cat | d_cat u8 cat_mask

The fingerprint is the vocab or codec fingerprint the rows were encoded
with; readers should refuse to mix corpora across fingerprints.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from ..errors import IoError
from .column import ColumnVec
from .linearize import SparseBag, TokenSeq

MAGIC = b"TDENC1\n"


def _payload(item) -> bytes:
    if isinstance(item, SparseBag):
        parts = [struct.pack("<I", len(item.counts))]
        for fid in sorted(item.counts):
            parts.append(struct.pack("<II", fid, item.counts[fid]))
        return b"".join(parts)
    if isinstance(item, TokenSeq):
        ids = np.asarray(item.ids, dtype="<u4")
        return struct.pack("<I", len(ids)) + ids.tobytes()
    if isinstance(item, ColumnVec):
        return (
            item.num.astype("<f8").tobytes()
            + item.num_mask.astype("<u1").tobytes()
            + item.cat.astype("<u4").tobytes()
            + item.cat_mask.astype("<u1").tobytes()
        )
    raise TypeError(f"cannot cache {type(item).__name__}")


def write_encoded_cache(path: Union[str, Path], items: Sequence, fingerprint: str) -> None:
    if not items:
        raise ValueError("refusing to write an empty cache")
    first = items[0]
    header: dict = {"fingerprint": fingerprint, "count": len(items)}
    if isinstance(first, SparseBag):
        header["payload"] = "bag"
    elif isinstance(first, TokenSeq):
        header["payload"] = "tokens"
    elif isinstance(first, ColumnVec):
        header["payload"] = "column"
        header["d_num"] = len(first.num)
        header["d_cat"] = len(first.cat)
    else:
        raise TypeError(f"cannot cache {type(first).__name__}")
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        for item in items:
            payload = _payload(item)
            fh.write(struct.pack("<I", len(payload)))
            fh.write(payload)


def read_encoded_cache(path: Union[str, Path]) -> tuple[dict, list]:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise IoError(f"{path}: not an encoded-corpus cache")
        (header_len,) = struct.unpack("<I", fh.read(4))
        header = json.loads(fh.read(header_len).decode())
        payload_kind = header["payload"]
        fingerprint = header["fingerprint"]
        items: list = []
        for _ in range(header["count"]):
            (size,) = struct.unpack("<I", fh.read(4))
            raw = fh.read(size)
            if payload_kind == "bag":
                (nnz,) = struct.unpack("<I", raw[:4])
                counts = {}
                for k in range(nnz):
                    fid, count = struct.unpack_from("<II", raw, 4 + 8 * k)
                    counts[fid] = count
                items.append(SparseBag(counts=counts, vocab_id=fingerprint))
            elif payload_kind == "tokens":
                (length,) = struct.unpack("<I", raw[:4])
                ids = np.frombuffer(raw, dtype="<u4", count=length, offset=4)
                items.append(TokenSeq(ids=ids.astype(np.int64), vocab_id=fingerprint))
            else:
                d_num, d_cat = header["d_num"], header["d_cat"]
                offset = 0
                num = np.frombuffer(raw, dtype="<f8", count=d_num, offset=offset)
                offset += 8 * d_num
                num_mask = np.frombuffer(raw, dtype="<u1", count=d_num, offset=offset)
                offset += d_num
                cat = np.frombuffer(raw, dtype="<u4", count=d_cat, offset=offset)
                offset += 4 * d_cat
                cat_mask = np.frombuffer(raw, dtype="<u1", count=d_cat, offset=offset)
                items.append(
                    ColumnVec(
                        num=num.astype(np.float64),
                        num_mask=num_mask.astype(np.float64),
                        cat=cat.astype(np.int64),
                        cat_mask=cat_mask.astype(np.float64),
                    )
                )
    return header, items
