"""Column-based encoding: per-table quantile + ordinal codec with pad-or-crop.

Numerics map to their empirical CDF position in [0, 1] (midrank ties,
out-of-range values clip). Categoricals map to 1-based level indices
with 0 reserved for unseen levels (and padding). Codecs are fitted per
table, never across tables.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..data import ColumnKind, RowRecord, Table
from ..errors import CodecMismatch, EmptyTableError, MissingCellError


@dataclass(frozen=True)
class ColumnCodec:
    fitted_on: str
    # column index -> sorted reference values (numeric) or level->index map.
    numeric_refs: dict
    category_maps: dict
    fingerprint: str


@dataclass(frozen=True)
class ColumnVec:
    num: np.ndarray
    num_mask: np.ndarray
    cat: np.ndarray
    cat_mask: np.ndarray


def fit_column_codec(table: Table) -> ColumnCodec:
    """Store each numeric column's sorted values and each categorical
    column's lexicographic level map (1..K)."""
    if table.n_rows < 2:
        raise EmptyTableError("codec fitting needs at least 2 rows")
    numeric_refs: dict = {}
    category_maps: dict = {}
    digest = hashlib.blake2b(digest_size=16)
    digest.update(table.schema.table_name.encode("utf-8"))
    for j, (name, kind) in enumerate(table.schema.columns):
        col = table.column(j)
        if any(c is None for c in col):
            raise MissingCellError(f"column '{name}' has missing cells")
        if kind is ColumnKind.NUMERICAL:
            refs = np.sort(np.asarray(col, dtype=np.float64))
            numeric_refs[j] = refs
            digest.update(refs.tobytes())
        else:
            levels = sorted(set(col))
            category_maps[j] = {level: i + 1 for i, level in enumerate(levels)}
            for level in levels:
                digest.update(level.encode("utf-8", "surrogatepass"))
                digest.update(b"\x00")
    return ColumnCodec(
        fitted_on=table.schema.table_name,
        numeric_refs=numeric_refs,
        category_maps=category_maps,
        fingerprint=digest.hexdigest(),
    )


def empirical_cdf(refs: np.ndarray, x: float) -> float:
    """Midrank empirical CDF: (#below + 0.5 * #ties) / n, clipped to [0, 1]."""
    n = len(refs)
    lo = int(np.searchsorted(refs, x, side="left"))
    hi = int(np.searchsorted(refs, x, side="right"))
    value = (lo + 0.5 * (hi - lo)) / n
    return min(1.0, max(0.0, value))


def apply_column_codec(
    codec: ColumnCodec, record: RowRecord, d_num: int, d_cat: int
) -> ColumnVec:
    """Encode one row into fixed-width numeric and categorical vectors.

    Crop keeps the first d_num / d_cat columns in schema order; padded
    slots are exactly 0 with mask 0.
    """
    if record.table_id != codec.fitted_on:
        raise CodecMismatch(
            f"codec fitted on '{codec.fitted_on}' applied to row of '{record.table_id}'"
        )
    schema = record.schema
    num = np.zeros(d_num, dtype=np.float64)
    num_mask = np.zeros(d_num, dtype=np.float64)
    cat = np.zeros(d_cat, dtype=np.int64)
    cat_mask = np.zeros(d_cat, dtype=np.float64)

    for slot, j in enumerate(schema.numeric_indices[:d_num]):
        cell = record.cells[j]
        if cell is None:
            raise MissingCellError(f"missing numeric cell in '{record.table_id}'")
        num[slot] = empirical_cdf(codec.numeric_refs[j], float(cell))
        num_mask[slot] = 1.0

    for slot, j in enumerate(schema.categorical_indices[:d_cat]):
        cell = record.cells[j]
        if cell is None:
            raise MissingCellError(f"missing categorical cell in '{record.table_id}'")
        cat[slot] = codec.category_maps[j].get(cell, 0)
        cat_mask[slot] = 1.0

    return ColumnVec(num=num, num_mask=num_mask, cat=cat, cat_mask=cat_mask)
