"""Typed model of tables, schemas, rows and provenance labels.

A cell is a plain Python value: float (numerical), str (categorical) or
None (missing). Floats must be finite; categorical strings are non-empty
after trimming. Missing cells are tolerated at ingest and rejected by
the encoders.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Union

from .errors import IngestError, KindError, ShapeError

Cell = Union[float, str, None]


class ColumnKind(Enum):
    NUMERICAL = "numerical"
    CATEGORICAL = "categorical"


class Origin(Enum):
    REAL = "real"
    SYNTHETIC = "synthetic"


@dataclass(frozen=True)
class Schema:
    """Ordered column names and kinds for one table."""

    table_name: str
    columns: tuple[tuple[str, ColumnKind], ...]

    def __post_init__(self):
        if not self.columns:
            raise IngestError("schema must have at least one column")
        names = [n for n, _ in self.columns]
        if len(set(names)) != len(names):
            raise IngestError(f"duplicate column names in schema '{self.table_name}'")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.columns)

    @property
    def kinds(self) -> tuple[ColumnKind, ...]:
        return tuple(k for _, k in self.columns)

    @property
    def numeric_indices(self) -> tuple[int, ...]:
        return tuple(i for i, (_, k) in enumerate(self.columns) if k is ColumnKind.NUMERICAL)

    @property
    def categorical_indices(self) -> tuple[int, ...]:
        return tuple(i for i, (_, k) in enumerate(self.columns) if k is ColumnKind.CATEGORICAL)

    def __len__(self) -> int:
        return len(self.columns)


@dataclass(frozen=True)
class Table:
    """A schema plus a grid of typed cells. Immutable after construction."""

    schema: Schema
    rows: tuple[tuple[Cell, ...], ...]

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def column(self, index: int) -> tuple[Cell, ...]:
        return tuple(row[index] for row in self.rows)


@dataclass(frozen=True)
class RowRecord:
    """One row with provenance: source table, origin and generator."""

    table_id: str
    origin: Origin
    generator_id: Optional[str]
    cells: tuple[Cell, ...]
    schema: Schema
    # Stable per-source row index; seeds the evaluation-time permutation.
    source_index: int = 0

    def __post_init__(self):
        has_gen = self.generator_id is not None
        if has_gen != (self.origin is Origin.SYNTHETIC):
            raise IngestError(
                "generator_id must be present exactly when origin is synthetic "
                f"(table '{self.table_id}')"
            )

    @property
    def uid(self) -> tuple:
        """Identity used by the leakage audit to track consumed rows."""
        return (self.table_id, self.origin.value, self.generator_id, self.source_index)


def parse_number(raw: str) -> Optional[float]:
    """Parse a finite decimal number, or return None.

    Rejects underscores (accepted by float() but not CSV-idiomatic) and
    non-finite spellings like 'inf' or 'nan'.
    """
    s = raw.strip()
    if not s or "_" in s:
        return None
    try:
        x = float(s)
    except ValueError:
        return None
    if not math.isfinite(x):
        return None
    return x


def infer_schema(
    header: Sequence[str],
    sample_rows: Sequence[Sequence[str]],
    max_cardinality: int = 20,
    table_name: str = "",
) -> Schema:
    """Decide a kind for every column from raw string samples.

    A column is numerical iff every non-empty value parses as a finite
    decimal number and, additionally, either some value is non-integer
    or the distinct-value count exceeds ``max_cardinality``. Low-arity
    all-integer columns (ids, codes) therefore stay categorical.
    """
    if not header:
        raise IngestError("empty header")
    width = len(header)
    for i, row in enumerate(sample_rows):
        if len(row) != width:
            raise IngestError(f"row {i}: expected {width} fields, got {len(row)}")

    columns = []
    for j, name in enumerate(header):
        values = [row[j] for row in sample_rows if row[j].strip() != ""]
        parsed = [parse_number(v) for v in values]
        all_numeric = bool(values) and all(p is not None for p in parsed)
        if all_numeric:
            any_non_integer = any(not p.is_integer() for p in parsed)
            distinct = len(set(values))
            kind = (
                ColumnKind.NUMERICAL
                if any_non_integer or distinct > max_cardinality
                else ColumnKind.CATEGORICAL
            )
        else:
            kind = ColumnKind.CATEGORICAL
        columns.append((name, kind))
    return Schema(table_name=table_name, columns=tuple(columns))


def validate_table(t: Table) -> None:
    """Raise unless every row matches the schema in length and cell kinds."""
    width = len(t.schema)
    for i, row in enumerate(t.rows):
        if len(row) != width:
            raise ShapeError(f"row {i}: expected {width} cells, got {len(row)}")
        for j, cell in enumerate(row):
            if cell is None:
                continue
            name, kind = t.schema.columns[j]
            if kind is ColumnKind.NUMERICAL:
                if not isinstance(cell, float):
                    raise KindError(f"row {i}, column '{name}': {cell!r} in numerical column")
                if not math.isfinite(cell):
                    raise KindError(f"row {i}, column '{name}': non-finite numeric value")
            else:
                if not isinstance(cell, str):
                    raise KindError(f"row {i}, column '{name}': {cell!r} in categorical column")
                if not cell.strip():
                    raise KindError(f"row {i}, column '{name}': blank categorical value")
