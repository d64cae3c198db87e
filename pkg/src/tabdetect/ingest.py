"""CSV ingestion, schema sidecars and labeled row pooling.

CSV dialect is fixed: comma separator, double-quote quoting, UTF-8,
mandatory header. A schema sidecar is itself a small CSV with header
``name,kind`` and one row per column, order significant.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import Mapping, Optional, Union

import numpy as np

from .data import (
    Cell,
    ColumnKind,
    Origin,
    RowRecord,
    Schema,
    Table,
    infer_schema,
    parse_number,
    validate_table,
)
from .errors import IngestError, IoError, KindError, SchemaMismatch

_SIDE_KINDS = {k.value: k for k in ColumnKind}


def _read_raw_csv(path: Union[str, Path]) -> tuple[list[str], list[list[str]]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            rows = list(reader)
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    if not rows:
        raise IngestError(f"{path}: empty file")
    return rows[0], rows[1:]


def _convert_cell(raw: str, kind: ColumnKind, where: str) -> Cell:
    if raw.strip() == "":
        return None
    if kind is ColumnKind.NUMERICAL:
        x = parse_number(raw)
        if x is None:
            raise KindError(f"{where}: {raw!r} is not a finite number")
        return x
    return raw


def load_csv(
    path: Union[str, Path],
    schema: Optional[Schema] = None,
    max_cardinality: int = 20,
) -> Table:
    """Load one CSV into a validated Table.

    Without a sidecar schema the kinds are inferred from all rows;
    empty fields become missing cells either way.
    """
    header, raw_rows = _read_raw_csv(path)
    if not any(h.strip() for h in header):
        raise IngestError(f"{path}: blank header")
    width = len(header)
    for i, row in enumerate(raw_rows):
        if len(row) != width:
            raise IngestError(f"{path}: row {i} has {len(row)} fields, expected {width}")

    if schema is None:
        schema = infer_schema(header, raw_rows, max_cardinality, table_name=Path(path).stem)
    elif list(schema.names) != header:
        raise IngestError(
            f"{path}: header {header} does not match schema columns {list(schema.names)}"
        )

    rows = []
    for i, raw in enumerate(raw_rows):
        rows.append(
            tuple(
                _convert_cell(raw[j], schema.kinds[j], f"{path}: row {i}, column '{schema.names[j]}'")
                for j in range(width)
            )
        )
    table = Table(schema=schema, rows=tuple(rows))
    validate_table(table)
    return table


def load_schema_sidecar(path: Union[str, Path], table_name: str = "") -> Schema:
    header, rows = _read_raw_csv(path)
    if header != ["name", "kind"]:
        raise IngestError(f"{path}: sidecar header must be 'name,kind'")
    columns = []
    for i, row in enumerate(rows):
        if len(row) != 2:
            raise IngestError(f"{path}: sidecar row {i} malformed")
        name, kind = row
        if kind not in _SIDE_KINDS:
            raise IngestError(f"{path}: unknown kind {kind!r} for column {name!r}")
        columns.append((name, _SIDE_KINDS[kind]))
    return Schema(table_name=table_name or Path(path).stem, columns=tuple(columns))


def write_schema_sidecar(schema: Schema, path: Union[str, Path]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "kind"])
        for name, kind in schema.columns:
            writer.writerow([name, kind.value])


def write_table_csv(table: Table, path: Union[str, Path]) -> None:
    """Render a Table back to CSV; numbers use shortest round-trip form."""
    from .encoders.linearize import render_value

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(table.schema.names)
        for row in table.rows:
            writer.writerow(["" if c is None else render_value(c) for c in row])


class Balance(Enum):
    AS_IS = "as-is"
    EQUAL_PER_ORIGIN = "equal-per-origin"


@dataclass(frozen=True)
class RealTableSpec:
    table_id: str
    csv_path: Optional[str] = None
    schema_path: Optional[str] = None


@dataclass(frozen=True)
class SyntheticTableSpec:
    table_id: str
    generator_id: str
    csv_path: Optional[str] = None


@dataclass(frozen=True)
class PoolSpec:
    real_tables: tuple[RealTableSpec, ...]
    synthetic_tables: tuple[SyntheticTableSpec, ...]
    balance: Balance = Balance.EQUAL_PER_ORIGIN


@dataclass(frozen=True)
class RowPool:
    """Labeled rows from many tables, ready for setup selection."""

    records: tuple[RowRecord, ...]
    table_ids: frozenset[str]
    generator_ids: frozenset[str]
    schemas: Mapping[str, Schema]

    def __len__(self) -> int:
        return len(self.records)

    def counts(self) -> dict[tuple[str, str], int]:
        out: dict[tuple[str, str], int] = {}
        for r in self.records:
            key = (r.table_id, r.origin.value)
            out[key] = out.get(key, 0) + 1
        return out


def load_pool_tables(spec: PoolSpec, base_dir: Union[str, Path] = ".") -> dict:
    """Load every CSV referenced by the spec, keyed for build_pool."""
    base = Path(base_dir)
    tables: dict = {}
    for rt in spec.real_tables:
        if rt.csv_path is None:
            raise IngestError(f"real table '{rt.table_id}' has no csv path")
        schema = None
        if rt.schema_path:
            schema = load_schema_sidecar(base / rt.schema_path, table_name=rt.table_id)
        tables[rt.table_id] = load_csv(base / rt.csv_path, schema=schema)
    for st in spec.synthetic_tables:
        if st.csv_path is None:
            raise IngestError(
                f"synthetic table '{st.table_id}' ({st.generator_id}) has no csv path"
            )
        real = tables.get(st.table_id)
        schema = real.schema if real is not None else None
        tables[(st.table_id, st.generator_id)] = load_csv(base / st.csv_path, schema=schema)
    return tables


def _same_columns(a: Schema, b: Schema) -> bool:
    return a.columns == b.columns or (a.names == b.names and a.kinds == b.kinds)


def build_pool(spec: PoolSpec, tables: Mapping, seed: int) -> RowPool:
    """Label every row with (table_id, origin, generator_id) and pool them.

    Under EQUAL_PER_ORIGIN the majority origin of each table is
    subsampled (seeded, uniform, without replacement) down to the
    minority count. Record order is a final seeded shuffle, so equal
    (spec, tables, seed) always yields the identical pool.
    """
    rng = np.random.default_rng(seed)
    schemas: dict[str, Schema] = {}
    by_table: dict[str, dict[str, list[RowRecord]]] = {}

    for rt in spec.real_tables:
        table: Table = tables[rt.table_id]
        schema = table.schema
        if schema.table_name != rt.table_id:
            # pool ids are authoritative (csv stems may differ)
            schema = replace(schema, table_name=rt.table_id)
        schemas[rt.table_id] = schema
        recs = [
            RowRecord(rt.table_id, Origin.REAL, None, row, schema, source_index=i)
            for i, row in enumerate(table.rows)
        ]
        by_table.setdefault(rt.table_id, {"real": [], "synthetic": []})["real"].extend(recs)

    generator_ids = set()
    for st in spec.synthetic_tables:
        if st.table_id not in schemas:
            raise SchemaMismatch(
                f"synthetic table '{st.table_id}' has no real counterpart in the pool"
            )
        table = tables[(st.table_id, st.generator_id)]
        real_schema = schemas[st.table_id]
        if not _same_columns(table.schema, real_schema):
            raise SchemaMismatch(
                f"'{st.table_id}' ({st.generator_id}): schema differs from real counterpart"
            )
        generator_ids.add(st.generator_id)
        recs = [
            RowRecord(st.table_id, Origin.SYNTHETIC, st.generator_id, row, real_schema, source_index=i)
            for i, row in enumerate(table.rows)
        ]
        by_table[st.table_id]["synthetic"].extend(recs)

    records: list[RowRecord] = []
    for table_id in sorted(by_table):
        groups = by_table[table_id]
        real, synth = groups["real"], groups["synthetic"]
        if spec.balance is Balance.EQUAL_PER_ORIGIN and real and synth:
            target = min(len(real), len(synth))
            for side in ("real", "synthetic"):
                rows = groups[side]
                if len(rows) > target:
                    keep = rng.choice(len(rows), size=target, replace=False)
                    groups[side] = [rows[i] for i in sorted(keep)]
            real, synth = groups["real"], groups["synthetic"]
        records.extend(real)
        records.extend(synth)

    order = rng.permutation(len(records))
    shuffled = tuple(records[i] for i in order)
    return RowPool(
        records=shuffled,
        table_ids=frozenset(by_table),
        generator_ids=frozenset(generator_ids),
        schemas=schemas,
    )
