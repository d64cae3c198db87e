"""Desk-scale synthetic-row generators.

Three kinds, graded by detectability: MARGINAL_RESAMPLE destroys all
inter-column dependence, GAUSSIAN_FREQUENCY replaces each column by a
parametric marginal, NOISY_COPY perturbs real rows (undetectable at
noise_scale=0). All are fitted on the full real table and sample
deterministically per seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
import numpy as np

from .data import Cell, ColumnKind, Schema, Table, validate_table
from .errors import EmptyTableError, MissingCellError


class GeneratorKind(Enum):
    MARGINAL_RESAMPLE = "marginal-resample"
    GAUSSIAN_FREQUENCY = "gaussian-frequency"
    NOISY_COPY = "noisy-copy"


@dataclass(frozen=True)
class FittedGenerator:
    kind: GeneratorKind
    schema: Schema
    noise_scale: float = 0.0
    # MARGINAL_RESAMPLE: per column, the sorted multiset of observed values.
    column_values: dict = field(default_factory=dict)
    # GAUSSIAN_FREQUENCY: numeric (mean, std) and categorical (levels, freqs).
    numeric_stats: dict = field(default_factory=dict)
    category_freqs: dict = field(default_factory=dict)
    # NOISY_COPY: the source rows plus per-numeric-column std for scaling.
    source_rows: tuple = ()


def fit_generator(
    kind: GeneratorKind, table: Table, noise_scale: float = 0.0
) -> FittedGenerator:
    """Collect the per-column state one generator kind needs."""
    if table.n_rows < 2:
        raise EmptyTableError("generator fitting needs at least 2 rows")
    if any(cell is None for row in table.rows for cell in row):
        raise MissingCellError("generator fitting requires complete rows")
    if not np.isfinite(noise_scale) or noise_scale < 0:
        raise ValueError("noise_scale must be finite and >= 0")

    schema = table.schema
    column_values: dict = {}
    numeric_stats: dict = {}
    category_freqs: dict = {}

    for j, (_, col_kind) in enumerate(schema.columns):
        col = table.column(j)
        if col_kind is ColumnKind.NUMERICAL:
            values = np.sort(np.asarray(col, dtype=np.float64))
            column_values[j] = values
            numeric_stats[j] = (float(values.mean()), float(values.std()))
        else:
            values = sorted(col)
            column_values[j] = tuple(values)
            levels, counts = np.unique(np.asarray(values, dtype=object), return_counts=True)
            freqs = counts / counts.sum()
            assert abs(freqs.sum() - 1.0) < 1e-9
            category_freqs[j] = (tuple(str(v) for v in levels), freqs)

    return FittedGenerator(
        kind=kind,
        schema=schema,
        noise_scale=noise_scale,
        column_values=column_values,
        numeric_stats=numeric_stats,
        category_freqs=category_freqs,
        source_rows=table.rows if kind is GeneratorKind.NOISY_COPY else (),
    )


def sample_synthetic(g: FittedGenerator, n: int, seed: int) -> Table:
    """Draw n rows under g's schema; identical (g, n, seed) give identical tables."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    schema = g.schema

    if g.kind is GeneratorKind.NOISY_COPY:
        picks = rng.integers(0, len(g.source_rows), size=n)
        columns: list[list[Cell]] = [list() for _ in schema.columns]
        for j, (_, col_kind) in enumerate(schema.columns):
            base = [g.source_rows[i][j] for i in picks]
            if col_kind is ColumnKind.NUMERICAL:
                std = g.numeric_stats[j][1]
                scale = g.noise_scale * std
                if scale > 0:
                    noise = rng.normal(0.0, scale, size=n)
                    base = [float(x + e) for x, e in zip(base, noise)]
            columns[j] = base
    else:
        columns = []
        for j, (_, col_kind) in enumerate(schema.columns):
            if g.kind is GeneratorKind.MARGINAL_RESAMPLE:
                values = g.column_values[j]
                idx = rng.integers(0, len(values), size=n)
                if col_kind is ColumnKind.NUMERICAL:
                    columns.append([float(values[i]) for i in idx])
                else:
                    columns.append([values[i] for i in idx])
            elif col_kind is ColumnKind.NUMERICAL:
                mean, std = g.numeric_stats[j]
                draws = rng.normal(mean, std, size=n) if std > 0 else np.full(n, mean)
                columns.append([float(x) for x in draws])
            else:
                levels, freqs = g.category_freqs[j]
                idx = rng.choice(len(levels), size=n, p=freqs)
                columns.append([levels[i] for i in idx])

    rows = tuple(tuple(columns[j][i] for j in range(len(schema))) for i in range(n))
    out = Table(schema=schema, rows=rows)
    validate_table(out)
    return out


def parse_generator_kind(name: str) -> GeneratorKind:
    normalized = name.strip().lower().replace("_", "-")
    for kind in GeneratorKind:
        if kind.value == normalized:
            return kind
    raise ValueError(f"unknown generator kind {name!r}")
