"""Detection setups and cross-validation fold construction.

Ungrouped folds stratify by (table_id, origin). Grouped folds partition
table ids so no table appears on both sides of any fold: the real rows
and every synthetic version of a table travel together.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Origin
from .errors import TooFewGroups, UnknownGenerator
from .ingest import RowPool

SETUP_ALL_MODELS = "all-models-vs-real"
SETUP_CROSS_TABLE = "cross-table"


@dataclass(frozen=True)
class SetupSpec:
    kind: str  # "generator-vs-real" | "all-models-vs-real" | "cross-table"
    generator_id: Optional[str] = None

    @property
    def name(self) -> str:
        if self.kind == "generator-vs-real":
            return f"{self.generator_id}-vs-real"
        return self.kind

    @property
    def grouped(self) -> bool:
        return self.kind == SETUP_CROSS_TABLE


def parse_setup(raw: str) -> SetupSpec:
    name = raw.strip().lower().replace("_", "-")
    if name == SETUP_ALL_MODELS:
        return SetupSpec(kind=SETUP_ALL_MODELS)
    if name == SETUP_CROSS_TABLE:
        return SetupSpec(kind=SETUP_CROSS_TABLE)
    if name.endswith("-vs-real") and len(name) > len("-vs-real"):
        return SetupSpec(kind="generator-vs-real", generator_id=name[: -len("-vs-real")])
    raise ValueError(f"unknown setup {raw!r}")


def select_setup(pool: RowPool, spec: SetupSpec) -> RowPool:
    """Restrict the pool to the rows a setup compares."""
    if spec.kind == "generator-vs-real":
        if spec.generator_id not in pool.generator_ids:
            raise UnknownGenerator(
                f"generator '{spec.generator_id}' not in pool {sorted(pool.generator_ids)}"
            )
        records = tuple(
            r
            for r in pool.records
            if r.origin is Origin.REAL or r.generator_id == spec.generator_id
        )
        return RowPool(
            records=records,
            table_ids=pool.table_ids,
            generator_ids=frozenset({spec.generator_id}),
            schemas=pool.schemas,
        )
    # all-models-vs-real and cross-table keep everything; rows are already
    # labeled real/synthetic only
    return pool


@dataclass(frozen=True)
class FoldPlan:
    folds: tuple[tuple[np.ndarray, np.ndarray], ...]
    grouped: bool

    def __post_init__(self):
        for train, test in self.folds:
            if np.intersect1d(train, test).size:
                raise ValueError("fold train/test overlap")


def make_folds(pool: RowPool, k: int = 3, grouped: bool = False, seed: int = 0) -> FoldPlan:
    """Split pool indices into k folds.

    Ungrouped: seeded shuffle within each (table_id, origin) stratum,
    dealt round-robin, so fold sizes differ by at most the stratum
    count. Grouped: table ids are partitioned instead, and a fold tests
    on every row (real and synthetic) of its tables.
    """
    rng = np.random.default_rng(seed)
    n = len(pool.records)
    assignment = np.zeros(n, dtype=np.int64)

    if grouped:
        table_ids = sorted(pool.table_ids)
        if len(table_ids) < k:
            raise TooFewGroups(f"grouped folding needs >= {k} tables, have {len(table_ids)}")
        order = rng.permutation(len(table_ids))
        group_of = {table_ids[j]: int(i % k) for i, j in enumerate(order)}
        for i, record in enumerate(pool.records):
            assignment[i] = group_of[record.table_id]
    else:
        strata: dict = {}
        for i, record in enumerate(pool.records):
            strata.setdefault((record.table_id, record.origin.value), []).append(i)
        for offset, key in enumerate(sorted(strata)):
            members = np.array(strata[key])
            members = members[rng.permutation(len(members))]
            assignment[members] = (np.arange(len(members)) + offset) % k

    folds = []
    everything = np.arange(n)
    for fold in range(k):
        test = everything[assignment == fold]
        train = everything[assignment != fold]
        folds.append((train, test))
    return FoldPlan(folds=tuple(folds), grouped=grouped)
