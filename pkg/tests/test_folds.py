import numpy as np
import pytest

from tabdetect.data import ColumnKind, Origin, RowRecord, Schema
from tabdetect.errors import TooFewGroups, UnknownGenerator
from tabdetect.folds import (
    SetupSpec,
    make_folds,
    parse_setup,
    select_setup,
)
from tabdetect.ingest import RowPool


def make_pool(table_sizes: dict, generators=("gen",)):
    """table_sizes: table_id -> rows per origin (same count per generator)."""
    records = []
    schemas = {}
    for table_id, n in sorted(table_sizes.items()):
        schema = Schema(table_id, (("x", ColumnKind.NUMERICAL),))
        schemas[table_id] = schema
        for i in range(n):
            records.append(RowRecord(table_id, Origin.REAL, None, (float(i),), schema, i))
        for gen in generators:
            for i in range(n):
                records.append(
                    RowRecord(table_id, Origin.SYNTHETIC, gen, (float(i),), schema, i)
                )
    return RowPool(
        records=tuple(records),
        table_ids=frozenset(table_sizes),
        generator_ids=frozenset(generators),
        schemas=schemas,
    )


def test_parse_setup_variants():
    assert parse_setup("all_models_vs_real").kind == "all-models-vs-real"
    assert parse_setup("cross-table").grouped
    spec = parse_setup("tvae_vs_real")
    assert spec.kind == "generator-vs-real" and spec.generator_id == "tvae"
    with pytest.raises(ValueError):
        parse_setup("nonsense")


def test_select_generator_vs_real_filters_other_generators():
    pool = make_pool({"a": 10}, generators=("mr", "gf"))
    filtered = select_setup(pool, SetupSpec("generator-vs-real", "mr"))
    gens = {r.generator_id for r in filtered.records if r.generator_id}
    assert gens == {"mr"}
    # real rows plus one generator's rows
    assert len(filtered) == 20


def test_select_all_models_keeps_everything():
    pool = make_pool({"a": 10}, generators=("mr", "gf"))
    assert len(select_setup(pool, SetupSpec("all-models-vs-real"))) == 30


def test_select_unknown_generator():
    pool = make_pool({"a": 4})
    with pytest.raises(UnknownGenerator):
        select_setup(pool, SetupSpec("generator-vs-real", "tvae"))


def test_four_generators_give_five_no_shift_setups():
    # four per-generator setups plus the all-models pool
    pool = make_pool({"a": 8, "b": 8}, generators=("g1", "g2", "g3", "g4"))
    specs = [SetupSpec("generator-vs-real", g) for g in sorted(pool.generator_ids)]
    specs.append(SetupSpec("all-models-vs-real"))
    assert len(specs) == 5
    for spec in specs[:4]:
        selected = select_setup(pool, spec)
        assert {r.generator_id for r in selected.records if r.generator_id} == {
            spec.generator_id
        }
        assert len(selected) == 16 + 16  # real rows + one generator
    assert len(select_setup(pool, specs[4])) == len(pool)


def test_ungrouped_folds_are_balanced():
    pool = make_pool({"a": 150})  # 150 real + 150 synthetic
    plan = make_folds(pool, k=3, grouped=False, seed=0)
    sizes = sorted(len(test) for _, test in plan.folds)
    assert sizes == [100, 100, 100]


def test_folds_partition_the_pool():
    pool = make_pool({"a": 31, "b": 17})
    plan = make_folds(pool, k=3, grouped=False, seed=5)
    n = len(pool.records)
    seen = np.concatenate([test for _, test in plan.folds])
    assert sorted(seen.tolist()) == list(range(n))
    for train, test in plan.folds:
        assert len(np.intersect1d(train, test)) == 0
        assert len(train) + len(test) == n


def test_ungrouped_folds_stratify_origins():
    pool = make_pool({"a": 90})
    plan = make_folds(pool, k=3, grouped=False, seed=2)
    for _, test in plan.folds:
        origins = [pool.records[i].origin for i in test]
        n_real = sum(1 for o in origins if o is Origin.REAL)
        assert n_real == 30  # exactly a third of each stratum


def test_grouped_folds_keep_tables_together():
    pool = make_pool({"adult": 12, "cardio": 12, "king": 12}, generators=("tvae", "ddpm"))
    plan = make_folds(pool, k=3, grouped=True, seed=1)
    for train, test in plan.folds:
        train_tables = {pool.records[i].table_id for i in train}
        test_tables = {pool.records[i].table_id for i in test}
        assert not train_tables & test_tables
        # one test table per fold here; all its origins travel together
        assert len(test_tables) == 1
        table = test_tables.pop()
        expected = 12 * 3  # real + two generators
        assert len(test) == expected
        assert train_tables == set(pool.table_ids) - {table}


def test_grouped_test_sets_partition_tables():
    pool = make_pool({f"t{i}": 6 for i in range(7)})
    plan = make_folds(pool, k=3, grouped=True, seed=9)
    covered = set()
    for _, test in plan.folds:
        tables = {pool.records[i].table_id for i in test}
        assert not tables & covered
        covered |= tables
    assert covered == set(pool.table_ids)


def test_grouped_needs_enough_tables():
    pool = make_pool({"a": 5, "b": 5})
    with pytest.raises(TooFewGroups):
        make_folds(pool, k=3, grouped=True, seed=0)


def test_folds_deterministic_per_seed():
    pool = make_pool({"a": 40, "b": 28})
    a = make_folds(pool, k=3, grouped=False, seed=7)
    b = make_folds(pool, k=3, grouped=False, seed=7)
    for (ta, sa), (tb, sb) in zip(a.folds, b.folds):
        assert np.array_equal(ta, tb) and np.array_equal(sa, sb)
    c = make_folds(pool, k=3, grouped=False, seed=8)
    assert any(
        not np.array_equal(sa, sc) for (_, sa), (_, sc) in zip(a.folds, c.folds)
    )


def test_random_grouped_pools_never_leak_tables():
    # mini version of the acceptance sweep
    rng = np.random.default_rng(0)
    for trial in range(20):
        n_tables = int(rng.integers(3, 15))
        sizes = {f"t{j}": int(rng.integers(3, 12)) for j in range(n_tables)}
        pool = make_pool(sizes)
        plan = make_folds(pool, k=3, grouped=True, seed=trial)
        covered = set()
        for train, test in plan.folds:
            train_tables = {pool.records[i].table_id for i in train}
            test_tables = {pool.records[i].table_id for i in test}
            assert not train_tables & test_tables
            assert not test_tables & covered
            covered |= test_tables
        assert covered == set(pool.table_ids)
