"""Experiment runner: the setup x encoder x detector x fold grid.

All randomness is derived from the plan seed plus structural names, so
any job scheduling order produces identical results. Every fitted
artifact (vocab, codec, model) is audited against the fold's training
rows; the one sanctioned exception is the label-free codec fit on the
rows of unseen tables under cross-table shift, which mirrors deploying
the detector on a table it must encode somehow.

Fixture-backed synthetic sources are re-sampled per fold with
fold-specific seeds (three folds = three generation runs); CSV-backed
sources are fixed data that the folds re-split.
"""
from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .config import ExperimentPlan
from .data import RowRecord, Table
from .detectors import (
    COMPATIBLE_ENCODERS,
    TrainConfig,
    bags_to_csr,
    columnvecs_to_dense,
    predict_gbdt,
    predict_logistic,
    predict_transformer,
    tokenseqs_to_dense,
    train_column_transformer,
    train_gbdt,
    train_logistic,
    train_text_transformer,
)
from .encoders import (
    Vocab,
    apply_column_codec,
    build_vocab,
    char_trigram_bag,
    char_trigrams,
    fit_column_codec,
    linearize_row,
    stable_row_seed,
    tokenize_flat_text,
    word_trigram_bag,
    word_trigrams,
)
from .errors import EmptyTableError, TabDetectError
from .fixtures import fit_generator, sample_synthetic
from .folds import SetupSpec, make_folds, select_setup
from .ingest import PoolSpec, RowPool, SyntheticTableSpec, build_pool, load_pool_tables
from .metrics import accuracy_f1, roc_auc

DISPLAY_MODEL = {"logistic": "LReg", "gbdt": "GBDT", "transformer": "Transf."}
DISPLAY_ENCODING = {
    "3gram-char": "3gram-char",
    "3gram-word": "3gram-word",
    "flat-text": "Flat Text",
    "column": "Column",
}

REPORT_SCHEMA_VERSION = 1


def derive_seed(*parts) -> int:
    digest = hashlib.blake2b("|".join(map(str, parts)).encode(), digest_size=8)
    return int.from_bytes(digest.digest(), "little") >> 1


def _uid_digest(items) -> str:
    digest = hashlib.blake2b(digest_size=16)
    for item in sorted(map(str, items)):
        digest.update(item.encode())
        digest.update(b"\x00")
    return digest.hexdigest()


# --- leakage audit ------------------------------------------------------------


@dataclass(frozen=True)
class ArtifactRecord:
    """Provenance of one fitted artifact."""

    setup: str
    fold: int
    encoder: str
    detector: str
    kind: str  # "vocab" | "codec" | "model"
    fingerprint: str
    used_labels: bool
    table_scope: str
    consumed_uids: frozenset

    def to_json(self) -> dict:
        return {
            "setup": self.setup,
            "fold": self.fold,
            "encoder": self.encoder,
            "detector": self.detector,
            "kind": self.kind,
            "fingerprint": self.fingerprint,
            "used_labels": self.used_labels,
            "table_scope": self.table_scope,
            "n_consumed": len(self.consumed_uids),
            "consumed_digest": _uid_digest(self.consumed_uids),
        }


@dataclass(frozen=True)
class FoldContext:
    setup: str
    fold: int
    grouped: bool
    train_uids: frozenset
    test_uids: frozenset
    test_tables: frozenset


def verify_no_leakage(
    records: Sequence[ArtifactRecord], contexts: Sequence[FoldContext]
) -> list[str]:
    """One violation message per artifact that consumed non-training rows
    outside the sanctioned cross-table codec exception."""
    ctx = {(c.setup, c.fold): c for c in contexts}
    violations = []
    for rec in records:
        c = ctx[(rec.setup, rec.fold)]
        if rec.consumed_uids <= c.train_uids:
            continue
        sanctioned = (
            rec.kind == "codec"
            and c.grouped
            and not rec.used_labels
            and rec.table_scope in c.test_tables
            and rec.consumed_uids <= c.test_uids
        )
        if not sanctioned:
            violations.append(
                f"{rec.kind} for {rec.setup}/fold{rec.fold}/{rec.encoder}"
                f"/{rec.detector or '-'} consumed non-training rows"
            )
    return violations


# --- encoding per fold -----------------------------------------------------------


def _eval_seed(record: RowRecord) -> int:
    tag = f"{record.table_id}|{record.origin.value}|{record.generator_id or ''}"
    return stable_row_seed(tag, record.source_index)


@dataclass
class EncodedFold:
    """Encodings of one (setup, fold, encoder), shared by all detectors."""

    kind: str  # "bag" | "tokens" | "column"
    train_items: list
    test_items: list
    n_features: int
    vocab: Optional[Vocab] = None
    reencode: Optional[Callable[[int], list]] = None
    audit: list = field(default_factory=list)


def _encode_fold(
    pool: RowPool,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    encoder: str,
    plan: ExperimentPlan,
    setup: SetupSpec,
    fold: int,
) -> EncodedFold:
    records = pool.records
    train_uids = frozenset(records[i].uid for i in train_idx)

    if encoder == "column":
        return _encode_column(pool, train_idx, test_idx, plan, setup, fold)

    lin = {
        int(i): linearize_row(records[i], seed=_eval_seed(records[i]))
        for i in np.concatenate([train_idx, test_idx])
    }

    if encoder == "3gram-char":
        streams = (char_trigrams(lin[int(i)].text) for i in train_idx)
    elif encoder == "3gram-word":
        streams = (word_trigrams(lin[int(i)].text) for i in train_idx)
    elif encoder == "flat-text":
        streams = (iter(lin[int(i)].text) for i in train_idx)
    else:
        raise ValueError(f"unknown encoder {encoder!r}")
    vocab = build_vocab(streams, plan.encoding.vocab_cap)
    audit = [
        ArtifactRecord(
            setup=setup.name,
            fold=fold,
            encoder=encoder,
            detector="",
            kind="vocab",
            fingerprint=vocab.fingerprint,
            used_labels=False,
            table_scope="",
            consumed_uids=train_uids,
        )
    ]

    if encoder == "flat-text":
        def tokens(i) -> object:
            return tokenize_flat_text(lin[int(i)], vocab, plan.encoding.max_len)

        def reencode_train(epoch: int) -> list:
            # per-epoch column permutation, training rows only
            out = []
            for i in train_idx:
                r = records[i]
                fresh = linearize_row(r, seed=derive_seed(plan.seed, "aug", epoch, *r.uid))
                out.append(tokenize_flat_text(fresh, vocab, plan.encoding.max_len))
            return out

        return EncodedFold(
            kind="tokens",
            train_items=[tokens(i) for i in train_idx],
            test_items=[tokens(i) for i in test_idx],
            n_features=plan.encoding.max_len,
            vocab=vocab,
            reencode=reencode_train,
            audit=audit,
        )

    def encode_bag(i) -> object:
        if encoder == "3gram-char":
            return char_trigram_bag(lin[int(i)].text, vocab)
        return word_trigram_bag(lin[int(i)], vocab)

    return EncodedFold(
        kind="bag",
        train_items=[encode_bag(i) for i in train_idx],
        test_items=[encode_bag(i) for i in test_idx],
        n_features=vocab.size,
        vocab=vocab,
        audit=audit,
    )


def _encode_column(
    pool: RowPool,
    train_idx: np.ndarray,
    test_idx: np.ndarray,
    plan: ExperimentPlan,
    setup: SetupSpec,
    fold: int,
) -> EncodedFold:
    records = pool.records
    by_table_train: dict[str, list] = {}
    for i in train_idx:
        by_table_train.setdefault(records[i].table_id, []).append(records[i])
    by_table_test: dict[str, list] = {}
    for i in test_idx:
        by_table_test.setdefault(records[i].table_id, []).append(records[i])

    codecs = {}
    audit = []
    for table_id in sorted(set(by_table_train) | set(by_table_test)):
        if table_id in by_table_train:
            source = by_table_train[table_id]
        elif setup.grouped:
            # unseen table at deployment: label-free fit on its own rows
            source = by_table_test[table_id]
        else:
            raise EmptyTableError(f"table '{table_id}' has no training rows")
        table = Table(schema=pool.schemas[table_id], rows=tuple(r.cells for r in source))
        codec = fit_column_codec(table)
        codecs[table_id] = codec
        audit.append(
            ArtifactRecord(
                setup=setup.name,
                fold=fold,
                encoder="column",
                detector="",
                kind="codec",
                fingerprint=codec.fingerprint,
                used_labels=False,
                table_scope=table_id,
                consumed_uids=frozenset(r.uid for r in source),
            )
        )

    def encode(i) -> object:
        r = records[i]
        return apply_column_codec(
            codecs[r.table_id], r, plan.encoding.d_num, plan.encoding.d_cat
        )

    return EncodedFold(
        kind="column",
        train_items=[encode(i) for i in train_idx],
        test_items=[encode(i) for i in test_idx],
        n_features=2 * (plan.encoding.d_num + plan.encoding.d_cat),
        audit=audit,
    )


def _matrix(items: list, kind: str, n_features: int, plan: ExperimentPlan):
    if kind == "bag":
        return bags_to_csr(items, n_features)
    if kind == "tokens":
        return tokenseqs_to_dense(items, plan.encoding.max_len)
    return columnvecs_to_dense(items)


def _train_detector(
    detector: str,
    enc: EncodedFold,
    y_train: np.ndarray,
    strata: list,
    cfg: TrainConfig,
    plan: ExperimentPlan,
):
    if detector == "logistic":
        X_train = _matrix(enc.train_items, enc.kind, enc.n_features, plan)
        space = enc.vocab.fingerprint if enc.vocab else f"dense:{X_train.shape[1]}"
        return train_logistic(X_train, y_train, cfg, feature_space_id=space, strata=strata)
    if detector == "gbdt":
        X_train = _matrix(enc.train_items, enc.kind, enc.n_features, plan)
        space = enc.vocab.fingerprint if enc.vocab else f"dense:{X_train.shape[1]}"
        return train_gbdt(X_train, y_train, cfg, feature_space_id=space)
    if detector == "transformer":
        if enc.kind == "column":
            return train_column_transformer(enc.train_items, y_train, cfg, strata=strata)
        return train_text_transformer(
            enc.train_items,
            y_train,
            cfg,
            vocab_size=enc.vocab.size,
            strata=strata,
            reencode=enc.reencode,
        )
    raise ValueError(f"unknown detector {detector!r}")


def _score_detector(detector: str, model, enc: EncodedFold, plan: ExperimentPlan) -> np.ndarray:
    if detector == "logistic":
        return predict_logistic(model, _matrix(enc.test_items, enc.kind, enc.n_features, plan))
    if detector == "gbdt":
        return predict_gbdt(model, _matrix(enc.test_items, enc.kind, enc.n_features, plan))
    return predict_transformer(model, enc.test_items)


def _run_detector(
    detector: str,
    enc: EncodedFold,
    y_train: np.ndarray,
    strata: list,
    cfg: TrainConfig,
    plan: ExperimentPlan,
) -> np.ndarray:
    """Train one detector on the encoded fold and score the test items."""
    model = _train_detector(detector, enc, y_train, strata, cfg, plan)
    return _score_detector(detector, model, enc, plan)


# --- pool materialization ----------------------------------------------------------


def _materialize_tables(plan: ExperimentPlan, preloaded: Optional[dict]) -> tuple[dict, dict]:
    """Load static tables once and fit fixture generators on the real data."""
    spec = PoolSpec(
        real_tables=plan.real_tables,
        synthetic_tables=tuple(
            SyntheticTableSpec(s.table_id, s.generator_id, s.csv_path)
            for s in plan.synthetic_sources
            if not s.is_fixture
        ),
        balance=plan.balance,
    )
    if preloaded is not None:
        static = dict(preloaded)
    else:
        static = load_pool_tables(spec, base_dir=plan.base_dir)

    fitted = {}
    for src in plan.synthetic_sources:
        if src.is_fixture:
            real = static[src.table_id]
            fitted[(src.table_id, src.generator_id)] = fit_generator(
                src.fixture_kind, real, noise_scale=src.noise_scale
            )
    return static, fitted


def _fold_tables(plan: ExperimentPlan, static: dict, fitted: dict, fold: int) -> dict:
    tables = dict(static)
    for src in plan.synthetic_sources:
        if not src.is_fixture:
            continue
        key = (src.table_id, src.generator_id)
        n = src.n if src.n else static[src.table_id].n_rows
        seed = derive_seed(plan.seed, "synth", src.table_id, src.generator_id, fold)
        tables[key] = sample_synthetic(fitted[key], n, seed)
    return tables


def _fold_pool(plan: ExperimentPlan, static: dict, fitted: dict, fold: int) -> RowPool:
    spec = PoolSpec(
        real_tables=plan.real_tables,
        synthetic_tables=tuple(
            SyntheticTableSpec(s.table_id, s.generator_id, s.csv_path)
            for s in plan.synthetic_sources
        ),
        balance=plan.balance,
    )
    tables = _fold_tables(plan, static, fitted, fold)
    # pool build seed is fold-independent so CSV-only plans re-split one
    # fixed pool; fixture plans differ per fold through the data itself
    return build_pool(spec, tables, seed=derive_seed(plan.seed, "pool"))


# --- report ---------------------------------------------------------------------


@dataclass
class Report:
    body: dict  # deterministic content
    timing: dict  # the one non-deterministic section
    audit_records: list = field(default_factory=list)
    contexts: list = field(default_factory=list)

    def to_json(self) -> str:
        payload = dict(self.body)
        payload["timing"] = self.timing
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def render_text(self) -> str:
        lines = []
        header = f"{'Setup':<26} {'Model':<8} {'Encoding':<11} {'AUC':<14} {'Accuracy':<14} {'F1':<14}"
        lines.append(header)
        lines.append("-" * len(header))
        for cell in self.body["cells"]:
            if cell.get("error"):
                metrics = f"error: {cell['error']}"
                lines.append(
                    f"{cell['setup']:<26} {DISPLAY_MODEL[cell['detector']]:<8} "
                    f"{DISPLAY_ENCODING[cell['encoder']]:<11} {metrics}"
                )
                continue
            cols = []
            for metric in ("auc", "accuracy", "f1"):
                cols.append(f"{cell[metric + '_mean']:.2f} ± {cell[metric + '_std']:.2f}")
            lines.append(
                f"{cell['setup']:<26} {DISPLAY_MODEL[cell['detector']]:<8} "
                f"{DISPLAY_ENCODING[cell['encoder']]:<11} "
                f"{cols[0]:<14} {cols[1]:<14} {cols[2]:<14}"
            )
        return "\n".join(lines) + "\n"

    def render_markdown(self) -> str:
        lines = [
            "| Setup | Model | Encoding | AUC | Accuracy | F1 |",
            "|---|---|---|---|---|---|",
        ]
        for cell in self.body["cells"]:
            if cell.get("error"):
                row = f"| {cell['setup']} | {DISPLAY_MODEL[cell['detector']]} | {DISPLAY_ENCODING[cell['encoder']]} | error: {cell['error']} | | |"
            else:
                vals = [
                    f"{cell[m + '_mean']:.2f} ± {cell[m + '_std']:.2f}"
                    for m in ("auc", "accuracy", "f1")
                ]
                row = (
                    f"| {cell['setup']} | {DISPLAY_MODEL[cell['detector']]} | "
                    f"{DISPLAY_ENCODING[cell['encoder']]} | {vals[0]} | {vals[1]} | {vals[2]} |"
                )
            lines.append(row)
        return "\n".join(lines) + "\n"

    def cell(self, setup: str, encoder: str, detector: str) -> dict:
        for cell in self.body["cells"]:
            if (cell["setup"], cell["encoder"], cell["detector"]) == (setup, encoder, detector):
                return cell
        raise KeyError((setup, encoder, detector))


def _grid(plan: ExperimentPlan) -> list[tuple[str, str]]:
    pairs = []
    for detector in plan.detectors:
        for encoder in plan.encoders:
            if encoder in COMPATIBLE_ENCODERS[detector]:
                pairs.append((detector, encoder))
    return pairs


def run_experiment(
    plan: ExperimentPlan,
    preloaded_tables: Optional[dict] = None,
    jobs: int = 1,
) -> Report:
    """Run the full grid and assemble the report.

    Per fold: encoders and vocab/codec artifacts are fitted on the
    training split only, detectors are trained and scored, and metrics
    are aggregated as mean +/- std (population) over folds.
    """
    t_start = time.perf_counter()
    static, fitted = _materialize_tables(plan, preloaded_tables)
    pools = [_fold_pool(plan, static, fitted, fold) for fold in range(plan.folds)]

    # fold contexts per setup
    split_info = {}
    contexts = []
    for setup in plan.setups:
        fold_seed = derive_seed(plan.seed, "folds", setup.name)
        for fold in range(plan.folds):
            filtered = select_setup(pools[fold], setup)
            fold_plan = make_folds(filtered, plan.folds, setup.grouped, seed=fold_seed)
            train_idx, test_idx = fold_plan.folds[fold]
            records = filtered.records
            train_uids = frozenset(records[i].uid for i in train_idx)
            test_uids = frozenset(records[i].uid for i in test_idx)
            test_tables = frozenset(records[i].table_id for i in test_idx)
            split_info[(setup.name, fold)] = (filtered, train_idx, test_idx)
            contexts.append(
                FoldContext(
                    setup=setup.name,
                    fold=fold,
                    grouped=setup.grouped,
                    train_uids=train_uids,
                    test_uids=test_uids,
                    test_tables=test_tables,
                )
            )

    setup_by_name = {s.name: s for s in plan.setups}
    grid = _grid(plan)

    def job(args: tuple[str, int, str]) -> dict:
        setup_name, fold, encoder = args
        setup = setup_by_name[setup_name]
        filtered, train_idx, test_idx = split_info[(setup_name, fold)]
        records = filtered.records
        y_train = np.array(
            [1.0 if records[i].origin.value == "synthetic" else 0.0 for i in train_idx]
        )
        y_test = np.array(
            [1 if records[i].origin.value == "synthetic" else 0 for i in test_idx]
        )
        strata = [(records[i].table_id, records[i].origin.value) for i in train_idx]
        out: dict = {"args": args, "results": {}, "audit": [], "seconds": {}}
        try:
            enc = _encode_fold(filtered, train_idx, test_idx, encoder, plan, setup, fold)
        except TabDetectError as exc:
            for detector, enc_name in grid:
                if enc_name == encoder:
                    out["results"][detector] = {"error": f"{type(exc).__name__}: {exc}"}
            return out
        out["audit"].extend(enc.audit)
        train_uids = frozenset(records[i].uid for i in train_idx)
        for detector, enc_name in grid:
            if enc_name != encoder:
                continue
            cfg = plan.train.with_seed(
                derive_seed(plan.seed, "train", setup_name, encoder, detector, fold)
            )
            t0 = time.perf_counter()
            try:
                scores = _run_detector(detector, enc, y_train, strata, cfg, plan)
                auc = roc_auc(scores, y_test)
                accuracy, f1 = accuracy_f1(scores, y_test)
                out["results"][detector] = {
                    "auc": auc,
                    "accuracy": accuracy,
                    "f1": f1,
                }
                out["audit"].append(
                    ArtifactRecord(
                        setup=setup_name,
                        fold=fold,
                        encoder=encoder,
                        detector=detector,
                        kind="model",
                        fingerprint=_uid_digest([float(np.sum(scores))]),
                        used_labels=True,
                        table_scope="",
                        consumed_uids=train_uids,
                    )
                )
            except TabDetectError as exc:
                out["results"][detector] = {"error": f"{type(exc).__name__}: {exc}"}
            out["seconds"][detector] = time.perf_counter() - t0
        return out

    job_args = [
        (setup.name, fold, encoder)
        for setup in plan.setups
        for fold in range(plan.folds)
        for encoder in sorted({enc for _, enc in grid if enc in plan.encoders})
    ]

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            job_outputs = list(pool.map(job, job_args))
    else:
        job_outputs = [job(args) for args in job_args]

    # aggregate into cells, deterministic order
    cells: dict[tuple, dict] = {}
    audit_records: list[ArtifactRecord] = []
    timing_cells: dict[str, float] = {}
    for out in job_outputs:
        setup_name, fold, encoder = out["args"]
        audit_records.extend(out["audit"])
        for detector, result in out["results"].items():
            key = (setup_name, encoder, detector)
            cell = cells.setdefault(key, {"per_fold": [None] * plan.folds, "errors": []})
            if "error" in result:
                cell["errors"].append(f"fold {fold}: {result['error']}")
            else:
                cell["per_fold"][fold] = result
        for detector, seconds in out["seconds"].items():
            timing_cells[f"{setup_name}|{encoder}|{detector}|fold{fold}"] = round(seconds, 3)

    cell_list = []
    for setup in plan.setups:
        for detector in plan.detectors:
            for encoder in plan.encoders:
                if (detector, encoder) not in grid:
                    continue
                key = (setup.name, encoder, detector)
                if key not in cells:
                    continue
                raw = cells[key]
                entry: dict = {
                    "setup": setup.name,
                    "encoder": encoder,
                    "detector": detector,
                    "error": raw["errors"][0] if raw["errors"] else None,
                    "per_fold": [m for m in raw["per_fold"] if m is not None],
                }
                if entry["per_fold"] and not entry["error"]:
                    for metric in ("auc", "accuracy", "f1"):
                        values = np.array([m[metric] for m in entry["per_fold"]])
                        entry[f"{metric}_mean"] = float(values.mean())
                        entry[f"{metric}_std"] = float(values.std())
                cell_list.append(entry)

    violations = verify_no_leakage(audit_records, contexts)

    body = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config_fingerprint": plan.fingerprint(),
        "seed": plan.seed,
        "folds": plan.folds,
        "setups": [s.name for s in plan.setups],
        "encoders": list(plan.encoders),
        "detectors": list(plan.detectors),
        "cells": cell_list,
        "audit": {
            "entries": [rec.to_json() for rec in audit_records],
            "violations": violations,
            "verified": not violations,
        },
    }
    timing = {
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "total_s": round(time.perf_counter() - t_start, 3),
        "cells": timing_cells,
    }
    return Report(body=body, timing=timing, audit_records=audit_records, contexts=contexts)


def train_full_models(plan: ExperimentPlan, preloaded_tables: Optional[dict] = None) -> dict:
    """Train every grid cell on the complete pool (no held-out fold).

    Returns {(setup, encoder, detector): model}, for model export.
    """
    static, fitted = _materialize_tables(plan, preloaded_tables)
    pool = _fold_pool(plan, static, fitted, fold=0)
    models: dict = {}
    for setup in plan.setups:
        filtered = select_setup(pool, setup)
        records = filtered.records
        all_idx = np.arange(len(records))
        none_idx = np.array([], dtype=np.int64)
        y = np.array([1.0 if r.origin.value == "synthetic" else 0.0 for r in records])
        strata = [(r.table_id, r.origin.value) for r in records]
        for encoder in plan.encoders:
            enc = _encode_fold(filtered, all_idx, none_idx, encoder, plan, setup, fold=0)
            for detector in plan.detectors:
                if encoder not in COMPATIBLE_ENCODERS[detector]:
                    continue
                cfg = plan.train.with_seed(
                    derive_seed(plan.seed, "train", setup.name, encoder, detector, "full")
                )
                models[(setup.name, encoder, detector)] = _train_detector(
                    detector, enc, y, strata, cfg, plan
                )
    return models


def write_report(report: Report, out_dir) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    json_path = out / "report.json"
    text_path = out / "report.txt"
    json_path.write_text(report.to_json(), encoding="utf-8")
    text_path.write_text(report.render_text(), encoding="utf-8")
    return json_path, text_path
