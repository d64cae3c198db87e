"""Experiment configuration: TOML on disk, ExperimentPlan in memory.

Synthetic pool entries either point at a CSV (fixed rows, folds re-split
them) or name a fixture generator (rows are re-sampled per fold with
fold-specific seeds).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .detectors import COMPATIBLE_ENCODERS, DETECTOR_NAMES, TrainConfig
from .encoders import ENCODER_NAMES
from .errors import ConfigError
from .fixtures import GeneratorKind, parse_generator_kind
from .folds import SETUP_ALL_MODELS, SetupSpec, parse_setup
from .ingest import Balance, RealTableSpec


@dataclass(frozen=True)
class SyntheticSource:
    table_id: str
    generator_id: str
    csv_path: Optional[str] = None
    fixture_kind: Optional[GeneratorKind] = None
    n: Optional[int] = None
    noise_scale: float = 0.0

    @property
    def is_fixture(self) -> bool:
        return self.fixture_kind is not None


@dataclass(frozen=True)
class EncodingParams:
    d_num: int = 50
    d_cat: int = 10
    max_len: int = 512
    vocab_cap: int = 2**18


@dataclass(frozen=True)
class ExperimentPlan:
    real_tables: tuple[RealTableSpec, ...]
    synthetic_sources: tuple[SyntheticSource, ...]
    balance: Balance = Balance.EQUAL_PER_ORIGIN
    setups: tuple[SetupSpec, ...] = (SetupSpec(kind=SETUP_ALL_MODELS),)
    encoders: tuple[str, ...] = ENCODER_NAMES
    detectors: tuple[str, ...] = DETECTOR_NAMES
    folds: int = 3
    seed: int = 0
    out_dir: str = "out"
    encoding: EncodingParams = EncodingParams()
    train: TrainConfig = TrainConfig()
    base_dir: str = "."

    def fingerprint(self) -> str:
        blob = json.dumps(_plan_signature(self), sort_keys=True).encode()
        return hashlib.blake2b(blob, digest_size=16).hexdigest()


def _plan_signature(plan: ExperimentPlan) -> dict:
    return {
        "real": [(t.table_id, t.csv_path, t.schema_path) for t in plan.real_tables],
        "synthetic": [
            (
                s.table_id,
                s.generator_id,
                s.csv_path,
                s.fixture_kind.value if s.fixture_kind else None,
                s.n,
                s.noise_scale,
            )
            for s in plan.synthetic_sources
        ],
        "balance": plan.balance.value,
        "setups": [s.name for s in plan.setups],
        "encoders": list(plan.encoders),
        "detectors": list(plan.detectors),
        "folds": plan.folds,
        "seed": plan.seed,
        "encoding": vars(plan.encoding).copy(),
        "train": {k: v for k, v in vars(plan.train).items()},
    }


def _require(condition: bool, key: str, message: str) -> None:
    if not condition:
        raise ConfigError(f"{key}: {message}")


def plan_from_dict(data: dict, base_dir: Union[str, Path] = ".") -> ExperimentPlan:
    pool = data.get("pool", {})
    _require(isinstance(pool, dict), "pool", "must be a table")

    real_entries = pool.get("real", [])
    _require(bool(real_entries), "pool.real", "at least one real table required")
    real_tables = []
    for entry in real_entries:
        _require("table_id" in entry, "pool.real.table_id", "missing")
        _require("csv" in entry, "pool.real.csv", "missing")
        real_tables.append(
            RealTableSpec(entry["table_id"], entry["csv"], entry.get("schema"))
        )
    real_ids = {t.table_id for t in real_tables}

    synthetic = []
    for entry in pool.get("synthetic", []):
        _require("table_id" in entry, "pool.synthetic.table_id", "missing")
        table_id = entry["table_id"]
        _require(
            table_id in real_ids, "pool.synthetic.table_id",
            f"'{table_id}' has no real counterpart",
        )
        if "csv" in entry:
            _require("generator_id" in entry, "pool.synthetic.generator_id", "missing")
            synthetic.append(SyntheticSource(table_id, entry["generator_id"], entry["csv"]))
        elif "generator" in entry:
            try:
                kind = parse_generator_kind(entry["generator"])
            except ValueError as exc:
                raise ConfigError(f"pool.synthetic.generator: {exc}") from exc
            generator_id = entry.get("generator_id", kind.value)
            synthetic.append(
                SyntheticSource(
                    table_id,
                    generator_id,
                    fixture_kind=kind,
                    n=entry.get("n"),
                    noise_scale=float(entry.get("noise_scale", 0.0)),
                )
            )
        else:
            raise ConfigError("pool.synthetic: entry needs either 'csv' or 'generator'")

    balance_raw = str(pool.get("balance", Balance.EQUAL_PER_ORIGIN.value))
    normalized = balance_raw.lower().replace("_", "-")
    matches = [b for b in Balance if b.value == normalized]
    _require(bool(matches), "pool.balance", f"unknown balance {balance_raw!r}")

    setups = []
    for raw in data.get("setups", [SETUP_ALL_MODELS]):
        try:
            setups.append(parse_setup(raw))
        except ValueError as exc:
            raise ConfigError(f"setups: {exc}") from exc

    encoders = tuple(data.get("encoders", ENCODER_NAMES))
    for enc in encoders:
        _require(enc in ENCODER_NAMES, "encoders", f"unknown encoder {enc!r}")
    detectors = tuple(data.get("detectors", DETECTOR_NAMES))
    for det in detectors:
        _require(det in DETECTOR_NAMES, "detectors", f"unknown detector {det!r}")
        _require(det in COMPATIBLE_ENCODERS, "detectors", f"unknown detector {det!r}")

    folds = int(data.get("folds", 3))
    _require(folds >= 2, "folds", "must be >= 2")
    seed = int(data.get("seed", 0))

    enc_data = data.get("encoding", {})
    known_enc = {"d_num", "d_cat", "max_len", "vocab_cap"}
    for key in enc_data:
        _require(key in known_enc, f"encoding.{key}", "unknown key")
    encoding = EncodingParams(**{k: int(v) for k, v in enc_data.items()})

    train_data = dict(data.get("train", {}))
    gbdt_extra = train_data.pop("gbdt", {})
    transformer_extra = train_data.pop("transformer", {})
    merged = {**train_data, **gbdt_extra, **transformer_extra}
    valid_fields = set(TrainConfig.__dataclass_fields__)
    for key in merged:
        _require(key in valid_fields, f"train.{key}", "unknown key")
    try:
        train = TrainConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"train: {exc}") from exc

    return ExperimentPlan(
        real_tables=tuple(real_tables),
        synthetic_sources=tuple(synthetic),
        balance=matches[0],
        setups=tuple(setups),
        encoders=encoders,
        detectors=detectors,
        folds=folds,
        seed=seed,
        out_dir=str(data.get("out_dir", "out")),
        encoding=encoding,
        train=train,
        base_dir=str(base_dir),
    )


def parse_experiment_config(path: Union[str, Path]) -> ExperimentPlan:
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config: invalid TOML in {path}: {exc}") from exc
    return plan_from_dict(data, base_dir=path.parent)
