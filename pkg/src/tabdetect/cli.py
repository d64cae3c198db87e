"""Command-line entry point.

Subcommands: infer-schema, generate-fixtures, encode, train, evaluate,
report. Logs go to stderr, data to stdout or files. Exit codes: 0 ok,
1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path
from typing import Optional

from . import __version__
from .config import parse_experiment_config
from .detectors import save_model
from .encoders import (
    build_vocab,
    char_trigram_bag,
    char_trigrams,
    fit_column_codec,
    apply_column_codec,
    linearize_row,
    tokenize_flat_text,
    word_trigram_bag,
    word_trigrams,
)
from .encoders.cache import write_encoded_cache
from .data import Origin, RowRecord
from .errors import TabDetectError
from .fixtures import fit_generator, parse_generator_kind, sample_synthetic
from .harness import Report, derive_seed, run_experiment, train_full_models, write_report
from .ingest import load_csv, load_schema_sidecar, write_schema_sidecar, write_table_csv

log = logging.getLogger("tabdetect")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="tabdetect", description=__doc__)
    parser.add_argument("--version", action="version", version=f"tabdetect {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("infer-schema", help="infer column kinds from a CSV")
    p.add_argument("csv", type=Path)
    p.add_argument("--max-cardinality", type=int, default=20)
    p.add_argument("--out", type=Path, help="write a schema sidecar instead of stdout")

    p = sub.add_parser("generate-fixtures", help="sample a synthetic version of a CSV")
    p.add_argument("csv", type=Path)
    p.add_argument("--kind", required=True, help="marginal-resample|gaussian-frequency|noisy-copy")
    p.add_argument("--n", type=int, default=0, help="rows to sample (default: source size)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.1, help="noisy-copy scale, in column stds")
    p.add_argument("--schema", type=Path, help="schema sidecar for the source CSV")
    p.add_argument("--out-dir", type=Path, default=Path("."))

    p = sub.add_parser("encode", help="encode one CSV and write the binary corpus cache")
    p.add_argument("csv", type=Path)
    p.add_argument("--encoder", required=True, choices=["3gram-char", "3gram-word", "flat-text", "column"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, help="default: <csv stem>.<encoder>.bin")
    p.add_argument("--schema", type=Path)
    p.add_argument("--max-len", type=int, default=512)
    p.add_argument("--vocab-cap", type=int, default=2**18)
    p.add_argument("--d-num", type=int, default=50)
    p.add_argument("--d-cat", type=int, default=10)

    p = sub.add_parser("train", help="train the grid on the full pool and save models")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--out-dir", type=Path)

    p = sub.add_parser("evaluate", help="run the evaluation protocol from a config")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--folds", type=int)
    p.add_argument("--out-dir", type=Path)

    p = sub.add_parser("report", help="render a saved report JSON")
    p.add_argument("json", type=Path)
    p.add_argument("--markdown", action="store_true")
    return parser


def _cmd_infer_schema(args) -> int:
    table = load_csv(args.csv, max_cardinality=args.max_cardinality)
    if args.out:
        write_schema_sidecar(table.schema, args.out)
        log.info("wrote %s", args.out)
    else:
        sys.stdout.write("name,kind\n")
        for name, kind in table.schema.columns:
            sys.stdout.write(f"{name},{kind.value}\n")
    return 0


def _cmd_generate_fixtures(args) -> int:
    kind = parse_generator_kind(args.kind)
    schema = load_schema_sidecar(args.schema, args.csv.stem) if args.schema else None
    table = load_csv(args.csv, schema=schema)
    generator = fit_generator(kind, table, noise_scale=args.noise)
    n = args.n if args.n > 0 else table.n_rows
    sample = sample_synthetic(generator, n, args.seed)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    out_path = args.out_dir / f"{args.csv.stem}__{kind.value}.csv"
    write_table_csv(sample, out_path)
    log.info("sampled %d rows with %s (seed %d)", n, kind.value, args.seed)
    sys.stdout.write(f"{out_path}\n")
    return 0


def _cmd_encode(args) -> int:
    schema = load_schema_sidecar(args.schema, args.csv.stem) if args.schema else None
    table = load_csv(args.csv, schema=schema)
    records = [
        RowRecord(table.schema.table_name, Origin.REAL, None, row, table.schema, source_index=i)
        for i, row in enumerate(table.rows)
    ]
    lin = [
        linearize_row(r, seed=derive_seed(args.seed, "encode", i))
        for i, r in enumerate(records)
    ]
    if args.encoder == "column":
        codec = fit_column_codec(table)
        items = [apply_column_codec(codec, r, args.d_num, args.d_cat) for r in records]
        fingerprint = codec.fingerprint
    elif args.encoder == "flat-text":
        vocab = build_vocab((iter(l.text) for l in lin), args.vocab_cap)
        items = [tokenize_flat_text(l, vocab, args.max_len) for l in lin]
        fingerprint = vocab.fingerprint
    elif args.encoder == "3gram-char":
        vocab = build_vocab((char_trigrams(l.text) for l in lin), args.vocab_cap)
        items = [char_trigram_bag(l.text, vocab) for l in lin]
        fingerprint = vocab.fingerprint
    else:
        vocab = build_vocab((word_trigrams(l.text) for l in lin), args.vocab_cap)
        items = [word_trigram_bag(l, vocab) for l in lin]
        fingerprint = vocab.fingerprint
    out_path = args.out or args.csv.with_suffix(f".{args.encoder}.bin")
    write_encoded_cache(out_path, items, fingerprint)
    log.info("encoded %d rows with %s", len(items), args.encoder)
    sys.stdout.write(f"{out_path}\n")
    return 0


def _apply_overrides(plan, args):
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "folds", None) is not None:
        updates["folds"] = args.folds
    if getattr(args, "out_dir", None) is not None:
        updates["out_dir"] = str(args.out_dir)
    return dataclasses.replace(plan, **updates) if updates else plan


def _cmd_train(args) -> int:
    plan = _apply_overrides(parse_experiment_config(args.config), args)
    models = train_full_models(plan)
    model_dir = Path(plan.out_dir) / "models"
    model_dir.mkdir(parents=True, exist_ok=True)
    for (setup, encoder, detector), model in sorted(models.items()):
        path = model_dir / f"{setup}__{encoder}__{detector}.ckpt"
        save_model(model, path, encoding=encoder)
        sys.stdout.write(f"{path}\n")
    log.info("trained %d models", len(models))
    return 0


def _cmd_evaluate(args) -> int:
    plan = _apply_overrides(parse_experiment_config(args.config), args)
    report = run_experiment(plan, jobs=args.jobs)
    json_path, text_path = write_report(report, plan.out_dir)
    if not report.body["audit"]["verified"]:
        log.warning("leakage audit flagged: %s", report.body["audit"]["violations"])
    log.info("report written")
    sys.stdout.write(f"{json_path}\n{text_path}\n")
    return 0


def _cmd_report(args) -> int:
    payload = json.loads(Path(args.json).read_text(encoding="utf-8"))
    timing = payload.pop("timing", {})
    report = Report(body=payload, timing=timing)
    sys.stdout.write(report.render_markdown() if args.markdown else report.render_text())
    return 0


_COMMANDS = {
    "infer-schema": _cmd_infer_schema,
    "generate-fixtures": _cmd_generate_fixtures,
    "encode": _cmd_encode,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "report": _cmd_report,
}


def main(argv: Optional[list] = None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(levelname)s %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    try:
        return _COMMANDS[args.command](args)
    except TabDetectError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except ValueError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
