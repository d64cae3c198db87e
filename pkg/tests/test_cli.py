import json

import numpy as np
import pytest

from tabdetect.cli import main
from tabdetect.encoders.cache import read_encoded_cache


@pytest.fixture
def data_dir(tmp_path):
    rng = np.random.default_rng(0)
    for tid in ("alpha", "beta", "gamma"):
        lines = ["x,y,g"]
        for i in range(40):
            x = rng.normal()
            lines.append(f"{x:.4f},{x + 0.05 * rng.normal():.4f},{'uv'[i % 2]}")
        (tmp_path / f"{tid}.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return tmp_path


def test_infer_schema_prints_sidecar(data_dir, capsys):
    assert main(["infer-schema", str(data_dir / "alpha.csv")]) == 0
    out = capsys.readouterr().out
    assert out.splitlines()[0] == "name,kind"
    assert "x,numerical" in out
    assert "g,categorical" in out


def test_unknown_subcommand_is_usage_error(capsys):
    assert main(["frobnicate"]) == 1


def test_missing_file_is_data_error(data_dir, capsys):
    assert main(["infer-schema", str(data_dir / "nope.csv")]) == 2


def test_generate_fixtures_zero_noise_identity(data_dir, capsys):
    code = main(
        [
            "generate-fixtures",
            str(data_dir / "alpha.csv"),
            "--kind",
            "noisy-copy",
            "--noise",
            "0",
            "--n",
            "10",
            "--seed",
            "7",
            "--out-dir",
            str(data_dir),
        ]
    )
    assert code == 0
    out_path = capsys.readouterr().out.strip()
    assert out_path.endswith("alpha__noisy-copy.csv")

    # rows must be the same seeded draws sample_synthetic produces
    from tabdetect.fixtures import GeneratorKind, fit_generator, sample_synthetic
    from tabdetect.ingest import load_csv

    source = load_csv(data_dir / "alpha.csv")
    expected = sample_synthetic(
        fit_generator(GeneratorKind.NOISY_COPY, source, noise_scale=0.0), 10, 7
    )
    written = load_csv(out_path, schema=source.schema)
    assert written.rows == expected.rows


def test_encode_writes_cache(data_dir, capsys):
    code = main(
        ["encode", str(data_dir / "alpha.csv"), "--encoder", "3gram-char", "--seed", "1"]
    )
    assert code == 0
    out_path = capsys.readouterr().out.strip()
    header, items = read_encoded_cache(out_path)
    assert header["payload"] == "bag"
    assert header["count"] == 40 and len(items) == 40
    assert all(bag.counts for bag in items)


def test_encode_column_roundtrip(data_dir, capsys):
    code = main(
        [
            "encode",
            str(data_dir / "alpha.csv"),
            "--encoder",
            "column",
            "--d-num",
            "4",
            "--d-cat",
            "2",
        ]
    )
    assert code == 0
    out_path = capsys.readouterr().out.strip()
    header, items = read_encoded_cache(out_path)
    assert header["payload"] == "column"
    assert items[0].num_mask.sum() == 2  # two numeric columns present
    assert (items[0].num >= 0).all() and (items[0].num <= 1).all()


def write_config(data_dir, **extra):
    lines = [
        "seed = 5",
        "folds = 3",
        f'out_dir = "{data_dir / "out"}"',
        'setups = ["mr-vs-real"]',
        'encoders = ["column"]',
        'detectors = ["gbdt"]',
        "",
    ]
    for tid in ("alpha", "beta", "gamma"):
        lines += [
            "[[pool.real]]",
            f'table_id = "{tid}"',
            f'csv = "{tid}.csv"',
            "",
            "[[pool.synthetic]]",
            f'table_id = "{tid}"',
            'generator_id = "mr"',
            'generator = "marginal-resample"',
            "",
        ]
    lines += [
        "[encoding]",
        "d_num = 3",
        "d_cat = 2",
        "",
        "[train]",
        "epochs = 4",
        "",
        "[train.gbdt]",
        "n_rounds = 6",
        "max_depth = 2",
        'min_child_weight = 0.5',
    ]
    for key, value in extra.items():
        lines.append(f"{key} = {value}")
    path = data_dir / "exp.toml"
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def test_evaluate_writes_reports(data_dir, capsys):
    config = write_config(data_dir)
    assert main(["evaluate", "--config", str(config)]) == 0
    out_lines = capsys.readouterr().out.strip().splitlines()
    report_json, report_text = out_lines
    payload = json.loads((data_dir / "out" / "report.json").read_text())
    assert payload["audit"]["verified"] is True
    assert len(payload["cells"]) == 1
    cell = payload["cells"][0]
    assert len(cell["per_fold"]) == 3
    text = (data_dir / "out" / "report.txt").read_text()
    assert "mr-vs-real" in text


def test_report_rerenders(data_dir, capsys):
    config = write_config(data_dir)
    main(["evaluate", "--config", str(config)])
    capsys.readouterr()
    assert main(["report", str(data_dir / "out" / "report.json")]) == 0
    out = capsys.readouterr().out
    assert "GBDT" in out
    assert main(["report", str(data_dir / "out" / "report.json"), "--markdown"]) == 0
    md = capsys.readouterr().out
    assert md.startswith("| Setup |")


def test_train_saves_models(data_dir, capsys):
    config = write_config(data_dir)
    assert main(["train", "--config", str(config)]) == 0
    paths = capsys.readouterr().out.strip().splitlines()
    assert len(paths) == 1
    from tabdetect.detectors import load_model
    from tabdetect.detectors.gbdt import GbdtModel

    model = load_model(paths[0])
    assert isinstance(model, GbdtModel)
    assert model.trees


def test_evaluate_with_table_id_distinct_from_stem(data_dir, capsys):
    # pool table ids are authoritative even when csv stems differ
    lines = [
        "seed = 1",
        "folds = 3",
        f'out_dir = "{data_dir / "out2"}"',
        'setups = ["mr-vs-real"]',
        'encoders = ["column"]',
        'detectors = ["logistic"]',
    ]
    for tid, stem in (("first", "alpha"), ("second", "beta"), ("third", "gamma")):
        lines += [
            "[[pool.real]]",
            f'table_id = "{tid}"',
            f'csv = "{stem}.csv"',
            "[[pool.synthetic]]",
            f'table_id = "{tid}"',
            'generator_id = "mr"',
            'generator = "marginal-resample"',
        ]
    lines += ["[encoding]", "d_num = 2", "d_cat = 1", "[train]", "epochs = 2"]
    config = data_dir / "renamed.toml"
    config.write_text("\n".join(lines) + "\n", encoding="utf-8")
    assert main(["evaluate", "--config", str(config)]) == 0
    payload = json.loads((data_dir / "out2" / "report.json").read_text())
    assert payload["cells"][0]["error"] is None
    capsys.readouterr()


def test_evaluate_seed_override_changes_fingerprint(data_dir, capsys):
    config = write_config(data_dir)
    main(["evaluate", "--config", str(config)])
    first = json.loads((data_dir / "out" / "report.json").read_text())
    main(["evaluate", "--config", str(config), "--seed", "99"])
    second = json.loads((data_dir / "out" / "report.json").read_text())
    assert first["seed"] == 5 and second["seed"] == 99
    assert first["config_fingerprint"] != second["config_fingerprint"]
