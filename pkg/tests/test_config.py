import pytest

from tabdetect.config import (
    EncodingParams,
    ExperimentPlan,
    parse_experiment_config,
    plan_from_dict,
)
from tabdetect.errors import ConfigError
from tabdetect.fixtures import GeneratorKind
from tabdetect.ingest import Balance

MINIMAL = {"pool": {"real": [{"table_id": "a", "csv": "a.csv"}]}}


def test_minimal_config_fills_defaults():
    plan = plan_from_dict(MINIMAL)
    assert plan.folds == 3
    assert plan.seed == 0
    assert plan.balance is Balance.EQUAL_PER_ORIGIN
    assert plan.encoders == ("3gram-char", "3gram-word", "flat-text", "column")
    assert plan.detectors == ("logistic", "gbdt", "transformer")
    assert [s.name for s in plan.setups] == ["all-models-vs-real"]
    assert plan.encoding == EncodingParams()


def test_unknown_detector_names_offending_key():
    data = dict(MINIMAL, detectors=["logistic", "svm"])
    with pytest.raises(ConfigError, match="detector"):
        plan_from_dict(data)


def test_unknown_encoder_rejected():
    data = dict(MINIMAL, encoders=["4gram"])
    with pytest.raises(ConfigError, match="encoder"):
        plan_from_dict(data)


def test_setup_list_parses_both_spellings():
    data = dict(MINIMAL, setups=["tvae_vs_real", "cross_table"])
    plan = plan_from_dict(data)
    assert len(plan.setups) == 2
    assert plan.setups[0].generator_id == "tvae"
    assert plan.setups[1].grouped


def test_bad_setup_rejected():
    with pytest.raises(ConfigError, match="setups"):
        plan_from_dict(dict(MINIMAL, setups=["whatever"]))


def test_empty_pool_rejected():
    with pytest.raises(ConfigError, match="pool.real"):
        plan_from_dict({"pool": {"real": []}})


def test_synthetic_without_real_counterpart():
    data = {
        "pool": {
            "real": [{"table_id": "a", "csv": "a.csv"}],
            "synthetic": [{"table_id": "b", "generator_id": "g", "csv": "b.csv"}],
        }
    }
    with pytest.raises(ConfigError, match="counterpart"):
        plan_from_dict(data)


def test_fixture_synthetic_entry():
    data = {
        "pool": {
            "real": [{"table_id": "a", "csv": "a.csv"}],
            "synthetic": [
                {"table_id": "a", "generator": "noisy_copy", "noise_scale": 0.5, "n": 100}
            ],
        }
    }
    plan = plan_from_dict(data)
    src = plan.synthetic_sources[0]
    assert src.is_fixture
    assert src.fixture_kind is GeneratorKind.NOISY_COPY
    assert src.generator_id == "noisy-copy"
    assert src.n == 100 and src.noise_scale == 0.5


def test_bad_balance_named():
    data = {"pool": {"real": [{"table_id": "a", "csv": "a.csv"}], "balance": "fifty"}}
    with pytest.raises(ConfigError, match="pool.balance"):
        plan_from_dict(data)


def test_train_section_merges_family_tables():
    data = dict(
        MINIMAL,
        train={"epochs": 5, "gbdt": {"n_rounds": 7}, "transformer": {"d_model": 32}},
    )
    plan = plan_from_dict(data)
    assert plan.train.epochs == 5
    assert plan.train.n_rounds == 7
    assert plan.train.d_model == 32


def test_unknown_train_key_rejected():
    with pytest.raises(ConfigError, match="train.warmup"):
        plan_from_dict(dict(MINIMAL, train={"warmup": 3}))


def test_toml_roundtrip(tmp_path):
    config = tmp_path / "exp.toml"
    config.write_text(
        """
seed = 11
folds = 3
out_dir = "results"
setups = ["mr-vs-real"]
encoders = ["column"]
detectors = ["gbdt"]

[[pool.real]]
table_id = "alpha"
csv = "alpha.csv"

[[pool.synthetic]]
table_id = "alpha"
generator_id = "mr"
generator = "marginal-resample"

[encoding]
d_num = 4
d_cat = 2

[train.gbdt]
n_rounds = 9
""",
        encoding="utf-8",
    )
    plan = parse_experiment_config(config)
    assert plan.seed == 11
    assert plan.out_dir == "results"
    assert plan.encoding.d_num == 4
    assert plan.train.n_rounds == 9
    assert plan.base_dir == str(tmp_path)
    assert plan.synthetic_sources[0].generator_id == "mr"


def test_fingerprint_tracks_content():
    a = plan_from_dict(MINIMAL)
    b = plan_from_dict(MINIMAL)
    c = plan_from_dict(dict(MINIMAL, seed=5))
    assert a.fingerprint() == b.fingerprint()
    assert a.fingerprint() != c.fingerprint()


def test_invalid_toml_is_config_error(tmp_path):
    bad = tmp_path / "bad.toml"
    bad.write_text("= nonsense", encoding="utf-8")
    with pytest.raises(ConfigError):
        parse_experiment_config(bad)
