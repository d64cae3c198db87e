from .config import TrainConfig
from .features import bags_to_csr, columnvecs_to_dense, tokenseqs_to_dense
from .logistic import LogisticModel, predict_logistic, train_logistic
from .gbdt import GbdtModel, predict_gbdt, train_gbdt
from .transformer import (
    ColumnTransformerModel,
    TextTransformerModel,
    load_model,
    predict_transformer,
    save_model,
    train_column_transformer,
    train_text_transformer,
)

DETECTOR_NAMES = ("logistic", "gbdt", "transformer")

# Which encodings each detector family accepts; transformers are
# restricted to the two sequence-shaped encodings.
COMPATIBLE_ENCODERS = {
    "logistic": ("3gram-char", "3gram-word", "flat-text", "column"),
    "gbdt": ("3gram-char", "3gram-word", "flat-text", "column"),
    "transformer": ("flat-text", "column"),
}

__all__ = [
    "COMPATIBLE_ENCODERS",
    "DETECTOR_NAMES",
    "ColumnTransformerModel",
    "GbdtModel",
    "LogisticModel",
    "TextTransformerModel",
    "TrainConfig",
    "bags_to_csr",
    "columnvecs_to_dense",
    "load_model",
    "predict_gbdt",
    "predict_logistic",
    "predict_transformer",
    "save_model",
    "tokenseqs_to_dense",
    "train_column_transformer",
    "train_gbdt",
    "train_logistic",
    "train_text_transformer",
]
