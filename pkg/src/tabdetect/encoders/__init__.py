from .linearize import (
    CLS_ID,
    PAD_ID,
    UNK_ID,
    LinearizedRow,
    SparseBag,
    TokenSeq,
    Vocab,
    build_vocab,
    char_trigram_bag,
    char_trigrams,
    linearize_row,
    render_value,
    stable_row_seed,
    tokenize_flat_text,
    word_tokens,
    word_trigram_bag,
    word_trigrams,
)
from .column import ColumnCodec, ColumnVec, apply_column_codec, fit_column_codec

ENCODER_NAMES = ("3gram-char", "3gram-word", "flat-text", "column")

__all__ = [
    "CLS_ID",
    "ENCODER_NAMES",
    "PAD_ID",
    "UNK_ID",
    "ColumnCodec",
    "ColumnVec",
    "LinearizedRow",
    "SparseBag",
    "TokenSeq",
    "Vocab",
    "apply_column_codec",
    "build_vocab",
    "char_trigram_bag",
    "char_trigrams",
    "fit_column_codec",
    "linearize_row",
    "render_value",
    "stable_row_seed",
    "tokenize_flat_text",
    "word_tokens",
    "word_trigram_bag",
    "word_trigrams",
]
