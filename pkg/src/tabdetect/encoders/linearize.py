"""Text-based row encodings: flat-text linearization and trigram bags.

A row becomes a comma-joined string of ``<name>:<value>`` segments
under a seeded column permutation. From that string we derive char
trigrams, word trigrams (tokens split at the structural separators
':' and ','), or a plain character-index sequence.
"""
from __future__ import annotations

import hashlib
import zlib
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from ..data import Cell, RowRecord
from ..errors import MissingCellError, VocabError

PAD_ID = 0
UNK_ID = 1
CLS_ID = 2
_N_SPECIALS = 3


def render_value(cell: Cell) -> str:
    """Shortest round-trip rendering; integral floats drop the '.0'.

    Formatting is part of the detection signal, so it must be
    deterministic: categorical values pass through untouched.
    """
    if isinstance(cell, str):
        return cell
    if cell is None:
        raise MissingCellError("cannot render a missing cell")
    x = float(cell)
    if x.is_integer() and abs(x) < 1e16:
        return str(int(x))
    return repr(x)


def stable_row_seed(table_id: str, source_index: int) -> int:
    """Platform-stable seed for the evaluation-time column permutation."""
    return zlib.crc32(f"{table_id}\x1f{source_index}".encode("utf-8"))


@dataclass(frozen=True)
class LinearizedRow:
    text: str
    permutation: tuple[int, ...]


def linearize_row(
    record: RowRecord,
    seed: Optional[int] = None,
    permutation: Optional[Sequence[int]] = None,
) -> LinearizedRow:
    """Render a row as ``name:value`` segments under a column permutation.

    The permutation is drawn uniformly from the given seed unless an
    explicit one is supplied. No spaces are inserted.
    """
    cells = record.cells
    names = record.schema.names
    n = len(cells)
    if any(c is None for c in cells):
        raise MissingCellError(f"row of '{record.table_id}' has missing cells")
    if permutation is not None:
        perm = tuple(int(i) for i in permutation)
        if sorted(perm) != list(range(n)):
            raise ValueError(f"invalid permutation {permutation!r} for {n} columns")
    else:
        rng = np.random.default_rng(0 if seed is None else seed)
        perm = tuple(int(i) for i in rng.permutation(n))
    text = ",".join(f"{names[i]}:{render_value(cells[i])}" for i in perm)
    return LinearizedRow(text=text, permutation=perm)


@dataclass(frozen=True)
class Vocab:
    """Token-to-id map with reserved PAD/UNK/CLS slots."""

    token_to_id: dict
    id_to_token: tuple[str, ...]
    fingerprint: str

    @property
    def size(self) -> int:
        return _N_SPECIALS + len(self.token_to_id)

    def encode(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)


def build_vocab(corpus: Iterable[Iterable[str]], max_size: int) -> Vocab:
    """Keep the most frequent max_size tokens; ties break lexicographically.

    Must be fed training-split streams only; everything else maps to
    UNK at encode time.
    """
    counts: Counter = Counter()
    for stream in corpus:
        counts.update(stream)
    if not counts:
        raise VocabError("empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:max_size]
    token_to_id = {tok: _N_SPECIALS + i for i, (tok, _) in enumerate(ranked)}
    id_to_token = tuple(tok for tok, _ in ranked)
    digest = hashlib.blake2b(digest_size=16)
    for tok, _ in ranked:
        digest.update(tok.encode("utf-8", "surrogatepass"))
        digest.update(b"\x00")
    return Vocab(token_to_id=token_to_id, id_to_token=id_to_token, fingerprint=digest.hexdigest())


@dataclass(frozen=True)
class SparseBag:
    """Sparse multiset of vocabulary ids; counts are always >= 1."""

    counts: dict
    vocab_id: str

    def total(self) -> int:
        return sum(self.counts.values())


@dataclass(frozen=True)
class TokenSeq:
    """Character-index sequence for the flat-text transformer."""

    ids: np.ndarray
    vocab_id: str

    def __len__(self) -> int:
        return len(self.ids)


def char_trigrams(s: str) -> list[str]:
    return [s[i : i + 3] for i in range(len(s) - 2)]


def word_tokens(text: str) -> list[str]:
    """Split at ':' and ','; empty fragments are dropped."""
    out = []
    current = []
    for ch in text:
        if ch in ":,":
            if current:
                out.append("".join(current))
                current = []
        else:
            current.append(ch)
    if current:
        out.append("".join(current))
    return out


def word_trigrams(text: str) -> list[str]:
    tokens = word_tokens(text)
    return [" ".join(tokens[i : i + 3]) for i in range(len(tokens) - 2)]


def _bag(tokens: Iterable[str], vocab: Vocab) -> SparseBag:
    counts: dict = {}
    for tok in tokens:
        fid = vocab.encode(tok)
        counts[fid] = counts.get(fid, 0) + 1
    return SparseBag(counts=counts, vocab_id=vocab.fingerprint)


def char_trigram_bag(s: str, vocab: Vocab) -> SparseBag:
    """Count all contiguous 3-char substrings; shorter strings give an empty bag."""
    return _bag(char_trigrams(s), vocab)


def word_trigram_bag(linearized: LinearizedRow, vocab: Vocab) -> SparseBag:
    """Count consecutive word triples (stride 1), keyed space-joined."""
    return _bag(word_trigrams(linearized.text), vocab)


def tokenize_flat_text(linearized: LinearizedRow, vocab: Vocab, max_len: int) -> TokenSeq:
    """Per-character ids, tail-truncated to max_len; padding happens at batch time."""
    text = linearized.text[:max_len]
    ids = np.fromiter((vocab.encode(ch) for ch in text), dtype=np.int64, count=len(text))
    return TokenSeq(ids=ids, vocab_id=vocab.fingerprint)
