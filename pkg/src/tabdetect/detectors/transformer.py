"""The two transformer detectors and model (de)serialization.

Column variant: [CLS] | shared-affine numeric embeddings | shared-table
categorical embeddings, positions added to everything except CLS.
Text variant: [CLS] | char embeddings + positions, batch-padded with
PAD masked out of attention. The CLS output feeds an affine head.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from ..encoders import ColumnVec, TokenSeq
from ..errors import ShapeError, SingleClassError
from ..metrics import roc_auc
from ..nn import (
    ParamSet,
    Tensor,
    backward,
    bce_loss,
    encoder_forward,
    init_encoder_params,
    load_checkpoint,
    no_grad,
    optimizer_step,
    save_checkpoint,
    sinusoidal_positions,
)
from ..nn.autodiff import add, concat, embedding, matmul, mul, reshape, take
from ..nn.layers import sigmoid
from .config import TrainConfig
from .features import stratified_split


@dataclass
class ColumnTransformerModel:
    pset: ParamSet
    d_num: int
    d_cat: int
    d_model: int
    heads: int
    layers: int
    c_max: int
    feature_space_id: str = ""

    @property
    def positions(self) -> np.ndarray:
        return sinusoidal_positions(self.d_num + self.d_cat, self.d_model)


@dataclass
class TextTransformerModel:
    pset: ParamSet
    vocab_size: int
    d_model: int
    heads: int
    layers: int
    max_len: int
    feature_space_id: str = ""

    @property
    def positions(self) -> np.ndarray:
        return sinusoidal_positions(self.max_len, self.d_model)


# value-bearing embeddings start at the same order of magnitude as the
# unit-amplitude sinusoidal position codes, or the value signal drowns
EMBED_INIT_STD = 0.5


def _head_and_cls(rng: np.random.Generator, d_model: int) -> dict:
    return {
        "cls": Tensor(rng.normal(0.0, EMBED_INIT_STD, size=d_model), requires_grad=True),
        # zero head: every input scores exactly 0.5 before training
        "head.w": Tensor(np.zeros((d_model, 1)), requires_grad=True),
        "head.b": Tensor(np.zeros(1), requires_grad=True),
    }


def _cls_tile(ps: dict, batch: int, d_model: int) -> Tensor:
    return add(Tensor(np.zeros((batch, 1, d_model))), reshape(ps["cls"], (1, 1, d_model)))


def _logits_from_tokens(
    ps: dict,
    tokens: Tensor,
    mask: np.ndarray,
    layers: int,
    heads: int,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    collect_attn: Optional[list] = None,
) -> Tensor:
    hidden = encoder_forward(
        tokens, mask, ps, layers, heads,
        dropout_rate=dropout_rate, rng=rng, collect_attn=collect_attn,
    )
    cls_out = take(hidden, 0, axis=1)
    return reshape(add(matmul(cls_out, ps["head.w"]), ps["head.b"]), (tokens.shape[0],))


# --- column variant ---------------------------------------------------------


def _column_batch(vecs: Sequence[ColumnVec]):
    num = np.stack([v.num for v in vecs])
    num_mask = np.stack([v.num_mask for v in vecs])
    cat = np.stack([v.cat for v in vecs])
    cat_mask = np.stack([v.cat_mask for v in vecs])
    return num, num_mask, cat, cat_mask


def column_logits(
    model: ColumnTransformerModel,
    num: np.ndarray,
    num_mask: np.ndarray,
    cat: np.ndarray,
    cat_mask: np.ndarray,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    collect_attn: Optional[list] = None,
) -> Tensor:
    batch = num.shape[0]
    if num.shape[1] != model.d_num or cat.shape[1] != model.d_cat:
        raise ShapeError(
            f"expected (d_num={model.d_num}, d_cat={model.d_cat}), "
            f"got ({num.shape[1]}, {cat.shape[1]})"
        )
    ps = model.pset.params
    num_emb = add(mul(Tensor(num[:, :, None]), ps["num.w"]), ps["num.b"])
    ids = np.clip(cat, 0, model.c_max)
    cat_emb = embedding(ps["cat.table"], ids)
    body = add(concat([num_emb, cat_emb], axis=1), Tensor(model.positions))
    tokens = concat([_cls_tile(ps, batch, model.d_model), body], axis=1)
    mask = np.concatenate([np.ones((batch, 1)), num_mask, cat_mask], axis=1)
    return _logits_from_tokens(
        ps, tokens, mask, model.layers, model.heads, dropout_rate, rng, collect_attn
    )


def _init_column_model(cfg: TrainConfig, d_num: int, d_cat: int) -> ColumnTransformerModel:
    rng = np.random.default_rng(cfg.seed)
    params = {
        "num.w": Tensor(rng.normal(0.0, EMBED_INIT_STD, size=cfg.d_model), requires_grad=True),
        "num.b": Tensor(np.zeros(cfg.d_model), requires_grad=True),
        "cat.table": Tensor(
            rng.normal(0.0, EMBED_INIT_STD, size=(cfg.c_max + 1, cfg.d_model)),
            requires_grad=True,
        ),
    }
    params.update(init_encoder_params(rng, cfg.layers, cfg.d_model))
    params.update(_head_and_cls(rng, cfg.d_model))
    return ColumnTransformerModel(
        pset=ParamSet(params),
        d_num=d_num,
        d_cat=d_cat,
        d_model=cfg.d_model,
        heads=cfg.heads,
        layers=cfg.layers,
        c_max=cfg.c_max,
    )


def train_column_transformer(
    vecs: Sequence[ColumnVec],
    y: Sequence[int],
    cfg: TrainConfig,
    strata: Optional[Sequence] = None,
    feature_space_id: str = "",
) -> ColumnTransformerModel:
    num, num_mask, cat, cat_mask = _column_batch(vecs)
    model = _init_column_model(cfg, num.shape[1], cat.shape[1])
    model.feature_space_id = feature_space_id

    def batch_logits(idx: np.ndarray, rng: Optional[np.random.Generator]) -> Tensor:
        rate = cfg.dropout if rng is not None else 0.0
        return column_logits(
            model, num[idx], num_mask[idx], cat[idx], cat_mask[idx], rate, rng
        )

    _fit(model.pset, batch_logits, np.asarray(y, dtype=np.float64), cfg, strata)
    return model


# --- flat-text variant -------------------------------------------------------


def _pad_batch(seqs: Sequence[TokenSeq], max_len: int):
    width = max(1, min(max_len, max(len(s) for s in seqs)))
    ids = np.zeros((len(seqs), width), dtype=np.int64)
    mask = np.zeros((len(seqs), width))
    for i, seq in enumerate(seqs):
        clipped = seq.ids[:width]
        ids[i, : len(clipped)] = clipped
        mask[i, : len(clipped)] = 1.0
    return ids, mask


def text_logits(
    model: TextTransformerModel,
    ids: np.ndarray,
    mask: np.ndarray,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    collect_attn: Optional[list] = None,
) -> Tensor:
    batch, width = ids.shape
    ps = model.pset.params
    emb = add(embedding(ps["char.table"], ids), Tensor(model.positions[:width]))
    tokens = concat([_cls_tile(ps, batch, model.d_model), emb], axis=1)
    full_mask = np.concatenate([np.ones((batch, 1)), mask], axis=1)
    return _logits_from_tokens(
        ps, tokens, full_mask, model.layers, model.heads, dropout_rate, rng, collect_attn
    )


def _init_text_model(cfg: TrainConfig, vocab_size: int) -> TextTransformerModel:
    rng = np.random.default_rng(cfg.seed)
    params = {
        "char.table": Tensor(
            rng.normal(0.0, EMBED_INIT_STD, size=(vocab_size, cfg.d_model)),
            requires_grad=True,
        ),
    }
    params.update(init_encoder_params(rng, cfg.layers, cfg.d_model))
    params.update(_head_and_cls(rng, cfg.d_model))
    return TextTransformerModel(
        pset=ParamSet(params),
        vocab_size=vocab_size,
        d_model=cfg.d_model,
        heads=cfg.heads,
        layers=cfg.layers,
        max_len=cfg.max_len,
    )


def train_text_transformer(
    seqs: Sequence[TokenSeq],
    y: Sequence[int],
    cfg: TrainConfig,
    vocab_size: int,
    strata: Optional[Sequence] = None,
    feature_space_id: str = "",
    reencode: Optional[Callable[[int], Sequence[TokenSeq]]] = None,
) -> TextTransformerModel:
    if any(len(s) == 0 for s in seqs):
        raise ShapeError("text transformer needs non-empty sequences")
    model = _init_text_model(cfg, vocab_size)
    model.feature_space_id = feature_space_id

    current = list(seqs)

    def batch_logits(idx: np.ndarray, train_rng: Optional[np.random.Generator]) -> Tensor:
        # augmented encodings only while training; validation stays on
        # the fixed evaluation-time encodings
        source = current if train_rng is not None else seqs
        rate = cfg.dropout if train_rng is not None else 0.0
        ids, mask = _pad_batch([source[i] for i in idx], cfg.max_len)
        return text_logits(model, ids, mask, rate, train_rng)

    def on_epoch(epoch: int) -> None:
        if reencode is not None:
            fresh = reencode(epoch)
            for i, seq in enumerate(fresh):
                current[i] = seq

    _fit(model.pset, batch_logits, np.asarray(y, dtype=np.float64), cfg, strata, on_epoch)
    return model


# --- shared training loop ------------------------------------------------------


def _fit(
    pset: ParamSet,
    batch_logits: Callable[[np.ndarray, Optional[np.random.Generator]], Tensor],
    y: np.ndarray,
    cfg: TrainConfig,
    strata: Optional[Sequence],
    on_epoch: Optional[Callable[[int], None]] = None,
) -> None:
    if len(np.unique(y)) < 2:
        raise SingleClassError("transformer training needs both classes")
    split_keys = list(strata) if strata is not None else [int(v) for v in y]
    train_idx, val_idx = stratified_split(split_keys, cfg.val_fraction, cfg.seed)
    if len(np.unique(y[train_idx])) < 2 or len(np.unique(y[val_idx])) < 2:
        train_idx, val_idx = stratified_split([int(v) for v in y], cfg.val_fraction, cfg.seed)
    can_early_stop = len(val_idx) > 0 and len(np.unique(y[val_idx])) == 2

    rng = np.random.default_rng(cfg.seed)
    best_auc = -1.0
    best = pset.copy_data()
    stale = 0
    for epoch in range(cfg.epochs):
        if on_epoch is not None:
            on_epoch(epoch)
        order = rng.permutation(train_idx)
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            loss = bce_loss(batch_logits(batch, rng), y[batch])
            backward(loss)
            if cfg.l2 > 0:
                for t in pset.params.values():
                    if t.grad is not None:
                        t.grad += cfg.l2 * t.data
            for t in pset.params.values():
                if t.grad is None:  # parameters untouched by this batch
                    t.grad = np.zeros_like(t.data)
            optimizer_step(pset, cfg.lr)

        if not can_early_stop:
            best = pset.copy_data()
            continue
        with no_grad():
            val_scores = []
            for start in range(0, len(val_idx), cfg.batch_size):
                batch = val_idx[start : start + cfg.batch_size]
                val_scores.append(sigmoid(batch_logits(batch, None).data))
        auc = roc_auc(np.concatenate(val_scores), y[val_idx])
        if auc > best_auc + 1e-12:
            best_auc = auc
            best = pset.copy_data()
            stale = 0
        else:
            if auc >= best_auc - 1e-12:
                # tie: keep the more-trained weights, but count staleness
                best = pset.copy_data()
            stale += 1
            if stale >= cfg.early_stop_patience:
                break
    pset.load_data(best)


# --- prediction ------------------------------------------------------------------


def predict_transformer(
    model: Union[ColumnTransformerModel, TextTransformerModel],
    rows: Sequence,
    batch_size: int = 512,
) -> np.ndarray:
    """Pure function of (model, rows): sigmoid of the CLS head logit."""
    out = []
    with no_grad():
        for start in range(0, len(rows), batch_size):
            chunk = rows[start : start + batch_size]
            if isinstance(model, ColumnTransformerModel):
                num, num_mask, cat, cat_mask = _column_batch(chunk)
                logits = column_logits(model, num, num_mask, cat, cat_mask)
            else:
                ids, mask = _pad_batch(chunk, model.max_len)
                logits = text_logits(model, ids, mask)
            out.append(sigmoid(logits.data))
    return np.concatenate(out)


# --- save / load ---------------------------------------------------------------


def save_model(model, path: Union[str, Path], encoding: str = "") -> None:
    """Checkpoint plus a small header describing family and hyperparameters."""
    from .gbdt import GbdtModel
    from .logistic import LogisticModel

    if isinstance(model, ColumnTransformerModel):
        header = {
            "family": "column-transformer",
            "encoding": encoding,
            "d_num": model.d_num,
            "d_cat": model.d_cat,
            "d_model": model.d_model,
            "heads": model.heads,
            "layers": model.layers,
            "c_max": model.c_max,
            "feature_space_id": model.feature_space_id,
        }
        arrays = {k: t.data for k, t in model.pset.params.items()}
    elif isinstance(model, TextTransformerModel):
        header = {
            "family": "text-transformer",
            "encoding": encoding,
            "vocab_size": model.vocab_size,
            "d_model": model.d_model,
            "heads": model.heads,
            "layers": model.layers,
            "max_len": model.max_len,
            "feature_space_id": model.feature_space_id,
        }
        arrays = {k: t.data for k, t in model.pset.params.items()}
    elif isinstance(model, LogisticModel):
        header = {
            "family": "logistic",
            "encoding": encoding,
            "feature_space_id": model.feature_space_id,
        }
        arrays = {"weights": model.weights, "bias": np.array([model.bias])}
    elif isinstance(model, GbdtModel):
        header = {
            "family": "gbdt",
            "encoding": encoding,
            "learning_rate": model.learning_rate,
            "base_score": model.base_score,
            "n_features": model.n_features,
            "n_trees": len(model.trees),
            "feature_space_id": model.feature_space_id,
        }
        arrays = {}
        for i, tree in enumerate(model.trees):
            arrays[f"tree{i}.feature"] = tree.feature.astype(np.float64)
            arrays[f"tree{i}.threshold"] = tree.threshold
            arrays[f"tree{i}.left"] = tree.left.astype(np.float64)
            arrays[f"tree{i}.right"] = tree.right.astype(np.float64)
            arrays[f"tree{i}.value"] = tree.value
    else:
        raise TypeError(f"cannot save model of type {type(model).__name__}")
    save_checkpoint(path, arrays, header)


def load_model(path: Union[str, Path]):
    from .gbdt import GbdtModel, Tree
    from .logistic import LogisticModel

    header, arrays = load_checkpoint(path)
    family = header["family"]
    if family in ("column-transformer", "text-transformer"):
        params = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
        pset = ParamSet(params)
        if family == "column-transformer":
            return ColumnTransformerModel(
                pset=pset,
                d_num=header["d_num"],
                d_cat=header["d_cat"],
                d_model=header["d_model"],
                heads=header["heads"],
                layers=header["layers"],
                c_max=header["c_max"],
                feature_space_id=header["feature_space_id"],
            )
        return TextTransformerModel(
            pset=pset,
            vocab_size=header["vocab_size"],
            d_model=header["d_model"],
            heads=header["heads"],
            layers=header["layers"],
            max_len=header["max_len"],
            feature_space_id=header["feature_space_id"],
        )
    if family == "logistic":
        return LogisticModel(
            weights=arrays["weights"],
            bias=float(arrays["bias"][0]),
            feature_space_id=header["feature_space_id"],
        )
    if family == "gbdt":
        trees = []
        for i in range(header["n_trees"]):
            trees.append(
                Tree(
                    feature=arrays[f"tree{i}.feature"].astype(np.int64),
                    threshold=arrays[f"tree{i}.threshold"],
                    left=arrays[f"tree{i}.left"].astype(np.int64),
                    right=arrays[f"tree{i}.right"].astype(np.int64),
                    value=arrays[f"tree{i}.value"],
                )
            )
        return GbdtModel(
            trees=trees,
            learning_rate=header["learning_rate"],
            base_score=header["base_score"],
            n_features=header["n_features"],
            feature_space_id=header["feature_space_id"],
        )
    raise ValueError(f"unknown model family {family!r}")
