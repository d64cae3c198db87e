"""Transformer encoder building blocks on top of the autodiff core.

Pre-norm residual blocks: x + MHA(LN(x)), then x + FF(LN(x)) with a
ReLU feed-forward of hidden width 2*d_model. Masked keys receive a
-1e9 score bias, which underflows to exactly zero attention weight.
"""
from __future__ import annotations

from typing import Optional

import numpy as np

from ..errors import ShapeError
from .autodiff import (
    Tensor,
    _accumulate,
    _node,
    add,
    dropout,
    layer_norm,
    matmul,
    mean_all,
    mul,
    relu,
    reshape,
    softmax,
    transpose,
)

MASK_BIAS = -1e9


def sinusoidal_positions(seq_len: int, d_model: int) -> np.ndarray:
    """PE[p, 2i] = sin(p / 10000^(2i/d)), PE[p, 2i+1] = cos(same)."""
    if d_model % 2 != 0:
        raise ShapeError("d_model must be even for sinusoidal positions")
    positions = np.arange(seq_len, dtype=np.float64)[:, None]
    i = np.arange(d_model // 2, dtype=np.float64)[None, :]
    angles = positions / np.power(10000.0, 2.0 * i / d_model)
    out = np.empty((seq_len, d_model), dtype=np.float64)
    out[:, 0::2] = np.sin(angles)
    out[:, 1::2] = np.cos(angles)
    return out


def _uniform_init(rng: np.random.Generator, fan_in: int, shape) -> np.ndarray:
    limit = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-limit, limit, size=shape)


def encoder_param_shapes(layers: int, d_model: int) -> dict:
    shapes = {}
    hidden = 2 * d_model
    for layer in range(layers):
        p = f"enc{layer}."
        shapes[p + "ln1.g"] = (d_model,)
        shapes[p + "ln1.b"] = (d_model,)
        for name in ("wq", "wk", "wv", "wo"):
            shapes[p + f"attn.{name}"] = (d_model, d_model)
            shapes[p + f"attn.{name[1]}b"] = (d_model,)
        shapes[p + "ln2.g"] = (d_model,)
        shapes[p + "ln2.b"] = (d_model,)
        shapes[p + "ff.w1"] = (d_model, hidden)
        shapes[p + "ff.b1"] = (hidden,)
        shapes[p + "ff.w2"] = (hidden, d_model)
        shapes[p + "ff.b2"] = (d_model,)
    return shapes


def init_encoder_params(rng: np.random.Generator, layers: int, d_model: int) -> dict:
    """Fresh encoder weights: Xavier-uniform matrices, unit gains, zero biases."""
    params = {}
    for name, shape in encoder_param_shapes(layers, d_model).items():
        if name.endswith(".g"):
            params[name] = Tensor(np.ones(shape), requires_grad=True)
        elif name.endswith("b") or name.endswith(".b1") or name.endswith(".b2"):
            params[name] = Tensor(np.zeros(shape), requires_grad=True)
        else:
            fan_in = shape[0]
            params[name] = Tensor(_uniform_init(rng, fan_in, shape), requires_grad=True)
    return params


def _split_heads(x: Tensor, heads: int) -> Tensor:
    batch, seq, d_model = x.shape
    head_dim = d_model // heads
    return transpose(reshape(x, (batch, seq, heads, head_dim)), (0, 2, 1, 3))


def _merge_heads(x: Tensor) -> Tensor:
    batch, heads, seq, head_dim = x.shape
    return reshape(transpose(x, (0, 2, 1, 3)), (batch, seq, heads * head_dim))


def _linear(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    return add(matmul(x, w), b)


def encoder_forward(
    x: Tensor,
    attn_mask: np.ndarray,
    params: dict,
    layers: int,
    heads: int,
    dropout_rate: float = 0.0,
    rng: Optional[np.random.Generator] = None,
    collect_attn: Optional[list] = None,
) -> Tensor:
    """Run a pre-norm encoder stack over x[batch, seq, d_model].

    attn_mask[batch, seq] holds 1 for real positions, 0 for padding;
    padded keys get zero attention weight from every query. Pass a list
    as collect_attn to capture each layer's attention weights.
    """
    batch, seq, d_model = x.shape
    if d_model % heads != 0:
        raise ShapeError(f"d_model={d_model} not divisible by heads={heads}")
    mask = np.asarray(attn_mask, dtype=np.float64)
    if mask.shape != (batch, seq):
        raise ShapeError(f"mask shape {mask.shape} does not match ({batch}, {seq})")
    if not np.isin(mask, (0.0, 1.0)).all():
        raise ShapeError("attention mask entries must be 0 or 1")
    head_dim = d_model // heads
    # [batch, 1, 1, seq] bias over keys, shared by heads and queries
    key_bias = Tensor(np.where(mask[:, None, None, :] > 0, 0.0, MASK_BIAS))
    scale = Tensor(1.0 / np.sqrt(head_dim))

    for layer in range(layers):
        p = f"enc{layer}."
        normed = layer_norm(x, params[p + "ln1.g"], params[p + "ln1.b"])
        q = _split_heads(_linear(normed, params[p + "attn.wq"], params[p + "attn.qb"]), heads)
        k = _split_heads(_linear(normed, params[p + "attn.wk"], params[p + "attn.kb"]), heads)
        v = _split_heads(_linear(normed, params[p + "attn.wv"], params[p + "attn.vb"]), heads)
        scores = add(mul(matmul(q, transpose(k, (0, 1, 3, 2))), scale), key_bias)
        weights = softmax(scores)
        if collect_attn is not None:
            collect_attn.append(weights.data.copy())
        context = _merge_heads(matmul(weights, v))
        attended = _linear(context, params[p + "attn.wo"], params[p + "attn.ob"])
        if dropout_rate > 0.0 and rng is not None:
            attended = dropout(attended, dropout_rate, rng)
        x = add(x, attended)

        normed = layer_norm(x, params[p + "ln2.g"], params[p + "ln2.b"])
        hidden = relu(_linear(normed, params[p + "ff.w1"], params[p + "ff.b1"]))
        ff = _linear(hidden, params[p + "ff.w2"], params[p + "ff.b2"])
        if dropout_rate > 0.0 and rng is not None:
            ff = dropout(ff, dropout_rate, rng)
        x = add(x, ff)
    return x


def bce_loss(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean binary cross-entropy from logits: softplus(z) - y*z.

    The softplus is evaluated as logaddexp(0, z) so large positive or
    negative logits never overflow; d/dz = sigmoid(z) - y.
    """
    labels = np.asarray(labels, dtype=np.float64)
    if logits.data.shape != labels.shape:
        raise ShapeError(f"logits {logits.data.shape} vs labels {labels.shape}")
    z = logits.data
    per_example = np.logaddexp(0.0, z) - labels * z

    def backward(g):
        if logits.requires_grad:
            _accumulate(logits, g * (sigmoid(z) - labels))

    per = _node(per_example, (logits,), backward)
    return mean_all(per)


def sigmoid(z: np.ndarray) -> np.ndarray:
    """Stable elementwise logistic function (plain numpy, no graph)."""
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out
