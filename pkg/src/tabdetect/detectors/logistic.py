"""L2-regularized logistic regression trained with the shared optimizer.

Works on sparse trigram bags (kept sparse end to end) and on dense
matrices. Early-stops on validation AUC.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from ..errors import FeatureSpaceMismatch, SingleClassError
from ..metrics import roc_auc
from ..nn import ParamSet, Tensor, optimizer_step
from ..nn.layers import sigmoid
from .config import TrainConfig
from .features import stratified_split

Matrix = Union[np.ndarray, sp.spmatrix]


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    feature_space_id: str


def _margins(X: Matrix, w: np.ndarray, b: float) -> np.ndarray:
    z = X @ w
    if sp.issparse(z):
        z = np.asarray(z).ravel()
    return np.asarray(z).ravel() + b


def train_logistic(
    X: Matrix,
    y: Sequence[int],
    cfg: TrainConfig,
    feature_space_id: str = "",
    strata: Optional[Sequence] = None,
) -> LogisticModel:
    """Mini-batch gradient descent on BCE + (l2/2)*|w|^2, seeded and
    deterministic; keeps the weights from the best validation epoch."""
    y = np.asarray(y, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise SingleClassError("logistic training needs both classes")
    n, d = X.shape
    X_csr = sp.csr_matrix(X) if sp.issparse(X) else np.asarray(X, dtype=np.float64)

    split_keys = list(strata) if strata is not None else [int(v) for v in y]
    train_idx, val_idx = stratified_split(split_keys, cfg.val_fraction, cfg.seed)
    if len(np.unique(y[train_idx])) < 2 or len(np.unique(y[val_idx])) < 2:
        # fall back to a label-stratified split when strata are degenerate
        train_idx, val_idx = stratified_split([int(v) for v in y], cfg.val_fraction, cfg.seed)
    # early stopping needs a scoreable validation slice
    can_early_stop = len(val_idx) > 0 and len(np.unique(y[val_idx])) == 2

    w = Tensor(np.zeros(d), requires_grad=True)
    b = Tensor(np.zeros(1), requires_grad=True)
    pset = ParamSet({"w": w, "b": b})
    rng = np.random.default_rng(cfg.seed)

    best_auc = -1.0
    best = (w.data.copy(), float(b.data[0]))
    stale = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(train_idx)
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            Xb = X_csr[batch]
            z = _margins(Xb, w.data, float(b.data[0]))
            residual = (sigmoid(z) - y[batch]) / len(batch)
            gw = Xb.T @ residual
            if sp.issparse(gw):
                gw = np.asarray(gw.todense()).ravel()
            w.grad = np.asarray(gw).ravel() + cfg.l2 * w.data
            b.grad = np.array([residual.sum()])
            optimizer_step(pset, cfg.lr)

        if not can_early_stop:
            best = (w.data.copy(), float(b.data[0]))
            continue
        val_scores = sigmoid(_margins(X_csr[val_idx], w.data, float(b.data[0])))
        auc = roc_auc(val_scores, y[val_idx])
        if auc > best_auc + 1e-12:
            best_auc = auc
            best = (w.data.copy(), float(b.data[0]))
            stale = 0
        else:
            if auc >= best_auc - 1e-12:
                # tie: keep the more-trained weights, but count staleness
                best = (w.data.copy(), float(b.data[0]))
            stale += 1
            if stale >= cfg.early_stop_patience:
                break

    return LogisticModel(weights=best[0], bias=best[1], feature_space_id=feature_space_id)


def predict_logistic(m: LogisticModel, X: Matrix) -> np.ndarray:
    if X.shape[1] != len(m.weights):
        raise FeatureSpaceMismatch(
            f"model has {len(m.weights)} features, input has {X.shape[1]}"
        )
    return sigmoid(_margins(X, m.weights, m.bias))
