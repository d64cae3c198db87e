"""Gradient-boosted trees on second-order logistic loss.

Exact greedy split finding (no histograms): every boundary between
consecutive distinct feature values is scored with the standard gain
    1/2 * [GL^2/(HL+lam) + GR^2/(HR+lam) - G^2/(H+lam)]
and leaves get weight -G/(H+lam). Routing sends x < threshold left,
ties right. Sparse inputs (trigram bags) are handled with an implicit
zero bucket, which requires all stored values to be positive.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np
import scipy.sparse as sp

from ..errors import FeatureSpaceMismatch, SingleClassError
from ..nn.layers import sigmoid
from .config import TrainConfig

Matrix = Union[np.ndarray, sp.spmatrix]


@dataclass
class Tree:
    feature: np.ndarray  # -1 marks a leaf
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def used_features(self) -> np.ndarray:
        return np.unique(self.feature[self.feature >= 0])


@dataclass
class GbdtModel:
    trees: list[Tree] = field(default_factory=list)
    learning_rate: float = 0.3
    base_score: float = 0.0
    n_features: int = 0
    feature_space_id: str = ""


def _gain(GL, HL, GR, HR, G, H, lam):
    return 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - G**2 / (H + lam))


class _DenseSplitter:
    def __init__(self, X: np.ndarray):
        self.X = np.asarray(X, dtype=np.float64)

    def column(self, idx: np.ndarray, feature: int) -> np.ndarray:
        return self.X[idx, feature]

    def best_split(self, idx, g, h, lam, min_child):
        Xn = self.X[idx]
        gn, hn = g[idx], h[idx]
        m, d = Xn.shape
        if m < 2:
            return None
        order = np.argsort(Xn, axis=0, kind="stable")
        Xs = np.take_along_axis(Xn, order, axis=0)
        GL = np.cumsum(gn[order], axis=0)[:-1]
        HL = np.cumsum(hn[order], axis=0)[:-1]
        G, H = gn.sum(), hn.sum()
        GR, HR = G - GL, H - HL
        valid = (Xs[:-1] < Xs[1:]) & (HL >= min_child) & (HR >= min_child)
        if not valid.any():
            return None
        gains = np.where(valid, _gain(GL, HL, GR, HR, G, H, lam), -np.inf)
        flat = int(np.argmax(gains))
        pos, feature = divmod(flat, d)
        best_gain = gains[pos, feature]
        if best_gain <= 1e-12:
            return None
        threshold = 0.5 * (Xs[pos, feature] + Xs[pos + 1, feature])
        return feature, float(threshold), float(best_gain)


class _SparseSplitter:
    """Split finder over CSC columns with an implicit zero bucket."""

    def __init__(self, X: sp.spmatrix):
        csc = sp.csc_matrix(X)
        csc.sum_duplicates()
        if csc.nnz and csc.data.min() <= 0:
            raise ValueError("sparse gbdt input must have strictly positive stored values")
        self.csc = csc
        self.n = csc.shape[0]
        counts = np.diff(csc.indptr)
        self.entry_feature = np.repeat(np.arange(csc.shape[1]), counts)

    def column(self, idx: np.ndarray, feature: int) -> np.ndarray:
        col = np.zeros(self.n)
        start, stop = self.csc.indptr[feature], self.csc.indptr[feature + 1]
        col[self.csc.indices[start:stop]] = self.csc.data[start:stop]
        return col[idx]

    def best_split(self, idx, g, h, lam, min_child):
        m = len(idx)
        if m < 2:
            return None
        in_node = np.zeros(self.n, dtype=bool)
        in_node[idx] = True
        keep = in_node[self.csc.indices]
        if not keep.any():
            return None
        feats = self.entry_feature[keep]
        vals = self.csc.data[keep]
        rows = self.csc.indices[keep]
        ge, he = g[rows], h[rows]

        order = np.lexsort((vals, feats))
        feats, vals, ge, he = feats[order], vals[order], ge[order], he[order]
        n_entries = len(feats)

        seg_start = np.zeros(n_entries, dtype=bool)
        seg_start[0] = True
        seg_start[1:] = feats[1:] != feats[:-1]
        start_positions = np.flatnonzero(seg_start)
        seg_id = np.cumsum(seg_start) - 1

        cg, ch = np.cumsum(ge), np.cumsum(he)
        base_g = np.where(start_positions > 0, cg[start_positions - 1], 0.0)
        base_h = np.where(start_positions > 0, ch[start_positions - 1], 0.0)
        prefix_g = cg - base_g[seg_id]  # inclusive, within segment
        prefix_h = ch - base_h[seg_id]

        end_positions = np.append(start_positions[1:], n_entries) - 1
        seg_total_g = prefix_g[end_positions]
        seg_total_h = prefix_h[end_positions]
        nnz = end_positions - start_positions + 1

        G, H = g[idx].sum(), h[idx].sum()
        zero_g = G - seg_total_g  # per segment
        zero_h = H - seg_total_h
        zero_m = m - nnz

        candidates: list[tuple[float, int, float]] = []

        # boundary between the zero bucket and the smallest stored value
        has_zero = zero_m > 0
        GL0, HL0 = zero_g, zero_h
        valid0 = has_zero & (HL0 >= min_child) & (H - HL0 >= min_child)
        if valid0.any():
            gains0 = np.where(valid0, _gain(GL0, HL0, G - GL0, H - HL0, G, H, lam), -np.inf)
            k = int(np.argmax(gains0))
            if gains0[k] > 1e-12:
                feature = int(feats[start_positions[k]])
                threshold = 0.5 * vals[start_positions[k]]
                candidates.append((float(gains0[k]), feature, float(threshold)))

        # boundaries between consecutive distinct values within a segment
        nxt = np.arange(1, n_entries + 1)
        interior = np.zeros(n_entries, dtype=bool)
        interior[:-1] = (feats[:-1] == feats[1:]) & (vals[:-1] < vals[1:])
        if interior.any():
            GL = zero_g[seg_id] + prefix_g
            HL = zero_h[seg_id] + prefix_h
            valid = interior & (HL >= min_child) & (H - HL >= min_child)
            if valid.any():
                gains = np.where(valid, _gain(GL, HL, G - GL, H - HL, G, H, lam), -np.inf)
                k = int(np.argmax(gains))
                if gains[k] > 1e-12:
                    threshold = 0.5 * (vals[k] + vals[nxt[k]])
                    candidates.append((float(gains[k]), int(feats[k]), float(threshold)))

        if not candidates:
            return None
        gain, feature, threshold = max(candidates)
        return feature, threshold, gain


def _grow_tree(splitter, idx, g, h, cfg: TrainConfig) -> Tree:
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    def build(node_idx: np.ndarray, depth: int) -> int:
        node = new_node()
        G, H = g[node_idx].sum(), h[node_idx].sum()
        split = None
        if depth < cfg.max_depth:
            split = splitter.best_split(node_idx, g, h, cfg.reg_lambda, cfg.min_child_weight)
        if split is None:
            value[node] = -G / (H + cfg.reg_lambda)
            return node
        feat, thr, _ = split
        x = splitter.column(node_idx, feat)
        go_left = x < thr
        feature[node] = feat
        threshold[node] = thr
        left[node] = build(node_idx[go_left], depth + 1)
        right[node] = build(node_idx[~go_left], depth + 1)
        return node

    build(np.asarray(idx), 0)
    return Tree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value),
    )


def _route_tree(tree: Tree, dense_lookup) -> np.ndarray:
    """dense_lookup(feature) -> full column; returns per-row leaf values."""
    n = dense_lookup.n_rows
    node = np.zeros(n, dtype=np.int64)
    out = np.zeros(n)
    active = np.arange(n)
    while len(active):
        feats = tree.feature[node[active]]
        leaf = feats < 0
        if leaf.any():
            done = active[leaf]
            out[done] = tree.value[node[done]]
            active = active[~leaf]
            if not len(active):
                break
            feats = tree.feature[node[active]]
        thresholds = tree.threshold[node[active]]
        x = dense_lookup.values(active, feats)
        go_left = x < thresholds
        node[active] = np.where(go_left, tree.left[node[active]], tree.right[node[active]])
    return out


class _Lookup:
    def __init__(self, X: Matrix):
        self.sparse = sp.issparse(X)
        self.X = sp.csc_matrix(X) if self.sparse else np.asarray(X, dtype=np.float64)
        self.n_rows = X.shape[0]
        self._cache: dict[int, np.ndarray] = {}

    def _column(self, feature: int) -> np.ndarray:
        if feature not in self._cache:
            if self.sparse:
                col = np.zeros(self.n_rows)
                start, stop = self.X.indptr[feature], self.X.indptr[feature + 1]
                col[self.X.indices[start:stop]] = self.X.data[start:stop]
                self._cache[feature] = col
            else:
                self._cache[feature] = self.X[:, feature]
        return self._cache[feature]

    def values(self, rows: np.ndarray, features: np.ndarray) -> np.ndarray:
        out = np.empty(len(rows))
        for feat in np.unique(features):
            mask = features == feat
            out[mask] = self._column(int(feat))[rows[mask]]
        return out


def _ensemble_margins(model: GbdtModel, X: Matrix) -> np.ndarray:
    lookup = _Lookup(X)
    margins = np.full(X.shape[0], model.base_score)
    for tree in model.trees:
        margins += model.learning_rate * _route_tree(tree, lookup)
    return margins


def train_gbdt(
    X: Matrix, y: Sequence[int], cfg: TrainConfig, feature_space_id: str = ""
) -> GbdtModel:
    y = np.asarray(y, dtype=np.float64)
    if len(np.unique(y)) < 2:
        raise SingleClassError("gbdt training needs both classes")
    splitter = _SparseSplitter(X) if sp.issparse(X) else _DenseSplitter(X)
    lookup = _Lookup(X)
    n = X.shape[0]
    model = GbdtModel(
        learning_rate=cfg.shrinkage,
        base_score=0.0,
        n_features=X.shape[1],
        feature_space_id=feature_space_id,
    )
    margins = np.full(n, model.base_score)
    all_rows = np.arange(n)
    for _ in range(cfg.n_rounds):
        p = sigmoid(margins)
        g = p - y
        h = p * (1.0 - p)
        tree = _grow_tree(splitter, all_rows, g, h, cfg)
        model.trees.append(tree)
        margins += model.learning_rate * _route_tree(tree, lookup)
    return model


def predict_gbdt(m: GbdtModel, X: Matrix) -> np.ndarray:
    if X.shape[1] != m.n_features:
        raise FeatureSpaceMismatch(
            f"model has {m.n_features} features, input has {X.shape[1]}"
        )
    return sigmoid(_ensemble_margins(m, X))
