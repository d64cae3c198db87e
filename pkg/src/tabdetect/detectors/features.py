"""Featurization: encoded rows to matrices for the fixed-input detectors.

Trigram bags stay sparse (the feature space is the vocab cap);
ColumnVec batches flatten to [num | cat ordinals | num_mask | cat_mask];
token sequences pad with PAD=0 to a fixed width.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ..encoders import ColumnVec, SparseBag, TokenSeq


def bags_to_csr(bags: Sequence[SparseBag], n_features: int) -> sp.csr_matrix:
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for bag in bags:
        for fid in sorted(bag.counts):
            indices.append(fid)
            data.append(float(bag.counts[fid]))
        indptr.append(len(indices))
    return sp.csr_matrix(
        (np.array(data), np.array(indices, dtype=np.int64), np.array(indptr, dtype=np.int64)),
        shape=(len(bags), n_features),
    )


def columnvecs_to_dense(vecs: Sequence[ColumnVec]) -> np.ndarray:
    # masked slots are forced to 0 so no detector can see behind a mask
    rows = [
        np.concatenate(
            [
                v.num * v.num_mask,
                v.cat.astype(np.float64) * v.cat_mask,
                v.num_mask,
                v.cat_mask,
            ]
        )
        for v in vecs
    ]
    return np.stack(rows)


def tokenseqs_to_dense(seqs: Sequence[TokenSeq], width: int) -> np.ndarray:
    out = np.zeros((len(seqs), width), dtype=np.float64)
    for i, seq in enumerate(seqs):
        ids = seq.ids[:width]
        out[i, : len(ids)] = ids
    return out


def stratified_split(
    strata: Sequence, val_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic per-stratum split; every stratum with >= 2 members
    contributes at least one validation row."""
    rng = np.random.default_rng(seed)
    groups: dict = {}
    for i, key in enumerate(strata):
        groups.setdefault(key, []).append(i)
    train_idx: list[int] = []
    val_idx: list[int] = []
    for key in sorted(groups, key=repr):
        members = np.array(groups[key])
        members = members[rng.permutation(len(members))]
        n_val = int(round(val_fraction * len(members)))
        if len(members) >= 2:
            n_val = min(max(n_val, 1), len(members) - 1)
        else:
            n_val = 0
        val_idx.extend(members[:n_val])
        train_idx.extend(members[n_val:])
    return np.array(sorted(train_idx)), np.array(sorted(val_idx))
