"""Isolation Forest with full-depth trees and out-of-bag scoring.

Each tree is grown on a random subsample (without replacement) of the clean
data until every leaf holds a single row or rows with identical features.
The anomaly score of a point is ``2 ** (-mean_depth / c(psi))`` where
``mean_depth`` is the average number of edges from root to the point's leaf
and ``c(m) = 2 H(m-1) - 2 (m-1) / m`` normalizes by the average unsuccessful
search length in a binary search tree of ``m`` keys. Higher is more anomalous.

Out-of-bag scoring lets the clean training rows be scored without the
optimistic bias of trees that saw them: each row is averaged only over trees
whose subsample excluded it.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._common import as_points, check_leave_out, fingerprint, unit_rng

logger = logging.getLogger(__name__)

__all__ = ["IsolationForest", "average_path_length", "score_iforest", "train_iforest"]


def average_path_length(m: int) -> float:
    """``c(m) = 2 H(m-1) - 2 (m-1)/m`` with the exact harmonic number."""
    if m <= 1:
        return 0.0
    harmonic = math.fsum(1.0 / i for i in range(1, m))
    return 2.0 * harmonic - 2.0 * (m - 1) / m


@dataclass(frozen=True, eq=False)
class IsolationForest:
    """Trained forest; all trees are packed into flat node arrays.

    Node ``i`` is a leaf when ``feature[i] == -1``. ``left``/``right`` hold
    global node indices and ``roots[t]`` is the root of tree ``t``.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    depth: np.ndarray
    size: np.ndarray
    roots: np.ndarray
    subsample_indices: np.ndarray
    n_train: int
    dim: int
    seed: int
    subsample_fraction: float
    train_fingerprint: str

    @property
    def n_trees(self) -> int:
        return int(self.roots.size)

    @property
    def psi(self) -> int:
        return int(self.subsample_indices.shape[1])

    def tree_nodes(self, t: int) -> slice:
        end = int(self.roots[t + 1]) if t + 1 < self.n_trees else int(self.feature.size)
        return slice(int(self.roots[t]), end)

    def inbag_matrix(self) -> np.ndarray:
        """Boolean (n_train, n_trees) matrix: row ``i`` was in tree ``t``'s subsample."""
        inbag = np.zeros((self.n_train, self.n_trees), dtype=bool)
        cols = np.repeat(np.arange(self.n_trees), self.psi)
        inbag[self.subsample_indices.reshape(-1), cols] = True
        return inbag


def _grow_one(X: np.ndarray, psi: int, seed: int, t: int):
    rng = unit_rng(seed, t)
    idx = rng.choice(X.shape[0], size=psi, replace=False)
    uniforms = rng.random(2 * psi)
    return idx, _kernels.grow_tree(X[idx], uniforms)


def train_iforest(
    data,
    n_trees: int = 1000,
    subsample_fraction: float = 0.2,
    seed: int = 0,
    *,
    n_jobs: int = 1,
) -> IsolationForest:
    """Grow ``n_trees`` full-depth isolation trees on the clean data.

    Args:
        data: (n, d) feature matrix of clean points.
        n_trees: Number of trees.
        subsample_fraction: Each tree sees ``ceil(fraction * n)`` rows drawn
            without replacement.
        seed: Root seed. Tree ``t`` uses its own derived stream, so the
            forest does not depend on ``n_jobs``.
        n_jobs: Worker threads for growing trees.
    """
    X = as_points(data, name="training data")
    if n_trees < 1:
        raise ValueError(f"n_trees must be >= 1, got {n_trees}")
    if not (0.0 < subsample_fraction <= 1.0):
        raise ValueError(f"subsample_fraction must be in (0, 1], got {subsample_fraction}")
    n = X.shape[0]
    psi = max(1, min(n, math.ceil(subsample_fraction * n - 1e-9)))

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            grown = list(pool.map(lambda t: _grow_one(X, psi, seed, t), range(n_trees)))
    else:
        grown = [_grow_one(X, psi, seed, t) for t in range(n_trees)]

    offsets = np.zeros(n_trees, dtype=np.int64)
    total = 0
    for t, (_, nodes) in enumerate(grown):
        offsets[t] = total
        total += nodes[0].size
    shift = lambda arr, off: np.where(arr >= 0, arr + off, -1).astype(np.int32)  # noqa: E731
    model = IsolationForest(
        feature=np.concatenate([g[1][0] for g in grown]),
        threshold=np.concatenate([g[1][1] for g in grown]),
        left=np.concatenate([shift(g[1][2], offsets[t]) for t, g in enumerate(grown)]),
        right=np.concatenate([shift(g[1][3], offsets[t]) for t, g in enumerate(grown)]),
        depth=np.concatenate([g[1][4] for g in grown]),
        size=np.concatenate([g[1][5] for g in grown]),
        roots=offsets,
        subsample_indices=np.stack([g[0] for g in grown]).astype(np.int64),
        n_train=n,
        dim=X.shape[1],
        seed=int(seed),
        subsample_fraction=float(subsample_fraction),
        train_fingerprint=fingerprint(X),
    )
    logger.debug("grew %d trees (psi=%d, %d nodes)", n_trees, psi, total)
    return model


def mean_path_length(model: IsolationForest, points, *, oob: bool = False) -> np.ndarray:
    X = as_points(points)
    if X.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: model has d={model.dim}, points have d={X.shape[1]}")
    if oob:
        if X.shape[0] != model.n_train or fingerprint(X) != model.train_fingerprint:
            raise ValueError("out-of-bag scoring needs the exact training set the forest was grown on")
        inbag = model.inbag_matrix()
        check_leave_out(inbag, "tree subsample")
        skip = np.ascontiguousarray(inbag.T)
    else:
        skip = np.zeros((1, 1), dtype=bool)
    total, used = _kernels.path_sums(
        X, model.feature, model.threshold, model.left, model.right,
        model.depth, model.roots, skip, oob,
    )
    return total / used


def score_iforest(model: IsolationForest, points, *, oob: bool = False) -> np.ndarray:
    """Anomaly scores in (0, 1]; higher is more anomalous.

    With ``oob=True``, ``points`` must be the training set itself and every
    row is scored only by trees that did not sample it.
    """
    depth = mean_path_length(model, points, oob=oob)
    c = average_path_length(model.psi)
    if c == 0.0:
        # psi == 1: every tree is a single leaf and every depth is 0.
        c = 1.0
    return np.exp2(-depth / c)
