"""LODA: an ensemble of one-dimensional histograms on sparse random projections.

Every projection is fitted on its own bootstrap resample of the clean data, so
clean rows can be scored with only the projections whose resample missed them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._common import as_points, check_leave_out, fingerprint, unit_rng

__all__ = ["Loda", "score_loda", "train_loda"]

_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class Loda:
    """Trained LODA ensemble.

    Attributes:
        weights: (k, d) projection directions, unit norm, ``nnz`` nonzeros each.
        lo: Left edge of each projection's histogram.
        width: Bin width of each projection's histogram.
        n_bins: Number of bins per projection.
        counts: Bin counts of all projections, concatenated.
        offsets: Start of each projection's bins in ``counts`` (length k + 1).
        bootstrap_indices: (k, m) training-row indices of each resample.
        pseudo_count: Count substituted for empty or out-of-range bins.
    """

    weights: np.ndarray
    lo: np.ndarray
    width: np.ndarray
    n_bins: np.ndarray
    counts: np.ndarray
    offsets: np.ndarray
    bootstrap_indices: np.ndarray
    n_train: int
    dim: int
    seed: int
    pseudo_count: float
    train_fingerprint: str

    @property
    def n_projections(self) -> int:
        return int(self.weights.shape[0])

    @property
    def sample_size(self) -> int:
        return int(self.bootstrap_indices.shape[1])

    def inbag_matrix(self) -> np.ndarray:
        inbag = np.zeros((self.n_train, self.n_projections), dtype=bool)
        cols = np.repeat(np.arange(self.n_projections), self.sample_size)
        inbag[self.bootstrap_indices.reshape(-1), cols] = True
        return inbag


def _bin_width(z: np.ndarray) -> float:
    # Freedman-Diaconis, falling back to range/sqrt(m) and then to 1.
    m = z.size
    q75, q25 = np.percentile(z, [75, 25])
    h = 2.0 * (q75 - q25) / m ** (1.0 / 3.0)
    if h > 0:
        return float(h)
    span = float(z.max() - z.min())
    if span > 0:
        return span / math.ceil(math.sqrt(m))
    return 1.0


def _direction(rng: np.random.Generator, d: int, nnz: int) -> np.ndarray:
    w = np.zeros(d)
    dims = rng.choice(d, size=nnz, replace=False)
    w[dims] = rng.standard_normal(nnz)
    norm = np.linalg.norm(w)
    if norm == 0.0:  # pragma: no cover - probability zero
        w[dims[0]] = 1.0
        norm = 1.0
    return w / norm


def train_loda(
    data,
    n_projections: int = 1000,
    seed: int = 0,
    *,
    nnz: int | None = None,
    bin_width: float | None = None,
    bootstrap: bool = True,
    pseudo_count: float | None = None,
) -> Loda:
    """Fit ``n_projections`` projection histograms on bootstrap resamples.

    ``nnz`` defaults to ``ceil(sqrt(d))`` nonzero coordinates per direction,
    ``bin_width`` to the Freedman-Diaconis width of each projected resample
    and ``pseudo_count`` to ``1 / m`` for a resample of size ``m``.
    ``bootstrap=False`` fits every projection on the full data (no leave-out
    scoring is then possible).
    """
    X = as_points(data, name="training data")
    if n_projections < 1:
        raise ValueError(f"n_projections must be >= 1, got {n_projections}")
    n, d = X.shape
    nnz = math.ceil(math.sqrt(d)) if nnz is None else int(nnz)
    if not (1 <= nnz <= d):
        raise ValueError(f"nnz must be in [1, {d}], got {nnz}")
    if bin_width is not None and bin_width <= 0:
        raise ValueError(f"bin_width must be > 0, got {bin_width}")

    weights = np.empty((n_projections, d))
    lo = np.empty(n_projections)
    width = np.empty(n_projections)
    n_bins = np.empty(n_projections, dtype=np.int64)
    boot = np.empty((n_projections, n), dtype=np.int64)
    counts = []
    for k in range(n_projections):
        rng = unit_rng(seed, k)
        weights[k] = _direction(rng, d, nnz)
        boot[k] = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        z = X[boot[k]] @ weights[k]
        h = _bin_width(z) if bin_width is None else float(bin_width)
        nb = max(1, math.ceil((z.max() - z.min()) / h))
        idx = np.minimum(np.floor((z - z.min()) / h).astype(np.int64), nb - 1)
        counts.append(np.bincount(idx, minlength=nb))
        lo[k], width[k], n_bins[k] = z.min(), h, nb

    offsets = np.concatenate(([0], np.cumsum(n_bins)))
    return Loda(
        weights=weights,
        lo=lo,
        width=width,
        n_bins=n_bins,
        counts=np.concatenate(counts),
        offsets=offsets,
        bootstrap_indices=boot,
        n_train=n,
        dim=d,
        seed=int(seed),
        pseudo_count=float(1.0 / n if pseudo_count is None else pseudo_count),
        train_fingerprint=fingerprint(X),
    )


def _neg_log_density(model: Loda, X: np.ndarray) -> np.ndarray:
    z = X @ model.weights.T
    pos = (z - model.lo) / model.width
    idx = np.floor(pos).astype(np.int64)
    # The histogram's top edge belongs to the last bin.
    idx = np.where(idx == model.n_bins, model.n_bins - 1, idx)
    inside = (idx >= 0) & (idx < model.n_bins) & (pos <= model.n_bins)
    flat = model.offsets[:-1] + np.where(inside, idx, 0)
    c = np.where(inside, model.counts[flat], 0).astype(np.float64)
    c = np.maximum(c, model.pseudo_count)
    return -np.log(c / (model.sample_size * model.width))


def score_loda(model: Loda, points, *, leave_out: bool = False) -> np.ndarray:
    """Mean negative log histogram density over projections; higher is more anomalous.

    With ``leave_out=True``, ``points`` must be the training set and each row
    is averaged only over projections whose bootstrap resample excluded it.
    """
    X = as_points(points)
    if X.shape[1] != model.dim:
        raise ValueError(f"dimension mismatch: model has d={model.dim}, points have d={X.shape[1]}")
    if leave_out:
        if X.shape[0] != model.n_train or fingerprint(X) != model.train_fingerprint:
            raise ValueError("leave-out scoring needs the exact training set the model was fitted on")
        inbag = model.inbag_matrix()
        check_leave_out(inbag, "bootstrap resample")
    out = np.empty(X.shape[0])
    for a in range(0, X.shape[0], _CHUNK):
        nll = _neg_log_density(model, X[a : a + _CHUNK])
        if leave_out:
            keep = ~inbag[a : a + _CHUNK]
            out[a : a + _CHUNK] = (nll * keep).sum(axis=1) / keep.sum(axis=1)
        else:
            out[a : a + _CHUNK] = nll.mean(axis=1)
    return out
