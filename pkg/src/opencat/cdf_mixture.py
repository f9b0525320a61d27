"""Step-function CDF arithmetic for threshold selection.

The clean sample's scores and the contaminated (mixture) sample's scores are
turned into empirical CDFs, the alien-score CDF is recovered from the mixture
identity ``F_m = (1 - alpha) F_0 + alpha F_a``, and the alarm threshold is the
largest observed score at which the recovered CDF is still at most ``q``.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

__all__ = [
    "AlienCdfEstimate",
    "DetectionThreshold",
    "EmpiricalCdf",
    "as_scores",
    "classify",
    "empirical_cdf",
    "estimate_alien_cdf",
    "fit_threshold",
    "isotonic_regression",
    "isotonize_and_clip",
    "select_threshold",
]

Variant = Literal["basic", "iso"]

# Absolute slack for comparing a recovered CDF value against q. The values are
# differences of fractions scaled by 1/alpha, so exact ties come out a few ulps
# off in floating point.
COMPARE_TOL = 1e-12


def as_scores(values, *, name: str = "scores") -> np.ndarray:
    """Validate a score sample and return it as a 1-d float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    if arr.size == 0:
        raise ValueError(f"empty sample: {name}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise ValueError(f"non-finite value in {name} at index {bad}: {arr[bad]!r}")
    return arr


@dataclass(frozen=True)
class EmpiricalCdf:
    """Right-continuous empirical CDF.

    Attributes:
        support: Sorted distinct sample values.
        counts: Multiplicity of each support value.
        cum: Cumulative fractions ``#(values <= support[i]) / n``; the last
            entry is exactly 1.
    """

    support: np.ndarray
    counts: np.ndarray
    cum: np.ndarray

    @property
    def n(self) -> int:
        return int(self.counts.sum())

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        idx = np.searchsorted(self.support, x, side="right")
        padded = np.concatenate(([0.0], self.cum))
        return padded[idx]

    def count_le(self, x) -> np.ndarray:
        """Integer numerator of the CDF: number of sample values ``<= x``."""
        idx = np.searchsorted(self.support, np.asarray(x, dtype=np.float64), side="right")
        return np.concatenate(([0], np.cumsum(self.counts)))[idx]


def empirical_cdf(sample) -> EmpiricalCdf:
    values = np.sort(as_scores(sample, name="sample"))
    support, counts = np.unique(values, return_counts=True)
    cum = np.cumsum(counts) / values.size
    cum[-1] = 1.0
    return EmpiricalCdf(support=support, counts=counts, cum=cum)


@dataclass(frozen=True)
class AlienCdfEstimate:
    """Recovered alien-score CDF evaluated on the pooled score grid.

    ``raw`` can leave [0, 1] and need not be monotone. ``legal`` holds the
    isotonized and clipped version once :func:`isotonize_and_clip` has run.
    """

    grid: np.ndarray
    raw: np.ndarray
    alpha: float
    legal: np.ndarray | None = None


def estimate_alien_cdf(f0: EmpiricalCdf, fm: EmpiricalCdf, alpha: float) -> AlienCdfEstimate:
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"invalid alpha: {alpha!r} (must be in (0, 1])")
    grid = np.union1d(f0.support, fm.support)
    raw = (fm(grid) - (1.0 - alpha) * f0(grid)) / alpha
    return AlienCdfEstimate(grid=grid, raw=raw, alpha=float(alpha))


def isotonic_regression(y) -> np.ndarray:
    """Least-squares non-decreasing fit with uniform weights (pool adjacent violators)."""
    y = np.asarray(y, dtype=np.float64)
    if y.size == 0:
        return y.copy()
    # Each block keeps its sum and length; adjacent blocks merge while their
    # means are out of order.
    sums: list[float] = []
    lens: list[int] = []
    for v in y.tolist():
        s, k = v, 1
        while sums and sums[-1] * k > s * lens[-1]:
            s += sums.pop()
            k += lens.pop()
        sums.append(s)
        lens.append(k)
    means = np.array(sums) / np.array(lens)
    return np.repeat(means, lens)


def isotonize_and_clip(est: AlienCdfEstimate) -> AlienCdfEstimate:
    legal = np.clip(isotonic_regression(est.raw), 0.0, 1.0)
    return replace(est, legal=legal)


@dataclass(frozen=True)
class DetectionThreshold:
    """Alarm threshold: a score alarms iff it is strictly greater than ``tau``.

    ``tau == -inf`` is the flag-all sentinel used when no grid point qualifies.
    """

    tau: float
    q: float
    variant: Variant
    alpha: float

    @property
    def flag_all(self) -> bool:
        return self.tau == -np.inf

    def to_dict(self) -> dict:
        return {
            "tau": None if self.flag_all else float(self.tau),
            "flag_all": self.flag_all,
            "q": self.q,
            "variant": self.variant,
            "alpha": self.alpha,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> DetectionThreshold:
        tau = -np.inf if doc.get("flag_all") or doc.get("tau") is None else float(doc["tau"])
        variant = doc.get("variant", "basic")
        if variant not in ("basic", "iso"):
            raise ValueError(f"unknown threshold variant: {variant!r}")
        return cls(tau=tau, q=float(doc["q"]), variant=variant, alpha=float(doc["alpha"]))


def select_threshold(est: AlienCdfEstimate, q: float, variant: Variant = "basic") -> DetectionThreshold:
    """Largest grid point ``u`` with estimated alien CDF ``F(u) <= q``."""
    if not (0.0 < q < 1.0):
        raise ValueError(f"q must be in (0, 1), got {q!r}")
    if variant == "basic":
        values = est.raw
    elif variant == "iso":
        if est.legal is None:
            raise ValueError("iso variant needs isotonize_and_clip() first")
        values = est.legal
    else:
        raise ValueError(f"unknown variant: {variant!r}")
    ok = np.flatnonzero(values <= q + COMPARE_TOL)
    tau = float(est.grid[ok[-1]]) if ok.size else -np.inf
    return DetectionThreshold(tau=tau, q=float(q), variant=variant, alpha=est.alpha)


def fit_threshold(clean_scores, mixture_scores, alpha: float, q: float, variant: Variant = "basic") -> DetectionThreshold:
    """Run the whole selection procedure on two raw score samples."""
    est = estimate_alien_cdf(empirical_cdf(clean_scores), empirical_cdf(mixture_scores), alpha)
    if variant == "iso":
        est = isotonize_and_clip(est)
    return select_threshold(est, q, variant)


def classify(scores, threshold: DetectionThreshold) -> np.ndarray:
    return np.asarray(scores, dtype=np.float64) > threshold.tau
