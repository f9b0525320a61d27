"""Synthetic benchmark: Gaussian nominals and shifted-subset Gaussian aliens.

Nominal rows are i.i.d. N(0, 1) in every coordinate. An alien row draws a
pattern (by default 3 shifted coordinates with probability 0.4, 4 with
probability 0.6), picks that many coordinates uniformly at random and shifts
their mean to ``shift``; every coordinate keeps unit variance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

__all__ = [
    "LabeledPointSet",
    "SynthConfig",
    "gen_alien",
    "gen_mixture",
    "gen_nominal",
    "n_aliens_exact",
]

MixtureMode = Literal["exact_count", "iid"]


@dataclass(frozen=True)
class SynthConfig:
    dim: int = 9
    shift: float = 3.0
    # (probability, number of shifted coordinates)
    pattern: tuple[tuple[float, int], ...] = field(default=((0.4, 3), (0.6, 4)))

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        probs = [p for p, _ in self.pattern]
        if any(p < 0 for p in probs) or not math.isclose(sum(probs), 1.0, abs_tol=1e-12):
            raise ValueError(f"pattern probabilities must be >= 0 and sum to 1, got {probs}")
        if any(not (0 <= k <= self.dim) for _, k in self.pattern):
            raise ValueError(f"shifted-dimension counts must be in [0, {self.dim}]")


@dataclass(frozen=True)
class LabeledPointSet:
    """Points with ground-truth labels (True = alien), for evaluation only.

    Detectors and threshold fitting take ``.points``; passing the labelled
    container itself is rejected.
    """

    points: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        if len(self.points) != len(self.labels):
            raise ValueError("points and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def n_alien(self) -> int:
        return int(np.count_nonzero(self.labels))


def _rng(seed) -> np.random.Generator:
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


def gen_nominal(n: int, config: SynthConfig = SynthConfig(), seed=None) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    return _rng(seed).standard_normal((n, config.dim))


def gen_alien(n: int, config: SynthConfig = SynthConfig(), seed=None, *, return_masks: bool = False):
    """Draw ``n`` alien rows; with ``return_masks`` also return the shifted-coordinate masks."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = _rng(seed)
    probs = np.array([p for p, _ in config.pattern])
    sizes = np.array([k for _, k in config.pattern])
    k = sizes[rng.choice(len(sizes), size=n, p=probs)]
    # A uniformly random k-subset per row: the k smallest of d i.i.d. uniforms.
    ranks = np.argsort(rng.random((n, config.dim)), axis=1).argsort(axis=1)
    masks = ranks < k[:, None]
    X = rng.standard_normal((n, config.dim)) + config.shift * masks
    return (X, masks) if return_masks else X


def n_aliens_exact(n: int, alpha: float) -> int:
    """``round(alpha * n)`` with halves rounded up."""
    return int(math.floor(alpha * n + 0.5))


def gen_mixture(
    n: int,
    alpha: float,
    mode: MixtureMode = "exact_count",
    config: SynthConfig = SynthConfig(),
    seed=None,
) -> LabeledPointSet:
    """Mixture of nominals and aliens.

    ``exact_count`` places exactly ``round(alpha * n)`` aliens at shuffled
    positions; ``iid`` labels each row alien independently with probability
    ``alpha``.
    """
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = _rng(seed)
    if mode == "exact_count":
        labels = np.zeros(n, dtype=bool)
        labels[: n_aliens_exact(n, alpha)] = True
        rng.shuffle(labels)
    elif mode == "iid":
        labels = rng.random(n) < alpha
    else:
        raise ValueError(f"unknown mixture mode: {mode!r}")
    X = np.empty((n, config.dim))
    n_alien = int(labels.sum())
    if n_alien:
        X[labels] = gen_alien(n_alien, config, rng)
    if n_alien < n:
        X[~labels] = gen_nominal(n - n_alien, config, rng)
    return LabeledPointSet(points=X, labels=labels)
