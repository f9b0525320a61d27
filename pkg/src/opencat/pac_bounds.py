"""Sample-size calculators for the alien detection-rate guarantee.

With ``n`` clean and ``n`` mixture scores, the fitted threshold detects at
least ``1 - (q + epsilon)`` of aliens with probability ``1 - delta`` once

    n > 1/2 * ln(2 / (1 - sqrt(1 - delta))) * (1/epsilon)^2 * ((2 - alpha)/alpha)^2.

The same expression with an upper bound ``alpha' >= alpha`` covers the case
where only an overestimate of the alien fraction is known (this additionally
needs an admissible detector, see :func:`check_admissibility`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import mpmath
import numpy as np

from .cdf_mixture import EmpiricalCdf

__all__ = [
    "Admissibility",
    "PacParams",
    "achieved_epsilon",
    "check_admissibility",
    "massart_bound",
    "required_sample_size",
    "sample_size_rhs",
]


@dataclass(frozen=True)
class PacParams:
    alpha: float
    q: float
    epsilon: float
    delta: float
    alpha_prime: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha!r}")
        if not (0.0 < self.q < 1.0):
            raise ValueError(f"q must be in (0, 1), got {self.q!r}")
        if not (0.0 < self.epsilon < 1.0 - self.q):
            raise ValueError(
                f"epsilon must be in (0, 1 - q) = (0, {1.0 - self.q:g}), got {self.epsilon!r}"
            )
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must be in (0, 1), got {self.delta!r}")
        if self.alpha_prime is not None and not (self.alpha <= self.alpha_prime <= 1.0):
            raise ValueError(
                f"alpha_prime must be in [alpha, 1] = [{self.alpha:g}, 1], got {self.alpha_prime!r}"
            )

    @property
    def eta(self) -> float:
        return self.q + self.epsilon


def _log_term(delta):
    return math.log(2.0 / (1.0 - math.sqrt(1.0 - delta)))


def sample_size_rhs(delta: float, epsilon: float, alpha: float) -> float:
    """Right-hand side of the sample-size condition (``n`` must exceed it)."""
    ratio = (2.0 - alpha) / alpha
    return 0.5 * _log_term(delta) * ratio * ratio / (epsilon * epsilon)


def _rhs_mp(delta: float, epsilon: float, alpha: float):
    with mpmath.workdps(50):
        d, e, a = mpmath.mpf(delta), mpmath.mpf(epsilon), mpmath.mpf(alpha)
        return mpmath.log(2 / (1 - mpmath.sqrt(1 - d))) * ((2 - a) / a) ** 2 / (2 * e**2)


def required_sample_size(params: PacParams, use_alpha_prime: bool = False) -> int:
    """Smallest integer ``n`` strictly above the sample-size bound."""
    if use_alpha_prime:
        if params.alpha_prime is None:
            raise ValueError("use_alpha_prime=True but alpha_prime is not set")
        alpha = params.alpha_prime
    else:
        alpha = params.alpha
    rhs = sample_size_rhs(params.delta, params.epsilon, alpha)
    n = math.floor(rhs) + 1
    # Re-decide in extended precision when rhs sits on an integer boundary.
    if abs(rhs - round(rhs)) <= 1e-9 * max(1.0, rhs):
        exact = _rhs_mp(params.delta, params.epsilon, alpha)
        n = int(mpmath.floor(exact)) + 1
    return n


def achieved_epsilon(n: float, delta: float, alpha: float) -> float:
    """Slack ``epsilon`` guaranteed by ``n`` samples (the bound solved for epsilon)."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n!r}")
    if not (0.0 < delta < 1.0):
        raise ValueError(f"delta must be in (0, 1), got {delta!r}")
    if not (0.0 < alpha <= 1.0):
        raise ValueError(f"alpha must be in (0, 1], got {alpha!r}")
    return (2.0 - alpha) / alpha * math.sqrt(_log_term(delta) / (2.0 * n))


def massart_bound(lam: float, *, clamp: bool = True) -> float:
    """Tail bound ``P(sqrt(n) * sup|F_n - F| > lam) <= 2 exp(-2 lam^2)``.

    The raw value exceeds 1 for small ``lam``; ``clamp=False`` returns it
    unchanged, which is what a union bound wants.
    """
    if lam < 0:
        raise ValueError(f"lambda must be >= 0, got {lam!r}")
    raw = 2.0 * math.exp(-2.0 * lam * lam)
    return min(1.0, raw) if clamp else raw


@dataclass(frozen=True)
class Admissibility:
    admissible: bool
    max_violation: float
    worst_point: float | None

    def __bool__(self) -> bool:
        return self.admissible


def check_admissibility(f0: EmpiricalCdf, fm: EmpiricalCdf, *, above: float | None = None) -> Admissibility:
    """Check ``F0(g) >= Fm(g)`` on the pooled grid.

    Args:
        f0: Clean-score CDF.
        fm: Mixture-score CDF.
        above: If given, only grid points strictly above this score are
            checked. Restricting to the tail above a fitted threshold is
            enough for the threshold to shrink when alpha is overestimated.
    """
    grid = np.union1d(f0.support, fm.support)
    if above is not None:
        grid = grid[grid > above]
    if grid.size == 0:
        return Admissibility(True, 0.0, None)
    # Compare the fractions exactly: cm/nm > c0/n0  <=>  cm*n0 > c0*nm.
    violated = fm.count_le(grid) * f0.n > f0.count_le(grid) * fm.n
    if not violated.any():
        return Admissibility(True, 0.0, None)
    gap = np.where(violated, fm(grid) - f0(grid), 0.0)
    i = int(np.argmax(gap))
    return Admissibility(False, float(gap[i]), float(grid[i]))
