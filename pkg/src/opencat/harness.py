"""Experiment orchestration: repeated synthetic trials, looseness of the
sample-size bound, cross-validated benchmark runs and alpha' sweeps.

Every trial depends only on its configuration and its own integer seed, so a
single trial can be re-run in isolation and concurrent execution reproduces
the sequential result exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import __version__
from .cdf_mixture import (
    DetectionThreshold,
    classify,
    empirical_cdf,
    estimate_alien_cdf,
    isotonize_and_clip,
    select_threshold,
)
from .detectors import score_iforest, score_loda, train_iforest, train_loda
from .pac_bounds import PacParams, check_admissibility, required_sample_size
from .synthdata import LabeledPointSet, SynthConfig, gen_alien, gen_mixture, gen_nominal, n_aliens_exact

logger = logging.getLogger(__name__)

__all__ = [
    "AggregateMetrics",
    "CvConfig",
    "ExperimentConfig",
    "ExperimentResult",
    "Looseness",
    "SweepResult",
    "TrialMetrics",
    "aggregate",
    "alpha_sweep",
    "empirical_eta",
    "fold_assignment",
    "looseness_analysis",
    "nearest_rank",
    "run_cv_benchmark",
    "run_cv_on_scores",
    "run_experiment",
    "run_synthetic_trial",
    "trial_seeds",
    "write_cv",
    "write_results",
    "write_sweep",
]

CI_RULE = "normal approximation: mean +/- 1.96 * sd / sqrt(R), sd with ddof=1"
QUANTILE_RULE = "nearest rank: value at 1-based rank ceil(p * R) of the sorted sample"

# scorer(clean_points, [other point sets], seed) -> (clean scores, [scores per set])
# The clean scores must be leave-out (out-of-bag) scores when the detector was
# trained on the clean points.
Scorer = Callable[[np.ndarray, Sequence[np.ndarray], int], tuple[np.ndarray, list[np.ndarray]]]

_DETECTORS = ("iforest", "loda", "external")
_VARIANTS = ("basic", "iso", "both")


@dataclass(frozen=True)
class ExperimentConfig:
    """One synthetic (n, alpha) setting repeated ``repetitions`` times."""

    n: int = 1000
    alpha: float = 0.1
    alpha_prime: float | None = None
    q: float = 0.05
    delta: float = 0.05
    repetitions: int = 100
    eval_size: int = 20000
    detector: str = "iforest"
    n_trees: int = 1000
    subsample_fraction: float = 0.2
    n_projections: int = 1000
    variant: str = "basic"
    mixture_mode: str = "exact_count"
    oracle: bool = True
    seed: int | None = None
    dim: int = 9
    shift: float = 3.0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError(f"n must be >= 1, got {self.n}")
        if not (0.0 <= self.alpha <= 1.0):
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.alpha_prime is not None and not (self.alpha <= self.alpha_prime <= 1.0):
            raise ValueError(f"alpha_prime must be in [alpha, 1], got {self.alpha_prime}")
        if not (0.0 < self.q < 1.0):
            raise ValueError(f"q must be in (0, 1), got {self.q}")
        if not (0.0 < self.delta < 1.0):
            raise ValueError(f"delta must be in (0, 1), got {self.delta}")
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.eval_size < 1:
            raise ValueError(f"eval_size must be >= 1, got {self.eval_size}")
        if self.detector not in _DETECTORS:
            raise ValueError(f"detector must be one of {_DETECTORS}, got {self.detector!r}")
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")
        if self.mixture_mode not in ("exact_count", "iid"):
            raise ValueError(f"mixture_mode must be exact_count or iid, got {self.mixture_mode!r}")

    @property
    def fit_alpha(self) -> float:
        return self.alpha if self.alpha_prime is None else self.alpha_prime

    @property
    def variants(self) -> tuple[str, ...]:
        return ("basic", "iso") if self.variant == "both" else (self.variant,)

    @property
    def synth(self) -> SynthConfig:
        return SynthConfig(dim=self.dim, shift=self.shift)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class TrialMetrics:
    """Outcome of one fitted threshold.

    ``recall`` is NaN when the evaluated set held no aliens (possible for
    cross-validation folds); such trials are excluded from recall statistics.
    """

    trial: int
    trial_seed: int
    variant: str
    alpha_fit: float
    tau: float
    recall: float
    fpr: float
    oracle_tau: float | None = None
    oracle_fpr: float | None = None
    fold: int | None = None

    @property
    def flag_all(self) -> bool:
        return self.tau == -math.inf


@dataclass(frozen=True)
class Looseness:
    eta: float
    epsilon: float | None
    n_star: int | None
    status: str  # "ok" | "guarantee met; epsilon undefined" | "invalid: epsilon >= 1 - q"


@dataclass(frozen=True)
class AggregateMetrics:
    variant: str
    n_trials: int
    recall_mean: float
    recall_ci95: float | None
    fpr_mean: float
    fpr_ci95: float | None
    fpr_q25: float
    fpr_median: float
    fpr_q75: float
    oracle_fpr_mean: float | None
    oracle_fpr_median: float | None
    empirical_eta: float
    epsilon: float | None
    n_star: int | None
    looseness_status: str
    n_recall_undefined: int = 0


@dataclass(frozen=True)
class ExperimentResult:
    config: ExperimentConfig
    trials: list[TrialMetrics]
    summaries: dict[str, AggregateMetrics]


# ---------------------------------------------------------------- statistics


def nearest_rank(values: Sequence[float], p: float) -> float:
    """Nearest-rank ``p``-quantile of ``values``."""
    xs = sorted(values)
    if not xs:
        raise ValueError("nearest_rank of an empty sample")
    k = max(1, math.ceil(p * len(xs) - 1e-12))
    return float(xs[min(k, len(xs)) - 1])


def _mean_ci(values: Sequence[float]) -> tuple[float, float | None]:
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, None
    return mean, float(1.96 * arr.std(ddof=1) / math.sqrt(arr.size))


def empirical_eta(recalls: Sequence[float], delta: float) -> float:
    """Smallest eta such that at least (1 - delta) R of the R runs reach recall >= 1 - eta.

    ``1 - eta`` is the k-th smallest recall with ``k = floor(delta * R) + 1``.
    """
    xs = sorted(float(r) for r in recalls)
    if not xs:
        raise ValueError("empirical_eta needs at least one recall")
    k = min(len(xs), math.floor(delta * len(xs) + 1e-9) + 1)
    return 1.0 - xs[k - 1]


def looseness_analysis(recalls: Sequence[float], *, q: float, delta: float, alpha: float) -> Looseness:
    """Turn observed recalls into the sample size the bound would have demanded.

    The empirical eta gives ``epsilon = eta - q``; ``n_star`` is then the
    bound's required sample size for that epsilon at the given delta and
    alpha.
    """
    eta = empirical_eta(recalls, delta)
    eps = eta - q
    if eps <= 0:
        return Looseness(eta, None, None, "guarantee met; epsilon undefined")
    if eps >= 1.0 - q:
        return Looseness(eta, None, None, "invalid: epsilon >= 1 - q")
    if not (0.0 < alpha <= 1.0):
        return Looseness(eta, eps, None, "invalid: alpha outside (0, 1]")
    n_star = required_sample_size(PacParams(alpha=alpha, q=q, epsilon=eps, delta=delta))
    return Looseness(eta, eps, n_star, "ok")


def aggregate(trials: Sequence[TrialMetrics], *, q: float, delta: float, alpha: float) -> AggregateMetrics:
    """Mean/CI/quartile summary of trials that share one variant."""
    if not trials:
        raise ValueError("aggregate() needs at least one trial")
    variants = {t.variant for t in trials}
    if len(variants) != 1:
        raise ValueError(f"aggregate() expects a single variant, got {sorted(variants)}")
    recalls = [t.recall for t in trials if not math.isnan(t.recall)]
    fprs = [t.fpr for t in trials if not math.isnan(t.fpr)]
    undefined = len(trials) - len(recalls)
    if not recalls or not fprs:
        raise ValueError("no trial with a defined recall and false positive rate")
    recall_mean, recall_ci = _mean_ci(recalls)
    fpr_mean, fpr_ci = _mean_ci(fprs)
    oracle = [t.oracle_fpr for t in trials if t.oracle_fpr is not None]
    loose = looseness_analysis(recalls, q=q, delta=delta, alpha=alpha)
    return AggregateMetrics(
        variant=trials[0].variant,
        n_trials=len(trials),
        recall_mean=recall_mean,
        recall_ci95=recall_ci,
        fpr_mean=fpr_mean,
        fpr_ci95=fpr_ci,
        fpr_q25=nearest_rank(fprs, 0.25),
        fpr_median=nearest_rank(fprs, 0.5),
        fpr_q75=nearest_rank(fprs, 0.75),
        oracle_fpr_mean=float(np.mean(oracle)) if oracle else None,
        oracle_fpr_median=nearest_rank(oracle, 0.5) if oracle else None,
        empirical_eta=loose.eta,
        epsilon=loose.epsilon,
        n_star=loose.n_star,
        looseness_status=loose.status,
        n_recall_undefined=undefined,
    )


# ---------------------------------------------------------------- trials


def trial_seeds(seed: int, repetitions: int) -> list[int]:
    """Per-trial integer seeds derived from the root seed."""
    return [
        int(np.random.SeedSequence(int(seed), spawn_key=(i,)).generate_state(1, np.uint64)[0])
        for i in range(repetitions)
    ]


def detector_scorer(cfg) -> Scorer:
    """Scorer that trains the configured detector on the clean points."""

    def scorer(clean: np.ndarray, others: Sequence[np.ndarray], seed: int):
        sizes = [len(o) for o in others]
        stacked = np.concatenate(others) if others else np.empty((0, clean.shape[1]))
        if cfg.detector == "iforest":
            model = train_iforest(clean, cfg.n_trees, cfg.subsample_fraction, seed)
            s0 = score_iforest(model, clean, oob=True)
            rest = score_iforest(model, stacked) if len(stacked) else np.empty(0)
        elif cfg.detector == "loda":
            model = train_loda(clean, cfg.n_projections, seed)
            s0 = score_loda(model, clean, leave_out=True)
            rest = score_loda(model, stacked) if len(stacked) else np.empty(0)
        else:
            raise ValueError("the external detector has no feature-space scorer; use score files")
        return s0, np.split(rest, np.cumsum(sizes)[:-1])

    return scorer


@dataclass(frozen=True)
class _TrialScores:
    clean: np.ndarray
    mixture: np.ndarray
    nominal_eval: np.ndarray
    alien_eval: np.ndarray
    oracle_pool: np.ndarray | None


def _trial_scores(cfg: ExperimentConfig, trial_seed: int, scorer: Scorer | None) -> _TrialScores:
    ss = np.random.SeedSequence(int(trial_seed))
    s_clean, s_mix, s_g0, s_ga, s_det, s_orc = ss.spawn(6)
    synth = cfg.synth
    clean = gen_nominal(cfg.n, synth, np.random.default_rng(s_clean))
    mixture = gen_mixture(cfg.n, cfg.alpha, cfg.mixture_mode, synth, np.random.default_rng(s_mix))
    g0 = gen_nominal(cfg.eval_size, synth, np.random.default_rng(s_g0))
    ga = gen_alien(cfg.eval_size, synth, np.random.default_rng(s_ga))
    others = [mixture.points, g0, ga]
    if cfg.oracle:
        others.append(gen_alien(cfg.eval_size, synth, np.random.default_rng(s_orc)))
    det_seed = int(s_det.generate_state(1)[0])
    s0, rest = (scorer or detector_scorer(cfg))(clean, others, det_seed)
    return _TrialScores(
        clean=np.asarray(s0, dtype=np.float64),
        mixture=np.asarray(rest[0], dtype=np.float64),
        nominal_eval=np.asarray(rest[1], dtype=np.float64),
        alien_eval=np.asarray(rest[2], dtype=np.float64),
        oracle_pool=np.asarray(rest[3], dtype=np.float64) if cfg.oracle else None,
    )


def _fit_thresholds(clean, mixture, alpha_fit: float, q: float, variants: Iterable[str]) -> dict[str, DetectionThreshold]:
    variants = tuple(variants)
    if alpha_fit == 0.0:
        # No aliens to model: the only threshold with any recall guarantee is
        # the one that flags everything.
        return {v: DetectionThreshold(-math.inf, q, v, 0.0) for v in variants}
    est = estimate_alien_cdf(empirical_cdf(clean), empirical_cdf(mixture), alpha_fit)
    if "iso" in variants:
        est = isotonize_and_clip(est)
    return {v: select_threshold(est, q, v) for v in variants}


def oracle_threshold(alien_scores, q: float) -> float:
    """Nearest-rank q-quantile of a large pure-alien score sample."""
    return nearest_rank(np.asarray(alien_scores).tolist(), q)


def _metrics(ts: _TrialScores, thr: DetectionThreshold, q: float, trial: int, seed: int) -> TrialMetrics:
    recall = float(np.mean(classify(ts.alien_eval, thr)))
    fpr = float(np.mean(classify(ts.nominal_eval, thr)))
    oracle_tau = oracle_fpr = None
    if ts.oracle_pool is not None:
        oracle_tau = oracle_threshold(ts.oracle_pool, q)
        oracle_fpr = float(np.mean(ts.nominal_eval > oracle_tau))
    return TrialMetrics(
        trial=trial,
        trial_seed=int(seed),
        variant=thr.variant,
        alpha_fit=thr.alpha,
        tau=float(thr.tau),
        recall=recall,
        fpr=fpr,
        oracle_tau=oracle_tau,
        oracle_fpr=oracle_fpr,
    )


def run_synthetic_trial(
    cfg: ExperimentConfig,
    trial_seed: int,
    *,
    scorer: Scorer | None = None,
    trial: int = 0,
) -> tuple[TrialMetrics, ...]:
    """One synthetic trial; returns one TrialMetrics per configured variant.

    Fresh clean, mixture and evaluation sets are drawn from ``trial_seed``;
    the detector sees only the clean set for training. Mixture labels never
    reach the threshold fit.
    """
    ts = _trial_scores(cfg, trial_seed, scorer)
    thresholds = _fit_thresholds(ts.clean, ts.mixture, cfg.fit_alpha, cfg.q, cfg.variants)
    return tuple(_metrics(ts, thresholds[v], cfg.q, trial, trial_seed) for v in cfg.variants)


def _map(fn, items, workers: int):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _require_seed(seed) -> int:
    if seed is None:
        raise ValueError("a seed is required (no implicit randomness)")
    return int(seed)


def run_experiment(cfg: ExperimentConfig, *, scorer: Scorer | None = None, workers: int = 1) -> ExperimentResult:
    seed = _require_seed(cfg.seed)
    seeds = trial_seeds(seed, cfg.repetitions)
    per_trial = _map(
        lambda item: run_synthetic_trial(cfg, item[1], scorer=scorer, trial=item[0]),
        list(enumerate(seeds)),
        workers,
    )
    trials = [m for group in per_trial for m in group]
    summaries = {
        v: aggregate([t for t in trials if t.variant == v], q=cfg.q, delta=cfg.delta, alpha=cfg.fit_alpha)
        for v in cfg.variants
    }
    return ExperimentResult(cfg, trials, summaries)


# ---------------------------------------------------------------- alpha' sweep


@dataclass(frozen=True)
class SweepRow:
    xi: float
    alpha_prime: float
    variant: str
    delta_recall: list[float]
    delta_fpr: list[float]
    admissible: list[bool]
    tail_admissible: list[bool]

    @property
    def mean_delta_recall(self) -> float:
        return float(np.mean(self.delta_recall))

    @property
    def mean_delta_fpr(self) -> float:
        return float(np.mean(self.delta_fpr))

    @property
    def recall_decreases_when_admissible(self) -> int:
        return sum(1 for d, a in zip(self.delta_recall, self.tail_admissible) if a and d < 0)


@dataclass(frozen=True)
class SweepResult:
    config: ExperimentConfig
    rows: list[SweepRow]
    trial_seeds: list[int]


def alpha_sweep(
    cfg: ExperimentConfig,
    xis: Sequence[float],
    *,
    scorer: Scorer | None = None,
    workers: int = 1,
) -> SweepResult:
    """Refit each trial with ``alpha' = alpha + xi`` and report paired changes.

    Each trial's scores are computed once and shared by every xi, so the
    deltas against the ``xi = 0`` fit are exactly paired. Per trial the sweep
    also records whether the empirical CDFs are admissible (clean CDF at or
    above the mixture CDF everywhere) and whether they are admissible above
    the baseline threshold, which is what makes the threshold shrink.
    """
    seed = _require_seed(cfg.seed)
    if cfg.alpha <= 0:
        raise ValueError("alpha_sweep needs alpha > 0")
    for xi in xis:
        if xi < 0 or cfg.alpha + xi > 1.0:
            raise ValueError(f"xi={xi} gives alpha' outside [alpha, 1]")
    seeds = trial_seeds(seed, cfg.repetitions)

    def one(s):
        ts = _trial_scores(cfg, s, scorer)
        f0, fm = empirical_cdf(ts.clean), empirical_cdf(ts.mixture)
        base = _fit_thresholds(ts.clean, ts.mixture, cfg.alpha, cfg.q, cfg.variants)
        full = check_admissibility(f0, fm).admissible
        out = {}
        for v in cfg.variants:
            b = _metrics(ts, base[v], cfg.q, 0, s)
            tail = check_admissibility(f0, fm, above=base[v].tau).admissible
            rows = []
            for xi in xis:
                thr = _fit_thresholds(ts.clean, ts.mixture, cfg.alpha + xi, cfg.q, (v,))[v]
                m = _metrics(ts, thr, cfg.q, 0, s)
                rows.append((m.recall - b.recall, m.fpr - b.fpr))
            out[v] = (rows, full, tail)
        return out

    per_trial = _map(one, seeds, workers)
    rows = []
    for v in cfg.variants:
        for j, xi in enumerate(xis):
            rows.append(
                SweepRow(
                    xi=float(xi),
                    alpha_prime=cfg.alpha + float(xi),
                    variant=v,
                    delta_recall=[t[v][0][j][0] for t in per_trial],
                    delta_fpr=[t[v][0][j][1] for t in per_trial],
                    admissible=[t[v][1] for t in per_trial],
                    tail_admissible=[t[v][2] for t in per_trial],
                )
            )
    return SweepResult(cfg, rows, seeds)


# ---------------------------------------------------------------- cross-validation


@dataclass(frozen=True)
class CvConfig:
    alpha: float
    alpha_prime: float | None = None
    q: float = 0.05
    delta: float = 0.05
    folds: int = 10
    n: int | None = None
    repetitions: int = 1
    detector: str = "iforest"
    n_trees: int = 1000
    subsample_fraction: float = 0.2
    n_projections: int = 1000
    variant: str = "basic"
    seed: int | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.alpha <= 1.0):
            raise ValueError(f"alpha must be in (0, 1], got {self.alpha}")
        if self.alpha_prime is not None and not (self.alpha <= self.alpha_prime <= 1.0):
            raise ValueError(f"alpha_prime must be in [alpha, 1], got {self.alpha_prime}")
        if not (0.0 < self.q < 1.0):
            raise ValueError(f"q must be in (0, 1), got {self.q}")
        if self.folds < 2:
            raise ValueError(f"folds must be >= 2, got {self.folds}")
        if self.repetitions < 1:
            raise ValueError(f"repetitions must be >= 1, got {self.repetitions}")
        if self.detector not in _DETECTORS:
            raise ValueError(f"detector must be one of {_DETECTORS}, got {self.detector!r}")
        if self.variant not in _VARIANTS:
            raise ValueError(f"variant must be one of {_VARIANTS}, got {self.variant!r}")

    @property
    def fit_alpha(self) -> float:
        return self.alpha if self.alpha_prime is None else self.alpha_prime

    @property
    def variants(self) -> tuple[str, ...]:
        return ("basic", "iso") if self.variant == "both" else (self.variant,)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class CvResult:
    config: CvConfig
    trials: list[TrialMetrics]
    summaries: dict[str, AggregateMetrics]
    n: int
    oracle_available: bool


def fold_assignment(m: int, folds: int, rng: np.random.Generator) -> np.ndarray:
    """Random balanced fold index for each of ``m`` mixture points."""
    if not (2 <= folds < m):
        raise ValueError(f"folds must satisfy 2 <= folds < {m} (mixture size), got {folds}")
    out = np.empty(m, dtype=np.int64)
    out[rng.permutation(m)] = np.arange(m) % folds
    return out


def _cv_folds(cfg: CvConfig, clean, mixture, labels, rng, rep: int, rep_seed: int, oracle_pool=None) -> list[TrialMetrics]:
    folds = fold_assignment(len(mixture), cfg.folds, rng)
    oracle_tau = oracle_threshold(oracle_pool, cfg.q) if oracle_pool is not None and len(oracle_pool) else None
    out = []
    for f in range(cfg.folds):
        held = folds == f
        thresholds = _fit_thresholds(clean, mixture[~held], cfg.fit_alpha, cfg.q, cfg.variants)
        hs, hl = mixture[held], labels[held]
        for v in cfg.variants:
            flags = classify(hs, thresholds[v])
            recall = float(flags[hl].mean()) if hl.any() else math.nan
            fpr = float(flags[~hl].mean()) if (~hl).any() else math.nan
            oracle_fpr = None
            if oracle_tau is not None and (~hl).any():
                oracle_fpr = float(np.mean(hs[~hl] > oracle_tau))
            out.append(
                TrialMetrics(
                    trial=rep,
                    trial_seed=rep_seed,
                    variant=v,
                    alpha_fit=cfg.fit_alpha,
                    tau=float(thresholds[v].tau),
                    recall=recall,
                    fpr=fpr,
                    oracle_tau=oracle_tau,
                    oracle_fpr=oracle_fpr,
                    fold=f,
                )
            )
    return out


def _summarize_cv(cfg: CvConfig, trials, n: int) -> dict[str, AggregateMetrics]:
    out = {}
    for v in cfg.variants:
        sub = [t for t in trials if t.variant == v]
        out[v] = aggregate(sub, q=cfg.q, delta=cfg.delta, alpha=cfg.fit_alpha)
        if out[v].n_recall_undefined:
            logger.warning("%d folds had no aliens; excluded from recall", out[v].n_recall_undefined)
    return out


def run_cv_on_scores(clean_scores, mixture_scores, mixture_labels, cfg: CvConfig, *, oracle_pool=None) -> CvResult:
    """Cross-validated threshold fitting on precomputed scores.

    The mixture scores are split into ``cfg.folds`` random groups; each fold's
    threshold is fitted on the clean scores plus the other groups and then
    applied to the held-out group. Labels are used only to score the result.
    """
    seed = _require_seed(cfg.seed)
    clean = np.asarray(clean_scores, dtype=np.float64)
    mixture = np.asarray(mixture_scores, dtype=np.float64)
    labels = np.asarray(mixture_labels, dtype=bool)
    if len(mixture) != len(labels):
        raise ValueError("mixture scores and labels differ in length")
    trials = []
    for rep, rep_seed in enumerate(trial_seeds(seed, cfg.repetitions)):
        rng = np.random.default_rng(rep_seed)
        trials += _cv_folds(cfg, clean, mixture, labels, rng, rep, rep_seed, oracle_pool)
    return CvResult(cfg, trials, _summarize_cv(cfg, trials, len(clean)), len(clean), oracle_pool is not None)


def max_feasible_n(n_nominal: int, n_alien: int, alpha: float) -> int:
    """Largest n such that disjoint clean (n) and mixture (n) sets can be drawn."""
    # The alien count is rounded, so n_alien / alpha is not a hard cap; start
    # safely above both limits and walk down.
    n = int(min(n_nominal, (n_nominal + 1) / (2.0 - alpha) + 1, (n_alien + 1) / alpha if alpha > 0 else math.inf))
    while n > 0:
        a = n_aliens_exact(n, alpha)
        if a <= n_alien and n + (n - a) <= n_nominal:
            return n
        n -= 1
    raise ValueError("dataset too small for any clean/mixture split")


def run_cv_benchmark(dataset: LabeledPointSet, cfg: CvConfig, *, scorer: Scorer | None = None) -> CvResult:
    """Benchmark protocol on a labelled feature dataset.

    Each repetition draws a clean set of ``n`` nominal rows and a disjoint
    mixture of ``n`` rows with ``round(alpha * n)`` aliens, trains the
    detector on the clean rows (leave-out scores for them), scores the
    mixture and runs the fold loop. Aliens not used in the mixture form the
    oracle pool when there are any.
    """
    seed = _require_seed(cfg.seed)
    X = np.asarray(dataset.points, dtype=np.float64)
    y = np.asarray(dataset.labels, dtype=bool)
    nom_idx, ali_idx = np.flatnonzero(~y), np.flatnonzero(y)
    n = cfg.n if cfg.n is not None else max_feasible_n(nom_idx.size, ali_idx.size, cfg.alpha)
    a = n_aliens_exact(n, cfg.alpha)
    if n + (n - a) > nom_idx.size or a > ali_idx.size:
        raise ValueError(
            f"n={n} needs {2 * n - a} nominal and {a} alien rows; dataset has {nom_idx.size} and {ali_idx.size}"
        )
    scorer = scorer or detector_scorer(cfg)
    trials = []
    oracle_available = False
    for rep, rep_seed in enumerate(trial_seeds(seed, cfg.repetitions)):
        s_split, s_det, s_fold = np.random.SeedSequence(rep_seed).spawn(3)
        rng = np.random.default_rng(s_split)
        nom = rng.permutation(nom_idx)
        ali = rng.permutation(ali_idx)
        clean_rows = nom[:n]
        mix_rows = rng.permutation(np.concatenate([nom[n : 2 * n - a], ali[:a]]))
        pool_rows = ali[a:]
        others = [X[mix_rows]] + ([X[pool_rows]] if pool_rows.size else [])
        s0, rest = scorer(X[clean_rows], others, int(s_det.generate_state(1)[0]))
        pool = rest[1] if pool_rows.size else None
        oracle_available = oracle_available or pool is not None
        trials += _cv_folds(cfg, np.asarray(s0), np.asarray(rest[0]), y[mix_rows],
                            np.random.default_rng(s_fold), rep, rep_seed, pool)
    return CvResult(cfg, trials, _summarize_cv(cfg, trials, n), n, oracle_available)


# ---------------------------------------------------------------- output


def _fmt(v) -> str:
    if v is None:
        return "NA"
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        if math.isnan(v):
            return "NA"
        return repr(v)
    return str(v)


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


TRIAL_HEADER = (
    "alpha", "n", "alpha_fit", "variant", "trial", "fold", "trial_seed",
    "tau", "flag_all", "recall", "fpr", "oracle_tau", "oracle_fpr",
)
SUMMARY_HEADER = (
    "alpha", "n", "alpha_fit", "variant", "mixture_mode", "n_trials",
    "recall_mean", "recall_ci95", "fpr_mean", "fpr_ci95",
    "fpr_q25", "fpr_median", "fpr_q75", "oracle_fpr_mean", "oracle_fpr_median",
    "empirical_eta", "epsilon", "n_star", "looseness_status", "n_recall_undefined",
)


def _trial_row(alpha, n, t: TrialMetrics):
    return (alpha, n, t.alpha_fit, t.variant, t.trial, t.fold, t.trial_seed,
            t.tau, t.flag_all, t.recall, t.fpr, t.oracle_tau, t.oracle_fpr)


def _summary_row(alpha, n, alpha_fit, mode, s: AggregateMetrics):
    return (alpha, n, alpha_fit, s.variant, mode, s.n_trials,
            s.recall_mean, s.recall_ci95, s.fpr_mean, s.fpr_ci95,
            s.fpr_q25, s.fpr_median, s.fpr_q75, s.oracle_fpr_mean, s.oracle_fpr_median,
            s.empirical_eta, s.epsilon, s.n_star, s.looseness_status, s.n_recall_undefined)


def _rules() -> dict:
    return {"ci_rule": CI_RULE, "quantile_rule": QUANTILE_RULE, "opencat_version": __version__}


def write_results(results: Sequence[ExperimentResult], out_dir) -> None:
    """Write trials.csv, summary.csv, figure data and the resolved config.

    CSV content is a pure function of the configs and seeds; anything
    time-dependent is confined to ``metadata.json``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "trials.csv", TRIAL_HEADER,
               (_trial_row(r.config.alpha, r.config.n, t) for r in results for t in r.trials))
    summaries = [(r.config, s) for r in results for s in r.summaries.values()]
    _write_csv(out / "summary.csv", SUMMARY_HEADER,
               (_summary_row(c.alpha, c.n, c.fit_alpha, c.mixture_mode, s) for c, s in summaries))
    _write_csv(out / "plot_fig1_recall.csv", ("alpha", "n", "variant", "recall_mean", "recall_ci95"),
               ((c.alpha, c.n, s.variant, s.recall_mean, s.recall_ci95) for c, s in summaries))
    _write_csv(out / "plot_fig2_fpr.csv",
               ("alpha", "n", "variant", "fpr_q25", "fpr_median", "fpr_q75", "oracle_fpr_median"),
               ((c.alpha, c.n, s.variant, s.fpr_q25, s.fpr_median, s.fpr_q75, s.oracle_fpr_median)
                for c, s in summaries))
    _write_csv(out / "plot_fig3_looseness.csv",
               ("alpha", "n", "variant", "empirical_eta", "epsilon", "n_star", "log10_n", "log10_n_star",
                "looseness_status"),
               ((c.alpha, c.n, s.variant, s.empirical_eta, s.epsilon, s.n_star, math.log10(c.n),
                 math.log10(s.n_star) if s.n_star else None, s.looseness_status) for c, s in summaries))
    _write_json(out / "config.json", {"experiments": [r.config.to_dict() for r in results], **_rules()})


def write_sweep(result: SweepResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = result.config
    _write_csv(
        out / "sweep.csv",
        ("alpha", "n", "xi", "alpha_prime", "variant", "n_trials", "mean_delta_recall", "mean_delta_fpr",
         "n_admissible", "n_tail_admissible", "n_recall_decreases_when_admissible"),
        ((cfg.alpha, cfg.n, r.xi, r.alpha_prime, r.variant, len(r.delta_recall), r.mean_delta_recall,
          r.mean_delta_fpr, sum(r.admissible), sum(r.tail_admissible), r.recall_decreases_when_admissible)
         for r in result.rows),
    )
    _write_csv(
        out / "sweep_trials.csv",
        ("xi", "variant", "trial", "trial_seed", "delta_recall", "delta_fpr", "admissible", "tail_admissible"),
        ((r.xi, r.variant, i, result.trial_seeds[i], r.delta_recall[i], r.delta_fpr[i],
          r.admissible[i], r.tail_admissible[i]) for r in result.rows for i in range(len(r.delta_recall))),
    )
    _write_csv(out / "plot_fig7_sweep.csv", ("xi", "variant", "delta_recall", "delta_fpr"),
               ((r.xi, r.variant, r.mean_delta_recall, r.mean_delta_fpr) for r in result.rows))
    _write_json(out / "config.json", {"sweep": cfg.to_dict(), "xis": [r.xi for r in result.rows], **_rules()})


def write_cv(results: Sequence[CvResult], out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "trials.csv", TRIAL_HEADER,
               (_trial_row(r.config.alpha, r.n, t) for r in results for t in r.trials))
    summaries = [(r, s) for r in results for s in r.summaries.values()]
    _write_csv(out / "summary.csv", SUMMARY_HEADER + ("oracle_available",),
               (_summary_row(r.config.alpha, r.n, r.config.fit_alpha, "cv", s) + (r.oracle_available,)
                for r, s in summaries))
    _write_csv(out / "plot_fig4_fpr.csv", ("alpha", "variant", "fpr_mean", "fpr_ci95"),
               ((r.config.alpha, s.variant, s.fpr_mean, s.fpr_ci95) for r, s in summaries))
    _write_csv(out / "plot_fig5_recall.csv", ("alpha", "variant", "recall_mean", "recall_ci95"),
               ((r.config.alpha, s.variant, s.recall_mean, s.recall_ci95) for r, s in summaries))
    _write_json(out / "config.json", {"cv": [r.config.to_dict() for r in results], **_rules()})
