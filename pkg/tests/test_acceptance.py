"""Acceptance gate: each criterion runs at its stated tolerance and reports one line.

Run alone with ``pytest tests/test_acceptance.py -v``; the pass/fail lines are
printed as each criterion finishes and again in the terminal summary. The
synthetic reproduction (criterion 2) takes a few minutes on one core.
"""

from __future__ import annotations

import math
from decimal import Decimal, getcontext

import numpy as np
import pytest

from opencat.cdf_mixture import classify, fit_threshold, isotonic_regression
from opencat.cli import main as cli_main
from opencat.detectors import score_iforest, train_iforest
from opencat.harness import ExperimentConfig, alpha_sweep, run_experiment
from opencat.pac_bounds import PacParams, achieved_epsilon, massart_bound, required_sample_size, sample_size_rhs
from opencat.synthdata import gen_alien, gen_mixture, gen_nominal

from test_cdf_mixture import brute_force_isotonic

SEED = 1


def _decimal_n(delta, epsilon, alpha) -> int:
    getcontext().prec = 60
    d, e, a = Decimal(delta), Decimal(epsilon), Decimal(alpha)
    rhs = (Decimal(2) / (1 - (1 - d).sqrt())).ln() / 2 / (e * e) * ((2 - a) / a) ** 2
    return int(rhs.to_integral_value(rounding="ROUND_FLOOR")) + 1


def _phi(x: float) -> float:
    return 0.5 * (1.0 + math.erf(x / math.sqrt(2.0)))


def test_criterion_1_closed_form(report):
    n = required_sample_size(PacParams(alpha=0.5, q=0.05, epsilon=0.05, delta=0.05))
    oracle = _decimal_n(0.05, 0.05, 0.5)
    eps_n = achieved_epsilon(n, 0.05, 0.5)
    eps_prev = achieved_epsilon(n - 1, 0.05, 0.5)
    back = sample_size_rhs(0.05, eps_n, 0.5)
    ok = n == 7865 == oracle and eps_n <= 0.05 < eps_prev and abs(back - n) <= 1
    report(1, ok, f"n={n} oracle={oracle} eps(n)={eps_n:.6f} eps(n-1)={eps_prev:.6f}")
    assert ok


@pytest.mark.slow
def test_criterion_2_synthetic_reproduction(report):
    common = dict(n=10_000, q=0.05, repetitions=25, n_trees=250, eval_size=20_000, oracle=False, seed=SEED)
    hi = run_experiment(ExperimentConfig(alpha=0.5, **common)).summaries["basic"]
    lo = run_experiment(ExperimentConfig(alpha=0.05, **common)).summaries["basic"]
    ok_hi = 0.94 <= hi.recall_mean <= 0.96 and 0.008 <= hi.fpr_mean <= 0.022
    ok_lo = 0.92 <= lo.recall_mean <= 0.965
    report(2, ok_hi and ok_lo,
           f"alpha=0.5: recall={hi.recall_mean:.4f} fpr={hi.fpr_mean:.4f}; "
           f"alpha=0.05: recall={lo.recall_mean:.4f} fpr={lo.fpr_mean:.4f}")
    assert ok_hi and ok_lo


def test_criterion_3_small_sample_undercoverage(report):
    cfg = ExperimentConfig(n=100, alpha=0.01, q=0.05, repetitions=25, n_trees=250, eval_size=20_000,
                           oracle=False, seed=SEED)
    s = run_experiment(cfg).summaries["basic"]
    ok = s.recall_mean < 0.85
    report(3, ok, f"mean recall={s.recall_mean:.4f} (must be < 0.85)")
    assert ok


def test_criterion_4_guarantee_monte_carlo(report):
    # Nominal scores N(0, 1), alien scores N(mu, 1): Fa(t) = Phi(t - mu) exactly.
    alpha, q, delta, eps, mu, trials = 0.5, 0.05, 0.2, 0.3, 2.0, 1000
    n = required_sample_size(PacParams(alpha=alpha, q=q, epsilon=eps, delta=delta))
    rng = np.random.default_rng(SEED)
    failures = 0
    for _ in range(trials):
        clean = rng.standard_normal(n)
        is_alien = rng.random(n) < alpha
        mixture = rng.standard_normal(n) + mu * is_alien
        thr = fit_threshold(clean, mixture, alpha, q)
        fa = 0.0 if thr.flag_all else _phi(thr.tau - mu)
        failures += fa > q + eps
    rate = failures / trials
    limit = delta + 3 * math.sqrt(delta * (1 - delta) / 200)
    ok = rate <= limit
    report(4, ok, f"n={n} trials={trials} failure rate={rate:.4f} limit={limit:.4f}")
    assert ok


def test_criterion_5_isotonic_oracle(report):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    for _ in range(500):
        y = rng.normal(size=int(rng.integers(1, 9)))
        worst = max(worst, float(np.max(np.abs(isotonic_regression(y) - brute_force_isotonic(y)))))
    ok = worst <= 1e-9
    report(5, ok, f"max abs deviation={worst:.3e} over 500 vectors")
    assert ok


def test_criterion_6_massart_coverage(report):
    reps, n = 1000, 1000
    u = np.sort(np.random.default_rng(SEED).random((reps, n)), axis=1)
    i = np.arange(1, n + 1)
    # Exact sup|F_n - F| for uniform data is attained at the order statistics.
    sup = np.maximum((i / n - u).max(axis=1), (u - (i - 1) / n).max(axis=1))
    stat = math.sqrt(n) * sup
    parts, ok = [], True
    for lam in (1.0, 1.5):
        freq = float(np.mean(stat > lam))
        bound = massart_bound(lam)
        ok &= freq <= bound
        parts.append(f"lambda={lam}: freq={freq:.4f} bound={bound:.4f}")
    report(6, ok, "; ".join(parts))
    assert ok


def test_criterion_7_misspecification_direction(report):
    xis = [0.0, 0.002, 0.004, 0.006, 0.008, 0.010]
    cfg = ExperimentConfig(n=2000, alpha=0.2, q=0.05, repetitions=20, n_trees=250, eval_size=20_000,
                           oracle=False, seed=SEED)
    rows = alpha_sweep(cfg, xis).rows
    # Admissibility above the fitted threshold is what forces the threshold down;
    # it holds whenever full admissibility does, so it is the wider check.
    decreases = sum(r.recall_decreases_when_admissible for r in rows)
    full_bad = sum(1 for r in rows for d, a in zip(r.delta_recall, r.admissible) if a and d < 0)
    mean_rec = [r.mean_delta_recall for r in rows[1:]]
    mean_fpr = [r.mean_delta_fpr for r in rows]
    increasing = all(b > a for a, b in zip(mean_fpr, mean_fpr[1:]))
    ok = decreases == 0 and full_bad == 0 and max(mean_rec) <= 0.06 and increasing
    report(7, ok,
           f"admissible trials={sum(rows[0].admissible)}/{cfg.repetitions} "
           f"tail-admissible={sum(rows[0].tail_admissible)}/{cfg.repetitions} recall drops={decreases + full_bad}; "
           f"mean d_recall={[round(x, 4) for x in mean_rec]} mean d_fpr={[round(x, 4) for x in mean_fpr[1:]]}")
    assert ok


def test_criterion_8_threshold_transfer(report):
    rng = np.random.default_rng(SEED)
    clean = gen_nominal(2000, seed=rng)
    mixture = gen_mixture(2000, 0.2, seed=rng)
    model = train_iforest(clean, 250, 0.2, seed=SEED)
    thr = fit_threshold(score_iforest(model, clean, oob=True), score_iforest(model, mixture.points), 0.2, 0.05)
    ga = gen_alien(5000, seed=rng)
    reference = classify(score_iforest(model, ga), thr)
    ok, recalls = True, []
    for alpha in (0.01, 0.05, 0.2, 0.5, 0.9):
        # A shuffled test set at this alpha that reuses the same alien pool.
        n_nom = int(round(len(ga) * (1 - alpha) / alpha))
        perm = rng.permutation(n_nom + len(ga))
        test = np.vstack([gen_nominal(n_nom, seed=rng), ga])[perm]
        where = np.argsort(perm)[n_nom:]  # row of ga[j] inside test
        flags = classify(score_iforest(model, test), thr)[where]
        ok &= bool(np.array_equal(flags, reference))
        recalls.append(float(flags.mean()))
    ok &= len(set(recalls)) == 1
    report(8, ok, f"test alphas 0.01..0.9: recall on Ga={sorted(set(recalls))} flag vectors identical={ok}")
    assert ok


def test_criterion_9_byte_identical_reruns(report, tmp_path, capsys):
    args = ["experiment", "--n", "500", "--alpha", "0.1,0.3", "--repetitions", "3", "--trees", "50",
            "--eval-size", "2000", "--variant", "both", "--seed", str(SEED)]
    codes = [cli_main(args + ["--out", str(tmp_path / run)]) for run in ("a", "b")]
    capsys.readouterr()
    same = {name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("trials.csv", "summary.csv")}
    ok = codes == [0, 0] and all(same.values())
    report(9, ok, f"exit codes={codes} identical={same}")
    assert ok
