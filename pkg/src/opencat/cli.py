"""Command-line interface.

Exit codes: 0 success, 2 bad flags or config, 3 input/output failure,
4 domain error (e.g. epsilon outside (0, 1 - q)).
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

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
from .harness import CvConfig, ExperimentConfig
from .scores_io import ScoreFileError, load_scores, read_feature_csv, write_feature_csv

logger = logging.getLogger("opencat")

EXIT_USAGE, EXIT_IO, EXIT_DOMAIN = 2, 3, 4
DEFAULT_XIS = (0.002, 0.004, 0.006, 0.008, 0.010)


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- helpers


def _floats(text: str) -> list[float]:
    return [float(t) for t in str(text).split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    return [int(float(t)) for t in str(text).split(",") if t.strip()]


def _atomic_write(path: Path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _sha256_files(*paths) -> str:
    h = hashlib.sha256()
    for p in paths:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def _write_metadata(out_dir: Path, argv) -> None:
    doc = {
        "argv": list(argv),
        "opencat_version": __version__,
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    _atomic_write(out_dir / "metadata.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _echo(path: Path, doc: dict) -> None:
    _atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _load_points_or_scores(path, model):
    """Score file unless a model is given, in which case a feature CSV."""
    if model is None:
        return load_scores(path), None
    from .detectors import score as det_score
    from .detectors._common import fingerprint

    X, _ = read_feature_csv(path)
    leave_out = X.shape[0] == model.n_train and fingerprint(X) == model.train_fingerprint
    return det_score(model, X, leave_out=leave_out), leave_out


# ---------------------------------------------------------------- config files

_CONVERT = {
    "n": _ints, "alpha": _floats, "alpha_prime": float, "q": float, "delta": float,
    "repetitions": int, "eval_size": int, "detector": str, "n_trees": int,
    "subsample_fraction": float, "n_projections": int, "variant": str,
    "mixture_mode": str, "oracle": lambda s: str(s).strip().lower() in ("1", "true", "yes", "on"),
    "seed": int, "dim": int, "shift": float, "xis": _floats, "folds": int,
    "nominal_classes": lambda s: [t.strip() for t in str(s).split(",") if t.strip()],
    "label_column": str, "workers": int,
}


def _read_config(path, section: str, allowed: set[str]) -> dict:
    cp = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cp.read_file(fh)
    except configparser.Error as exc:
        raise UsageError(f"{path}: {exc}") from None
    if not cp.has_section(section):
        raise UsageError(f"{path}: missing [{section}] section")
    out = {}
    for key, raw in cp.items(section):
        if key not in allowed:
            raise UsageError(f"{path}: unknown key {key!r} in [{section}]")
        try:
            out[key] = _CONVERT[key](raw)
        except ValueError:
            raise UsageError(f"{path}: bad value for {key!r}: {raw!r}") from None
    return out


def _merge(args, section: str, allowed: set[str]) -> dict:
    """Config-file values overridden by explicitly given flags."""
    conf = _read_config(args.config, section, allowed) if args.config else {}
    for key in allowed:
        v = getattr(args, key, None)
        if v is not None:
            conf[key] = v
    return conf


# ---------------------------------------------------------------- subcommands


def cmd_bounds(args) -> int:
    from .pac_bounds import PacParams, achieved_epsilon, massart_bound, required_sample_size

    rows = []
    if args.epsilon is not None:
        p = PacParams(alpha=args.alpha, q=args.q, epsilon=args.epsilon, delta=args.delta,
                      alpha_prime=args.alpha_prime)
        rows.append(("n", required_sample_size(p)))
        if args.alpha_prime is not None:
            rows.append(("n_alpha_prime", required_sample_size(p, use_alpha_prime=True)))
        rows.append(("eta", p.eta))
    if args.n is not None:
        rows.append(("epsilon", achieved_epsilon(args.n, args.delta, args.alpha)))
        if args.alpha_prime is not None:
            rows.append(("epsilon_alpha_prime", achieved_epsilon(args.n, args.delta, args.alpha_prime)))
    if args.lam is not None:
        rows.append(("massart_bound", massart_bound(args.lam)))
        rows.append(("massart_bound_raw", massart_bound(args.lam, clamp=False)))
    if not rows:
        raise UsageError("bounds: give at least one of --epsilon, --n, --lam")
    if args.format == "csv":
        print("quantity,value")
        for k, v in rows:
            print(f"{k},{v!r}")
    else:
        for k, v in rows:
            print(f"{k} = {v}")
    return 0


def cmd_synth(args) -> int:
    from .synthdata import SynthConfig, gen_alien, gen_mixture, gen_nominal

    if args.seed is None:
        raise UsageError("synth: --seed is required")
    cfg = SynthConfig(dim=args.dim, shift=args.shift)
    rng = np.random.default_rng(args.seed)
    labels = None
    if args.kind == "nominal":
        X = gen_nominal(args.n, cfg, rng)
        labels = np.zeros(args.n, dtype=bool)
    elif args.kind == "alien":
        X = gen_alien(args.n, cfg, rng)
        labels = np.ones(args.n, dtype=bool)
    else:
        if args.alpha is None:
            raise UsageError("synth --kind mixture needs --alpha")
        m = gen_mixture(args.n, args.alpha, args.mode, cfg, rng)
        X, labels = m.points, m.labels
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_feature_csv(out, X, labels if args.labels else None)
    _echo(out.with_name(out.name + ".config.json"),
          {"kind": args.kind, "n": args.n, "alpha": args.alpha, "mixture_mode": args.mode,
           "seed": args.seed, "dim": args.dim, "shift": args.shift, "labels": args.labels})
    print(f"wrote {args.n} rows to {out}")
    return 0


def cmd_train(args) -> int:
    from .detectors import save_model, train_iforest, train_loda

    if args.seed is None:
        raise UsageError("train: --seed is required")
    X, _ = read_feature_csv(args.input, label_column=args.label_column)
    if args.detector == "iforest":
        model = train_iforest(X, args.trees, args.subsample, args.seed)
        cfg = {"detector": "iforest", "n_trees": args.trees, "subsample_fraction": args.subsample}
    else:
        model = train_loda(X, args.projections, args.seed)
        cfg = {"detector": "loda", "n_projections": args.projections}
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_model(model, out)
    _echo(out.with_name(out.name + ".config.json"),
          {**cfg, "seed": args.seed, "input": str(args.input), "n_train": int(X.shape[0]), "dim": int(X.shape[1])})
    print(f"trained {args.detector} on {X.shape[0]} rows (d={X.shape[1]}) -> {out}")
    return 0


def cmd_threshold(args) -> int:
    from .pac_bounds import check_admissibility

    model = _load_model(args.model)
    clean, clean_oob = _load_points_or_scores(args.clean, model)
    mixture, _ = _load_points_or_scores(args.mixture, model)
    f0, fm = empirical_cdf(clean), empirical_cdf(mixture)
    est = estimate_alien_cdf(f0, fm, args.alpha)
    if args.variant == "iso":
        est = isotonize_and_clip(est)
    thr = select_threshold(est, args.q, args.variant)
    values = est.raw if args.variant == "basic" else est.legal
    adm = check_admissibility(f0, fm)
    at_tau = None if thr.flag_all else float(values[np.searchsorted(est.grid, thr.tau)])
    print(f"tau = {'FLAG_ALL' if thr.flag_all else repr(thr.tau)}")
    print(f"variant = {thr.variant}  alpha = {thr.alpha}  q = {thr.q}")
    print(f"n_clean = {f0.n}  n_mixture = {fm.n}  grid_points = {est.grid.size}")
    print(f"F_alien(tau) = {at_tau}")
    print(f"F_alien raw range = [{float(est.raw.min())!r}, {float(est.raw.max())!r}]  "
          f"decreasing steps = {int(np.sum(np.diff(est.raw) < 0))}")
    print(f"admissible = {adm.admissible}  max_violation = {float(adm.max_violation)!r}")
    if model is not None:
        print(f"clean scored out-of-bag = {clean_oob}")
    if args.out:
        doc = {
            "format": "opencat-threshold",
            "version": 1,
            **thr.to_dict(),
            "inputs_sha256": _sha256_files(args.clean, args.mixture),
            "n_clean": f0.n,
            "n_mixture": fm.n,
        }
        _atomic_write(Path(args.out), json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return 0


def _load_model(path):
    from .detectors import load_model

    if path is None:
        return None
    try:
        return load_model(path)
    except (ValueError, KeyError) as exc:
        raise ScoreFileError(f"{path}: unreadable model file ({exc})") from None


def _read_threshold(path) -> DetectionThreshold:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ScoreFileError(f"{path}: invalid threshold JSON ({exc})") from None
    if doc.get("format") != "opencat-threshold":
        raise ScoreFileError(f"{path}: not an opencat threshold file")
    return DetectionThreshold.from_dict(doc)


def cmd_score(args) -> int:
    thr = _read_threshold(args.threshold_file)
    model = _load_model(args.model)
    scores, _ = _load_points_or_scores(args.input, model)
    flags = classify(scores, thr)
    if args.out:
        lines = ["score,alarm"] + [f"{s!r},{int(f)}" for s, f in zip(scores.tolist(), flags.tolist())]
        _atomic_write(Path(args.out), "\n".join(lines) + "\n")
    print(f"alarms = {int(flags.sum())} / {flags.size}")
    return 0


_EXPERIMENT_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)}


def _experiment_configs(args, section: str, extra: set[str] = frozenset()):
    conf = _merge(args, section, _EXPERIMENT_KEYS | {"workers"} | set(extra))
    if conf.get("seed") is None:
        raise UsageError(f"{args.command}: a seed is required (--seed or seed = ... in the config)")
    ns = conf.pop("n", [ExperimentConfig.n])
    alphas = conf.pop("alpha", [ExperimentConfig.alpha])
    workers = conf.pop("workers", 1)
    rest = {k: conf.pop(k) for k in list(conf) if k in extra}
    cfgs = [ExperimentConfig(n=n, alpha=a, **conf) for a in alphas for n in ns]
    return cfgs, workers, rest


def cmd_experiment(args) -> int:
    from .harness import run_experiment, write_results

    cfgs, workers, _ = _experiment_configs(args, "experiment")
    results = []
    for cfg in cfgs:
        logger.info("experiment alpha=%s n=%s (%d repetitions)", cfg.alpha, cfg.n, cfg.repetitions)
        results.append(run_experiment(cfg, workers=workers))
    out = Path(args.out)
    write_results(results, out)
    _write_metadata(out, sys.argv)
    for r in results:
        for s in r.summaries.values():
            print(f"alpha={r.config.alpha} n={r.config.n} {s.variant}: recall={s.recall_mean:.4f} "
                  f"fpr={s.fpr_mean:.4f} eta={s.empirical_eta:.4f} n*={s.n_star}")
    return 0


def cmd_sweep(args) -> int:
    from .harness import alpha_sweep, write_sweep

    cfgs, workers, rest = _experiment_configs(args, "sweep", {"xis"})
    if len(cfgs) != 1:
        raise UsageError("sweep: give a single n and alpha")
    xis = rest.get("xis", list(DEFAULT_XIS))
    result = alpha_sweep(cfgs[0], [0.0] + [x for x in xis if x != 0.0], workers=workers)
    out = Path(args.out)
    write_sweep(result, out)
    _write_metadata(out, sys.argv)
    for r in result.rows:
        print(f"xi={r.xi} {r.variant}: d_recall={r.mean_delta_recall:+.4f} d_fpr={r.mean_delta_fpr:+.4f}")
    return 0


_CV_KEYS = {f.name for f in dataclasses.fields(CvConfig)} | {
    "nominal_classes", "label_column"}


def cmd_cv(args) -> int:
    from .harness import run_cv_benchmark, run_cv_on_scores, write_cv
    from .synthdata import LabeledPointSet

    conf = _merge(args, "cv", _CV_KEYS)
    if conf.get("seed") is None:
        raise UsageError("cv: a seed is required (--seed or seed = ... in the config)")
    alphas = conf.pop("alpha", None)
    if not alphas:
        raise UsageError("cv: --alpha is required")
    nominal_classes = conf.pop("nominal_classes", None)
    label_column = conf.pop("label_column", None) or "label"
    cfgs = [CvConfig(alpha=a, **conf) for a in alphas]

    results = []
    if args.data:
        if not nominal_classes:
            raise UsageError("cv --data needs nominal_classes (flag or config)")
        X, raw_labels = read_feature_csv(args.data, label_column=label_column)
        if raw_labels is None:
            raise ScoreFileError(f"{args.data}: no {label_column!r} column")
        nominal = set(nominal_classes)
        labels = np.array([lab not in nominal for lab in raw_labels], dtype=bool)
        data = LabeledPointSet(points=X, labels=labels)
        results = [run_cv_benchmark(data, cfg) for cfg in cfgs]
    elif args.clean_scores and args.mixture_scores:
        clean = load_scores(args.clean_scores)
        mix, lab = load_scores(args.mixture_scores, with_labels=True)
        results = [run_cv_on_scores(clean, mix, lab, cfg) for cfg in cfgs]
    else:
        raise UsageError("cv: give --data, or both --clean-scores and --mixture-scores")
    out = Path(args.out)
    write_cv(results, out)
    _write_metadata(out, sys.argv)
    for r in results:
        for s in r.summaries.values():
            print(f"alpha={r.config.alpha} n={r.n} {s.variant}: recall={s.recall_mean:.4f} fpr={s.fpr_mean:.4f}"
                  + (f" ({s.n_recall_undefined} folds without aliens)" if s.n_recall_undefined else ""))
    return 0


# ---------------------------------------------------------------- parser


def _experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file; flags override its values")
    p.add_argument("--n", type=_ints, help="sample size(s), comma separated")
    p.add_argument("--alpha", type=_floats, help="alien fraction(s), comma separated")
    p.add_argument("--alpha-prime", dest="alpha_prime", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--eval-size", dest="eval_size", type=int)
    p.add_argument("--detector", choices=("iforest", "loda"))
    p.add_argument("--trees", dest="n_trees", type=int)
    p.add_argument("--subsample", dest="subsample_fraction", type=float)
    p.add_argument("--projections", dest="n_projections", type=int)
    p.add_argument("--variant", choices=("basic", "iso", "both"))
    p.add_argument("--mixture-mode", dest="mixture_mode", choices=("exact_count", "iid"))
    p.add_argument("--oracle", dest="oracle", action="store_const", const=True)
    p.add_argument("--no-oracle", dest="oracle", action="store_const", const=False)
    p.add_argument("--dim", type=int)
    p.add_argument("--shift", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opencat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"opencat {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bounds", help="sample-size and concentration calculators")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--alpha-prime", dest="alpha_prime", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--q", type=float, default=0.05)
    p.add_argument("--n", type=float, help="sample size for the achieved-epsilon calculation")
    p.add_argument("--lam", type=float, help="lambda for the concentration tail bound")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("synth", help="write synthetic feature CSVs")
    p.add_argument("--kind", choices=("nominal", "alien", "mixture"), required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float)
    p.add_argument("--mode", choices=("exact_count", "iid"), default="exact_count")
    p.add_argument("--dim", type=int, default=9)
    p.add_argument("--shift", type=float, default=3.0)
    p.add_argument("--labels", action="store_true", help="add a label column (1 = alien)")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a detector on a clean feature CSV")
    p.add_argument("--detector", choices=("iforest", "loda"), default="iforest")
    p.add_argument("--input", required=True)
    p.add_argument("--label-column", default="label", help="column to ignore if present")
    p.add_argument("--trees", type=int, default=1000)
    p.add_argument("--subsample", type=float, default=0.2)
    p.add_argument("--projections", type=int, default=1000)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("threshold", help="fit the alarm threshold from clean and mixture scores")
    p.add_argument("--clean", required=True, help="clean score file (or feature CSV with --model)")
    p.add_argument("--mixture", required=True, help="mixture score file (or feature CSV with --model)")
    p.add_argument("--model", help="detector model; inputs are then feature CSVs")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--q", type=float, default=0.05)
    p.add_argument("--variant", choices=("basic", "iso"), default="basic")
    p.add_argument("--out", help="write the threshold JSON here")
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("score", help="apply a saved threshold")
    p.add_argument("--threshold-file", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--model")
    p.add_argument("--out", help="CSV of score,alarm")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("experiment", help="repeated synthetic trials")
    _experiment_flags(p)
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("sweep", help="alpha' = alpha + xi misspecification sweep")
    _experiment_flags(p)
    p.add_argument("--xis", type=_floats, help=f"comma separated (default {','.join(map(str, DEFAULT_XIS))})")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("cv", help="cross-validated benchmark on labelled data or scores")
    p.add_argument("--config")
    p.add_argument("--data", help="feature CSV with a class label column")
    p.add_argument("--label-column", dest="label_column")
    p.add_argument("--nominal-classes", dest="nominal_classes",
                   type=lambda s: [t.strip() for t in s.split(",") if t.strip()])
    p.add_argument("--clean-scores")
    p.add_argument("--mixture-scores", help="CSV with score and label columns")
    p.add_argument("--alpha", type=_floats)
    p.add_argument("--alpha-prime", dest="alpha_prime", type=float)
    p.add_argument("--q", type=float)
    p.add_argument("--delta", type=float)
    p.add_argument("--folds", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--detector", choices=("iforest", "loda"))
    p.add_argument("--trees", dest="n_trees", type=int)
    p.add_argument("--subsample", dest="subsample_fraction", type=float)
    p.add_argument("--projections", dest="n_projections", type=int)
    p.add_argument("--variant", choices=("basic", "iso", "both"))
    p.add_argument("--seed", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cv)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"opencat {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ScoreFileError, OSError) as exc:
        print(f"opencat {args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, TypeError) as exc:
        print(f"opencat {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
