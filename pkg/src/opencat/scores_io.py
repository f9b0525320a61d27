"""Reading and writing score files and feature CSVs.

A score file is either one decimal number per line, or a CSV whose header has
a ``score`` column (and optionally a ``label`` column, 1 = alien).
"""

from __future__ import annotations

import csv
import io
import math
from pathlib import Path

import numpy as np

__all__ = [
    "ScoreFileError",
    "load_external_scores",
    "load_scores",
    "read_feature_csv",
    "write_feature_csv",
]


class ScoreFileError(ValueError):
    """Malformed input file; the message names the file and line."""


def _parse(value: str, path, lineno: int, what: str = "score") -> float:
    try:
        x = float(value)
    except ValueError:
        raise ScoreFileError(f"{path}:{lineno}: cannot parse {what} {value.strip()!r}") from None
    if not math.isfinite(x):
        raise ScoreFileError(f"{path}:{lineno}: non-finite {what} {value.strip()!r}")
    return x


def _looks_numeric(line: str) -> bool:
    try:
        float(line)
    except ValueError:
        return False
    return True


def load_scores(path, *, with_labels: bool = False):
    """Parse a score file.

    Returns the scores as a float array, or ``(scores, labels)`` when
    ``with_labels`` is set (labels need the CSV form with a ``label`` column).
    Raises ScoreFileError on malformed or non-finite entries and on empty files.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    lines = text.splitlines()
    first = next((ln for ln in lines if ln.strip()), None)
    if first is None:
        raise ScoreFileError(f"{path}: empty sample (no scores)")

    labels: list[int] | None = None
    if _looks_numeric(first.strip()) and "," not in first:
        if with_labels:
            raise ScoreFileError(f"{path}: labels requested but file has no header/label column")
        scores = [
            _parse(ln, path, i)
            for i, ln in enumerate(lines, start=1)
            if ln.strip()
        ]
    else:
        reader = csv.DictReader(io.StringIO(text))
        fields = [f.strip() for f in (reader.fieldnames or [])]
        if "score" not in fields:
            raise ScoreFileError(f"{path}:1: CSV header has no 'score' column")
        reader.fieldnames = fields
        if with_labels and "label" not in fields:
            raise ScoreFileError(f"{path}:1: CSV header has no 'label' column")
        scores = []
        labels = [] if with_labels else None
        for row in reader:
            lineno = reader.line_num
            if row.get("score") is None:
                raise ScoreFileError(f"{path}:{lineno}: missing score field")
            scores.append(_parse(row["score"], path, lineno))
            if labels is not None:
                lab = _parse(row["label"] or "", path, lineno, "label")
                if lab not in (0.0, 1.0):
                    raise ScoreFileError(f"{path}:{lineno}: label must be 0 or 1, got {row['label']!r}")
                labels.append(int(lab))
        if not scores:
            raise ScoreFileError(f"{path}: empty sample (header only)")

    arr = np.asarray(scores, dtype=np.float64)
    if with_labels:
        return arr, np.asarray(labels, dtype=bool)
    return arr


def load_external_scores(clean_path, mixture_path) -> tuple[np.ndarray, np.ndarray]:
    """Scores computed elsewhere (e.g. by a deep network) for the clean and mixture sets."""
    return load_scores(clean_path), load_scores(mixture_path)


def write_feature_csv(path, points: np.ndarray, labels: np.ndarray | None = None) -> None:
    points = np.asarray(points, dtype=np.float64)
    header = [f"f{j}" for j in range(points.shape[1])]
    if labels is not None:
        header.append("label")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, row in enumerate(points.tolist()):
            out = [repr(v) for v in row]
            if labels is not None:
                out.append(str(int(labels[i])))
            w.writerow(out)


def read_feature_csv(path, *, label_column: str | None = "label"):
    """Read a feature CSV (header required).

    Every column except ``label_column`` is a feature. Returns
    ``(points, labels)``; ``labels`` holds the raw label strings or None.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ScoreFileError(f"{path}: empty file") from None
        lab_idx = header.index(label_column) if label_column in header else None
        feat_idx = [j for j in range(len(header)) if j != lab_idx]
        if not feat_idx:
            raise ScoreFileError(f"{path}:1: no feature columns")
        rows, labels = [], []
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise ScoreFileError(f"{path}:{lineno}: expected {len(header)} fields, got {len(rec)}")
            rows.append([_parse(rec[j], path, lineno, "feature") for j in feat_idx])
            if lab_idx is not None:
                labels.append(rec[lab_idx].strip())
    if not rows:
        raise ScoreFileError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64), (labels if lab_idx is not None else None)
