"""Anomaly detectors that produce the scores thresholded downstream."""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from ._common import as_points
from .iforest import IsolationForest, average_path_length, score_iforest, train_iforest
from .loda import Loda, score_loda, train_loda

__all__ = [
    "IsolationForest",
    "Loda",
    "MODEL_FORMAT_VERSION",
    "as_points",
    "average_path_length",
    "load_model",
    "save_model",
    "score",
    "score_iforest",
    "score_loda",
    "train_iforest",
    "train_loda",
]

MODEL_FORMAT_VERSION = 1
_KINDS = {"iforest": IsolationForest, "loda": Loda}


def save_model(model: IsolationForest | Loda, path) -> None:
    """Write a model to an ``.npz`` container (arrays plus a JSON header)."""
    kind = "iforest" if isinstance(model, IsolationForest) else "loda"
    arrays, meta = {}, {}
    for f in dataclasses.fields(model):
        value = getattr(model, f.name)
        if isinstance(value, np.ndarray):
            arrays[f.name] = value
        else:
            meta[f.name] = value
    header = {"format": "opencat-model", "version": MODEL_FORMAT_VERSION, "kind": kind, "meta": meta}
    with open(path, "wb") as fh:
        np.savez_compressed(fh, __header__=np.array(json.dumps(header, sort_keys=True)), **arrays)


def load_model(path) -> IsolationForest | Loda:
    with np.load(Path(path), allow_pickle=False) as z:
        header = json.loads(str(z["__header__"]))
        if header.get("format") != "opencat-model":
            raise ValueError(f"{path}: not an opencat model file")
        if header.get("version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported model format version {header.get('version')!r}")
        cls = _KINDS[header["kind"]]
        arrays = {k: z[k] for k in z.files if k != "__header__"}
    return cls(**arrays, **header["meta"])


def score(model: IsolationForest | Loda, points, *, leave_out: bool = False) -> np.ndarray:
    """Score with either detector; ``leave_out`` means OOB for forests."""
    if isinstance(model, IsolationForest):
        return score_iforest(model, points, oob=leave_out)
    return score_loda(model, points, leave_out=leave_out)
