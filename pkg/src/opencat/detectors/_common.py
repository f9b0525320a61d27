from __future__ import annotations

import hashlib

import numpy as np


def as_points(data, *, name: str = "points") -> np.ndarray:
    """Validate a feature matrix and return it as C-contiguous float64 (n, d).

    Labelled containers are refused on purpose: detectors must only ever see
    the unlabelled view.
    """
    if hasattr(data, "labels"):
        raise TypeError(f"{name}: pass the unlabelled .points array, not a labelled set")
    arr = np.ascontiguousarray(data, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a 2-d array, got shape {arr.shape}")
    if arr.shape[0] == 0:
        raise ValueError(f"{name}: empty point set")
    if arr.shape[1] == 0:
        raise ValueError(f"{name}: zero-dimensional points")
    if not np.all(np.isfinite(arr)):
        row = int(np.flatnonzero(~np.isfinite(arr).all(axis=1))[0])
        raise ValueError(f"{name}: non-finite entry in row {row}")
    return arr


def fingerprint(arr: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(repr(arr.shape).encode())
    h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()


def unit_rng(seed: int, unit: int) -> np.random.Generator:
    """Independent stream for ensemble member ``unit``; independent of build order."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(unit),)))


def check_leave_out(inbag: np.ndarray, what: str) -> None:
    always = np.flatnonzero(inbag.all(axis=1))
    if always.size:
        shown = ", ".join(str(int(i)) for i in always[:10])
        more = "" if always.size <= 10 else f" (+{always.size - 10} more)"
        raise ValueError(
            f"cannot leave-out score: training rows {shown}{more} are in every {what}"
        )
