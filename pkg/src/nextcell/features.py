"""Fixed-length feature vectors from CSI traces and handover histories."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .channel import CsiTrace

DEFAULT_LENGTH = 100
HISTORY_LENGTH = 8
MIN_HISTORY = 2


class FeatureError(ValueError):
    pass


def _gains(trace) -> np.ndarray:
    return trace.gains if isinstance(trace, CsiTrace) else np.asarray(trace, dtype=float)


def n_kept(n: int, ratio: float) -> int:
    """Number of leading samples kept from ``n`` at sample-length ratio ``ratio``."""
    if not 0 < ratio <= 1:
        raise FeatureError(f"ratio must be in (0, 1], got {ratio}")
    # the epsilon keeps e.g. 0.6 * 100 from rounding up to 61
    return max(1, min(n, math.ceil(ratio * n - 1e-9)))


def truncate(trace, ratio: float):
    """First ``ceil(ratio * n)`` samples of a trace (CsiTrace or array)."""
    n = len(_gains(trace))
    if n == 0:
        raise FeatureError("cannot truncate an empty trace")
    k = n_kept(n, ratio)
    if isinstance(trace, CsiTrace):
        return trace.prefix(k)
    return np.asarray(trace)[:k]


def normalize(trace, length: int = DEFAULT_LENGTH) -> np.ndarray:
    """Resample the dB trace to ``length`` points over normalized time.

    Sample ``k`` of an ``n``-sample trace sits at time ``k / (n - 1)``; the
    output is the linear interpolant evaluated on a uniform grid of
    ``length`` points in [0, 1].
    """
    g = _gains(trace)
    if len(g) < 2:
        raise FeatureError("need at least 2 samples to normalize")
    if length < 2:
        raise FeatureError("feature length must be at least 2")
    if np.any(g <= 0):
        raise FeatureError("gains must be positive")
    db = 10.0 * np.log10(g)
    return np.interp(np.linspace(0.0, 1.0, length), np.linspace(0.0, 1.0, len(g)), db)


def featurize(traces, ratio: float = 1.0, length: int = DEFAULT_LENGTH) -> np.ndarray:
    """Stack ``normalize(truncate(t, ratio))`` for each trace.

    Traces that keep fewer than 2 samples are padded with their second
    sample so very short ratios stay usable.
    """
    rows = []
    for t in traces:
        g = _gains(t)
        kept = g[:max(2, n_kept(len(g), ratio))]
        rows.append(normalize(kept, length))
    return np.vstack(rows) if rows else np.empty((0, length))


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    scale: np.ndarray

    def transform(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        safe = np.where(self.scale > 0, self.scale, 1.0)
        return np.where(self.scale > 0, (X - self.mean) / safe, 0.0)

    def to_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean], "scale": [float(v) for v in self.scale]}

    @classmethod
    def from_dict(cls, d) -> Scaler:
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["scale"], dtype=float))


def standardize(X) -> tuple[Scaler, np.ndarray]:
    """Fit a zero-mean, unit-variance scaler; constant columns map to 0."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) < 2:
        raise FeatureError("need at least 2 training vectors")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    # treat round-off level spread as constant
    scale = np.where(scale > 1e-12 * np.maximum(1.0, np.abs(mean)), scale, 0.0)
    scaler = Scaler(mean, scale)
    return scaler, scaler.transform(X)


def encode_history(history, k_used: int, neighbor_count: int, width: int | None = None) -> np.ndarray:
    """One-hot encode the ``k_used`` most recent handovers.

    ``history`` holds neighbor indices (0-based), oldest first.  The output
    has ``width`` blocks of ``neighbor_count`` entries (default ``k_used``);
    the most recent handover fills the last block and unused leading blocks
    stay zero.
    """
    if k_used < MIN_HISTORY:
        raise FeatureError(f"history length below {MIN_HISTORY} is not supported")
    if k_used > len(history):
        raise FeatureError(f"only {len(history)} handovers available, {k_used} requested")
    width = k_used if width is None else width
    if width < k_used:
        raise FeatureError("width smaller than k_used")
    out = np.zeros((width, neighbor_count))
    recent = list(history)[-k_used:]
    for block, idx in enumerate(recent, start=width - k_used):
        if not 0 <= idx < neighbor_count:
            raise FeatureError(f"neighbor index {idx} out of range")
        out[block, idx] = 1.0
    return out.ravel()


def write_feature_csv(file, X, labels) -> None:
    X = np.asarray(X, dtype=float)
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"f{i}" for i in range(X.shape[1])] + ["label"])
        for row, lab in zip(X, labels):
            w.writerow([repr(float(v)) for v in row] + [int(lab)])


def read_feature_csv(file) -> tuple[np.ndarray, np.ndarray]:
    with open(file, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[-1] != "label":
            raise FeatureError("feature CSV must end with a label column")
        rows = list(reader)
    X = np.array([[float(v) for v in r[:-1]] for r in rows]).reshape(len(rows), len(header) - 1)
    y = np.array([int(r[-1]) for r in rows], dtype=int)
    return X, y
