"""Real-time prediction with feedback learning as a discrete-event simulation.

Users enter the focal cell as a Poisson process.  Each user is predicted
once, at ``t_p = t_in + r_p (t_out - t_in)``, from the CSI reported so far.
When the user leaves, its full trace and true next cell join the training
pool, and every ``retrain_every`` completions from the same previous cell
the classifier for that cell is retrained and swapped in.
"""

from __future__ import annotations

import csv
import heapq
import math
from collections import defaultdict
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import ChannelConfig, simulate_traversal
from .features import DEFAULT_LENGTH, featurize, standardize
from .predictor import ClassifierBank, ClassifierEntry
from .scenario import CellTopology, RadioMap
from . import svm

ARRIVAL, PREDICT, EXIT = 0, 1, 2

DEFAULT_ONLINE_C = 8.0
DEFAULT_ONLINE_GAMMA = 2.0 ** -7


class OnlineConfigError(ValueError):
    pass


@dataclass
class OnlineConfig:
    rate: float = 1.0
    prediction_ratio: float = 0.6
    retrain_every: float = 10
    horizon: float = 3600.0
    seed: int = 0
    window: int = 50
    min_labels: int = 2
    length: int = DEFAULT_LENGTH
    C: float = DEFAULT_ONLINE_C
    gamma: float = DEFAULT_ONLINE_GAMMA
    tol: float = svm.DEFAULT_TOL

    def __post_init__(self):
        if not self.rate > 0:
            raise OnlineConfigError("arrival rate must be positive")
        if not 0 < self.prediction_ratio <= 1:
            raise OnlineConfigError("prediction ratio must lie in (0, 1]")
        if not self.retrain_every >= 1:
            raise OnlineConfigError("retrain_every must be at least 1")
        if self.horizon < 0:
            raise OnlineConfigError("horizon must be non-negative")
        if self.window < 1:
            raise OnlineConfigError("window must be at least 1")
        if self.min_labels < 2:
            raise OnlineConfigError("min_labels must be at least 2")


@dataclass(frozen=True)
class PredictionRecord:
    user: int
    t_in: float
    t_p: float
    t_out: float
    previous_cell: int
    predicted: int | None
    true_next: int
    bank_version: int
    path_id: int
    n_used: int
    t_last_sample: float

    @property
    def correct(self) -> bool:
        return self.predicted is not None and self.predicted == self.true_next


@dataclass(frozen=True)
class RetrainRecord:
    t: float
    previous_cell: int
    version: int
    n_train: int
    latest_completion: float


@dataclass
class OnlineLog:
    records: list[PredictionRecord] = field(default_factory=list)
    retrains: list[RetrainRecord] = field(default_factory=list)
    labels: tuple[int, ...] = ()
    completions: list[tuple[float, int]] = field(default_factory=list)  # (t_out, path_id)

    def to_csv(self, file) -> None:
        with open(file, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["user", "t_in", "t_p", "t_out", "p", "n_hat", "n", "bank_version"])
            for r in self.records:
                w.writerow([r.user, repr(r.t_in), repr(r.t_p), repr(r.t_out), r.previous_cell,
                            "" if r.predicted is None else r.predicted, r.true_next,
                            r.bank_version])

    def time_reaching(self, per_path: int, n_paths: int) -> float:
        """Earliest time at which each of ``n_paths`` paths has ``per_path`` completions."""
        counts: dict[int, int] = defaultdict(int)
        done = 0
        for t, pid in sorted(self.completions):
            counts[pid] += 1
            if counts[pid] == per_path:
                done += 1
                if done == n_paths:
                    return t
        return math.inf


def _train_entry(feats: list[np.ndarray], labels: list[int], config: OnlineConfig) -> ClassifierEntry:
    scaler, Xs = standardize(np.vstack(feats))
    model = svm.train_multiclass(Xs, labels, config.C, svm.KernelParams("gaussian", config.gamma),
                                 config.tol)
    model.scaler = scaler
    return ClassifierEntry(scaler, model, {"n_samples": len(labels), "C": config.C,
                                           "gamma": config.gamma, "constant": False})


def run_online(topology: CellTopology, channel: ChannelConfig, config: OnlineConfig,
               radio_map: RadioMap | None = None) -> OnlineLog:
    rng = np.random.default_rng(config.seed)
    log = OnlineLog(labels=tuple(topology.labels))
    heap: list = []
    seq = 0

    def push(t, kind, payload):
        nonlocal seq
        heapq.heappush(heap, (t, seq, kind, payload))
        seq += 1

    bank = ClassifierBank(topology.cell_id, config.length, {}, config.prediction_ratio)
    version = 0
    pool_feats: dict[int, list[np.ndarray]] = defaultdict(list)
    pool_labels: dict[int, list[int]] = defaultdict(list)
    pool_tout: dict[int, list[float]] = defaultdict(list)
    n_done: dict[int, int] = defaultdict(int)
    user = 0

    push(rng.exponential(1.0 / config.rate), ARRIVAL, None)
    while heap:
        t, _, kind, payload = heapq.heappop(heap)
        if t > config.horizon:
            break
        if kind == ARRIVAL:
            path = topology.paths[rng.integers(len(topology.paths))]
            speed = float(rng.uniform(*channel.speed_range))
            trav = simulate_traversal(topology, path, speed, channel, rng, radio_map, t_in=t)
            t_out = t + path.length / speed
            push(t + config.prediction_ratio * (t_out - t), PREDICT, (user, trav, t_out))
            # feedback needs the whole trace, including the report at the exit point
            push(max(t_out, float(trav.trace.times[-1])), EXIT, (user, trav, t_out))
            user += 1
            push(t + rng.exponential(1.0 / config.rate), ARRIVAL, None)
        elif kind == PREDICT:
            uid, trav, t_out = payload
            tr = trav.trace
            n_used = min(len(tr), int(math.floor((t - tr.t_in) / tr.sample_period + 1e-9)) + 1)
            n_used = max(n_used, 2)
            entry = bank.classifiers.get(trav.previous_cell)
            predicted = None
            if entry is not None:
                x = entry.scaler.transform(featurize([tr.gains[:n_used]], 1.0, config.length))
                predicted = int(entry.model.predict(x)[0])
            log.records.append(PredictionRecord(
                uid, tr.t_in, t, t_out, trav.previous_cell, predicted, trav.next_cell,
                version if entry is not None else -1, trav.path_id, n_used,
                tr.t_in + (n_used - 1) * tr.sample_period))
        else:
            uid, trav, t_out = payload
            p = trav.previous_cell
            log.completions.append((t, trav.path_id))
            pool_feats[p].append(featurize([trav.trace], config.prediction_ratio, config.length)[0])
            pool_labels[p].append(trav.next_cell)
            pool_tout[p].append(t)
            n_done[p] += 1
            if (math.isfinite(config.retrain_every) and n_done[p] % int(config.retrain_every) == 0
                    and len(set(pool_labels[p])) >= config.min_labels):
                entry = _train_entry(pool_feats[p], pool_labels[p], config)
                version += 1
                # swap in a new table so earlier references stay consistent
                bank = replace(bank, classifiers={**bank.classifiers, p: entry})
                log.retrains.append(RetrainRecord(t, p, version, len(pool_labels[p]),
                                                  max(pool_tout[p])))
    return log


def accuracy_series(log: OnlineLog, window: int) -> dict[int, list[tuple[float, float]]]:
    """Sliding-window recall per true label, one point per full window.

    Each point is ``(t_p of the newest prediction, fraction correct over the
    last ``window`` predictions of that label)``.  Abstentions count as wrong.
    """
    if window < 1:
        raise ValueError("window must be at least 1")
    out: dict[int, list[tuple[float, float]]] = {}
    by_label: dict[int, list[PredictionRecord]] = defaultdict(list)
    for r in sorted(log.records, key=lambda r: (r.t_p, r.user)):
        by_label[r.true_next].append(r)
    for lab in sorted(set(log.labels) | set(by_label)):
        recs = by_label.get(lab, [])
        hits = np.array([r.correct for r in recs], dtype=float)
        if len(hits) < window:
            out[lab] = []
            continue
        sums = np.convolve(hits, np.ones(window), mode="valid")
        out[lab] = [(recs[k + window - 1].t_p, float(s / window)) for k, s in enumerate(sums)]
    return out


def write_series_csv(series: dict[int, list[tuple[float, float]]], file) -> None:
    """Wide CSV: one row per event time, one column per label (blank until defined)."""
    labels = sorted(series)
    events = sorted({(t, lab) for lab in labels for t, _ in series[lab]})
    current: dict[int, float | None] = {lab: None for lab in labels}
    lookup = {(t, lab): v for lab in labels for t, v in series[lab]}
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"acc_{lab}" for lab in labels])
        for t, lab in events:
            current[lab] = lookup[(t, lab)]
            w.writerow([repr(t)] + ["" if current[x] is None else f"{current[x]:.6f}"
                                    for x in labels])
