"""Classifier bank: one multi-class SVM per previous cell."""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import svm
from .channel import CsiTrace
from .features import DEFAULT_LENGTH, Scaler, featurize, standardize

log = logging.getLogger(__name__)

BANK_FORMAT = "nextcell-bank"
BANK_VERSION = 1


class UnknownCellError(KeyError):
    """No classifier exists for the requested previous cell."""


class BankFileError(ValueError):
    pass


class BankVersionError(BankFileError):
    pass


class BankCorruptError(BankFileError):
    pass


@dataclass(frozen=True)
class LabeledTraversal:
    previous_cell: int
    next_cell: int
    trace: CsiTrace
    path_id: int = -1
    speed: float = float("nan")


@dataclass
class BankConfig:
    length: int = DEFAULT_LENGTH
    kind: str = "gaussian"
    C_grid: Sequence[float] = svm.C_GRID
    gamma_grid: Sequence[float] = svm.GAMMA_GRID
    folds: int = 5
    cv_subset: float = 0.5
    tol: float = svm.DEFAULT_TOL
    # fixed hyperparameters skip the grid search
    C: float | None = None
    gamma: float | None = None
    seed: int = 0


@dataclass
class ClassifierEntry:
    scaler: Scaler | None
    model: svm.MultiClassModel
    meta: dict = field(default_factory=dict)


@dataclass
class ClassifierBank:
    cell_id: int
    length: int
    classifiers: dict[int, ClassifierEntry]
    ratio: float = 1.0

    def __len__(self):
        return len(self.classifiers)

    @property
    def previous_cells(self) -> list[int]:
        return sorted(self.classifiers)


def fit_classifier(traces, labels, ratio: float, config: BankConfig,
                   rng: np.random.Generator) -> ClassifierEntry:
    """truncate -> normalize -> standardize -> (grid search) -> SVM."""
    labels = np.asarray(labels, dtype=int)
    counts = {int(k): int(v) for k, v in zip(*np.unique(labels, return_counts=True))}
    meta = {"n_samples": int(len(labels)), "label_counts": counts}
    if len(counts) < 2:
        meta["constant"] = True
        log.warning("single next-cell label %s; using a constant classifier", list(counts))
        return ClassifierEntry(None, svm.constant_model(labels[0]), meta)
    X = featurize(traces, ratio, config.length)
    scaler, Xs = standardize(X)
    if config.C is not None and (config.gamma is not None or config.kind == "linear"):
        C, gamma = config.C, config.gamma if config.gamma is not None else 1.0
    else:
        gs = svm.grid_search(Xs, labels, config.C_grid, config.gamma_grid, config.folds, rng,
                             subset=config.cv_subset, tol=config.tol, kind=config.kind)
        C, gamma = gs.C, gs.gamma
        meta["cv_accuracy"] = gs.scores[(gs.C, gs.gamma)]
        meta["cv_folds"] = gs.folds
        if gs.reduced_folds:
            meta["reduced_folds"] = True
    params = svm.KernelParams(config.kind, gamma)
    model = svm.train_multiclass(Xs, labels, C, params, config.tol)
    model.scaler = scaler
    meta.update(C=float(C), gamma=float(gamma), constant=False)
    return ClassifierEntry(scaler, model, meta)


def train_bank(data: Iterable[LabeledTraversal], ratio: float = 1.0,
               config: BankConfig | None = None, cell_id: int = 0,
               rng: np.random.Generator | None = None) -> ClassifierBank:
    config = config or BankConfig()
    rng = np.random.default_rng(config.seed) if rng is None else rng
    parts: dict[int, list[LabeledTraversal]] = defaultdict(list)
    for d in data:
        parts[d.previous_cell].append(d)
    if not parts:
        raise ValueError("no training data")
    classifiers = {}
    for prev in sorted(parts):
        items = parts[prev]
        classifiers[prev] = fit_classifier([d.trace for d in items],
                                           [d.next_cell for d in items], ratio, config, rng)
    return ClassifierBank(cell_id, config.length, classifiers, ratio)


def _features(bank: ClassifierBank, entry: ClassifierEntry, traces, ratio: float) -> np.ndarray:
    return entry.scaler.transform(featurize(traces, ratio, bank.length))


def predict(bank: ClassifierBank, previous_cell: int, trace, ratio: float = 1.0) -> int:
    return int(predict_many(bank, previous_cell, [trace], ratio)[0])


def predict_many(bank: ClassifierBank, previous_cell: int, traces, ratio: float = 1.0) -> np.ndarray:
    try:
        entry = bank.classifiers[previous_cell]
    except KeyError:
        raise UnknownCellError(f"no classifier for previous cell {previous_cell}") from None
    if entry.model.constant:
        return np.full(len(traces), entry.model.classes[0])
    return entry.model.predict(_features(bank, entry, traces, ratio))


# -- evaluation --------------------------------------------------------------

REPORT_HEADER = ["ratio", "label", "n_total", "n_correct", "recall"]
OVERALL = "all"


@dataclass
class AccuracyReport:
    """Per-(ratio, label) counts; recall is correct / total for that true label."""

    counts: dict[tuple[float, int], tuple[int, int]] = field(default_factory=dict)

    def add(self, ratio: float, label: int, n_total: int, n_correct: int) -> None:
        tot, cor = self.counts.get((ratio, label), (0, 0))
        self.counts[(ratio, label)] = (tot + n_total, cor + n_correct)

    @property
    def ratios(self) -> list[float]:
        return sorted({r for r, _ in self.counts})

    @property
    def labels(self) -> list[int]:
        return sorted({lab for _, lab in self.counts})

    def recall(self, ratio: float, label: int) -> float:
        tot, cor = self.counts[(ratio, label)]
        return cor / tot if tot else float("nan")

    def overall(self, ratio: float) -> float:
        rows = [v for (r, _), v in self.counts.items() if r == ratio]
        tot = sum(t for t, _ in rows)
        return sum(c for _, c in rows) / tot if tot else float("nan")

    def merge(self, other: AccuracyReport) -> AccuracyReport:
        out = AccuracyReport(dict(self.counts))
        for (r, lab), (t, c) in other.counts.items():
            out.add(r, lab, t, c)
        return out

    def rows(self) -> list[list]:
        out = []
        for r in self.ratios:
            for lab in self.labels:
                if (r, lab) in self.counts:
                    t, c = self.counts[(r, lab)]
                    out.append([r, lab, t, c, c / t if t else float("nan")])
            rows = [v for (rr, _), v in self.counts.items() if rr == r]
            t, c = sum(x for x, _ in rows), sum(y for _, y in rows)
            out.append([r, OVERALL, t, c, c / t if t else float("nan")])
        return out

    def to_csv(self, file) -> None:
        with open(file, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(REPORT_HEADER)
            for r, lab, t, c, rec in self.rows():
                w.writerow([repr(float(r)), lab, t, c, f"{rec:.6f}"])

    @classmethod
    def from_csv(cls, file) -> AccuracyReport:
        rep = cls()
        with open(file, newline="") as fh:
            reader = csv.DictReader(fh)
            for row in reader:
                if row["label"] == OVERALL:
                    continue
                rep.add(float(row["ratio"]), int(row["label"]), int(row["n_total"]),
                        int(row["n_correct"]))
        return rep


def evaluate(bank: ClassifierBank, test: Sequence[LabeledTraversal], ratios) -> AccuracyReport:
    if not test:
        raise ValueError("empty test set")
    report = AccuracyReport()
    by_prev: dict[int, list[LabeledTraversal]] = defaultdict(list)
    for d in test:
        by_prev[d.previous_cell].append(d)
    for ratio in ratios:
        tally: Counter = Counter()
        hits: Counter = Counter()
        for prev, items in by_prev.items():
            pred = predict_many(bank, prev, [d.trace for d in items], ratio)
            for d, p in zip(items, pred):
                tally[d.next_cell] += 1
                hits[d.next_cell] += int(p == d.next_cell)
        for lab in sorted(tally):
            report.add(float(ratio), int(lab), tally[lab], hits[lab])
    return report


# -- persistence -------------------------------------------------------------

def bank_to_dict(bank: ClassifierBank) -> dict:
    return {
        "format": BANK_FORMAT,
        "version": BANK_VERSION,
        "cell_id": bank.cell_id,
        "length": bank.length,
        "ratio": bank.ratio,
        "previous_cells": bank.previous_cells,
        "classifiers": {
            str(prev): {
                "scaler": e.scaler.to_dict() if e.scaler is not None else None,
                "model": e.model.to_dict(),
                "meta": e.meta,
            }
            for prev, e in sorted(bank.classifiers.items())
        },
    }


def bank_from_dict(d: dict) -> ClassifierBank:
    if not isinstance(d, dict) or d.get("format") != BANK_FORMAT:
        raise BankCorruptError("not a classifier-bank file")
    if d.get("version") != BANK_VERSION:
        raise BankVersionError(f"bank version {d.get('version')} unsupported "
                               f"(expected {BANK_VERSION})")
    try:
        classifiers = {}
        for prev, e in d["classifiers"].items():
            scaler = Scaler.from_dict(e["scaler"]) if e["scaler"] is not None else None
            model = svm.MultiClassModel.from_dict(e["model"])
            model.scaler = scaler
            meta = dict(e["meta"])
            if "label_counts" in meta:
                meta["label_counts"] = {int(k): v for k, v in meta["label_counts"].items()}
            classifiers[int(prev)] = ClassifierEntry(scaler, model, meta)
        if sorted(classifiers) != list(d["previous_cells"]):
            raise BankCorruptError("classifier table does not match header")
        return ClassifierBank(int(d["cell_id"]), int(d["length"]), classifiers, float(d["ratio"]))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, BankFileError):
            raise
        raise BankCorruptError(f"malformed bank: {exc}") from exc


def save_bank(bank: ClassifierBank, file) -> None:
    with open(file, "w") as fh:
        json.dump(bank_to_dict(bank), fh, indent=1)
        fh.write("\n")


def load_bank(file) -> ClassifierBank:
    try:
        with open(file) as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise BankCorruptError(f"corrupt bank file: {exc}") from exc
    return bank_from_dict(d)
