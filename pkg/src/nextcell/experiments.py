"""Offline sweeps for the CSI predictor and the handover-history baseline."""

from __future__ import annotations

import logging

import numpy as np

from . import svm
from .features import FeatureError, encode_history
from .predictor import AccuracyReport, BankConfig, ClassifierBank, evaluate, train_bank

log = logging.getLogger(__name__)


def offline_sweep(train, test, ratios, config: BankConfig, cell_id: int = 0,
                  seed: int = 0) -> tuple[AccuracyReport, dict[float, ClassifierBank]]:
    """Train a bank at each ratio on ``train`` and evaluate it on ``test``."""
    report = AccuracyReport()
    banks = {}
    for k, ratio in enumerate(ratios):
        rng = np.random.default_rng([seed, k])
        bank = train_bank(train, ratio, config, cell_id, rng)
        rep = evaluate(bank, test, [ratio])
        log.info("ratio %.3f: overall accuracy %.4f", ratio, rep.overall(float(ratio)))
        report = report.merge(rep)
        banks[float(ratio)] = bank
    return report, banks


def history_features(H, k_used: int, neighbor_count: int, width: int) -> np.ndarray:
    return np.vstack([encode_history(h, k_used, neighbor_count, width) for h in H])


def baseline_sweep(H_train, y_train, H_test, y_test, neighbor_count: int, history_length: int = 8,
                   k_values=None, C: float = 1.0, gamma: float = 0.125,
                   tol: float = svm.DEFAULT_TOL) -> AccuracyReport:
    """SVM on one-hot handover histories; ratio = k_used / history_length."""
    k_values = range(2, history_length + 1) if k_values is None else k_values
    for k in k_values:
        if not 2 <= k <= history_length:
            raise FeatureError(f"history length {k} outside [2, {history_length}]")
    report = AccuracyReport()
    y_test = np.asarray(y_test)
    for k in k_values:
        Xtr = history_features(H_train, k, neighbor_count, history_length)
        Xte = history_features(H_test, k, neighbor_count, history_length)
        model = svm.train_multiclass(Xtr, y_train, C, svm.KernelParams("gaussian", gamma), tol)
        pred = model.predict(Xte)
        ratio = k / history_length
        for lab in np.unique(y_test):
            mask = y_test == lab
            report.add(float(ratio), int(lab), int(mask.sum()), int(np.sum(pred[mask] == lab)))
        log.info("history %d/%d: overall accuracy %.4f", k, history_length, report.overall(ratio))
    return report
