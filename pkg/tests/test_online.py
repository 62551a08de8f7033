import csv
import math

import numpy as np
import pytest

from nextcell import online as on
from nextcell import scenario as sc
from nextcell.dataset import ChannelConfig
from nextcell.online import OnlineConfig, OnlineLog, PredictionRecord


@pytest.fixture(scope="module")
def topo():
    return sc.build_manhattan(1)


@pytest.fixture(scope="module")
def short_log(topo):
    return on.run_online(topo, ChannelConfig(), OnlineConfig(horizon=400, seed=3))


def test_config_validation():
    for bad in (dict(rate=0), dict(prediction_ratio=0), dict(prediction_ratio=1.5),
                dict(retrain_every=0), dict(horizon=-1), dict(window=0), dict(min_labels=1)):
        with pytest.raises(on.OnlineConfigError):
            OnlineConfig(**bad)


def test_arrival_count_poisson(topo):
    log = on.run_online(topo, ChannelConfig(), OnlineConfig(horizon=3600, seed=0,
                                                             retrain_every=math.inf))
    users = {r.user for r in log.records}
    # arrivals whose prediction instant falls beyond the horizon are not logged
    assert len(users) == pytest.approx(3600, rel=0.05)


def test_no_learning_without_retraining(topo):
    log = on.run_online(topo, ChannelConfig(), OnlineConfig(horizon=300, seed=1,
                                                             retrain_every=math.inf))
    assert log.records and not log.retrains
    assert all(r.predicted is None and not r.correct for r in log.records)
    assert all(r.bank_version == -1 for r in log.records)


def test_empty_horizon(topo):
    log = on.run_online(topo, ChannelConfig(), OnlineConfig(horizon=0, seed=0))
    assert log.records == [] and log.retrains == []


def test_causality(short_log):
    log = short_log
    assert log.retrains
    retrain_times = [(r.t, r.version, r.previous_cell) for r in log.retrains]
    for r in log.records:
        assert r.t_in < r.t_p < r.t_out
        assert r.t_last_sample <= r.t_p + 1e-9
        assert r.n_used >= 2
        if r.bank_version > 0:
            # the version used was published before the prediction instant
            t_pub = next(t for t, v, _ in retrain_times if v == r.bank_version)
            assert t_pub <= r.t_p
            # and it is the latest one published by then
            assert r.bank_version == max(v for t, v, _ in retrain_times if t <= r.t_p)
    for rt in log.retrains:
        assert rt.latest_completion <= rt.t
    assert [rt.version for rt in log.retrains] == list(range(1, len(log.retrains) + 1))


def test_prediction_uses_only_reported_samples(short_log):
    for r in short_log.records:
        assert r.t_last_sample == pytest.approx(r.t_in + (r.n_used - 1) * 0.02)
        assert r.t_last_sample + 0.02 > r.t_p - 1e-9 or r.n_used == 2


def test_retrain_cadence(short_log):
    counts = {}
    for rt in short_log.retrains:
        counts.setdefault(rt.previous_cell, []).append(rt.n_train)
    for ns in counts.values():
        assert all(n % 10 == 0 for n in ns)


def test_reproducible(topo, short_log):
    again = on.run_online(topo, ChannelConfig(), OnlineConfig(horizon=400, seed=3))
    assert again.records == short_log.records
    assert again.retrains == short_log.retrains
    other = on.run_online(topo, ChannelConfig(), OnlineConfig(horizon=400, seed=4))
    assert other.records != short_log.records


def test_log_csv(tmp_path, short_log):
    short_log.to_csv(tmp_path / "log.csv")
    with open(tmp_path / "log.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == ["user", "t_in", "t_p", "t_out", "p", "n_hat", "n", "bank_version"]
    assert len(rows) == len(short_log.records)
    for row, r in zip(rows, short_log.records):
        assert float(row["t_p"]) == r.t_p
        assert (row["n_hat"] == "") == (r.predicted is None)


def _records(labels_correct, label=1):
    out = []
    for k, ok in enumerate(labels_correct):
        out.append(PredictionRecord(k, k, k + 0.5, k + 1, 2, label if ok else 4, label, 1, 0, 2, k))
    return out


def test_series_all_correct():
    log = OnlineLog(_records([True] * 10), labels=(1,))
    s = on.accuracy_series(log, 4)
    assert [a for _, a in s[1]] == [1.0] * 7


def test_series_alternating():
    log = OnlineLog(_records([True, False] * 10), labels=(1,))
    s = on.accuracy_series(log, 2)
    assert all(a == 0.5 for _, a in s[1])


def test_series_matches_brute_force(short_log):
    window = 7
    series = on.accuracy_series(short_log, window)
    for lab in short_log.labels:
        recs = sorted((r for r in short_log.records if r.true_next == lab),
                      key=lambda r: (r.t_p, r.user))
        expect = []
        for end in range(window, len(recs) + 1):
            chunk = recs[end - window:end]
            expect.append((chunk[-1].t_p, sum(r.correct for r in chunk) / window))
        assert len(series[lab]) == len(expect)
        for (t1, a1), (t2, a2) in zip(series[lab], expect):
            assert t1 == t2 and a1 == pytest.approx(a2, abs=1e-12)


def test_series_csv(tmp_path, short_log):
    series = on.accuracy_series(short_log, 5)
    on.write_series_csv(series, tmp_path / "s.csv")
    with open(tmp_path / "s.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["t", "acc_1", "acc_2", "acc_3", "acc_4"]
    assert len(rows) - 1 == sum(len(v) for v in series.values())


def test_learning_happens(topo):
    log = on.run_online(topo, ChannelConfig(), OnlineConfig(horizon=1200, seed=0))
    late = [r for r in log.records if r.t_p > 900]
    assert late and np.mean([r.correct for r in late]) > 0.7
