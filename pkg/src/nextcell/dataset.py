"""Labeled traversal datasets: generation, splitting and on-disk storage.

A dataset directory holds ``traversals.csv`` (one row per traversal) and
``gains.npy`` (all gain samples concatenated in row order).
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import DEFAULT_CARRIER_HZ, DEFAULT_OSCILLATORS, CsiTrace, generate_trace, make_fading
from .predictor import LabeledTraversal
from .scenario import CellTopology, RadioMap, sample_history, sample_trajectory

INDEX_FILE = "traversals.csv"
GAINS_FILE = "gains.npy"
INDEX_HEADER = ["index", "path_id", "previous_cell", "next_cell", "speed", "t_in",
                "sample_period", "offset", "n_samples"]


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class ChannelConfig:
    speed_range: tuple[float, float] = (5.0, 40.0)
    sample_period: float = 0.02
    carrier_hz: float = DEFAULT_CARRIER_HZ
    n_oscillators: int = DEFAULT_OSCILLATORS


def simulate_traversal(topology: CellTopology, path, speed: float, channel: ChannelConfig,
                       rng: np.random.Generator, slow_source=None,
                       t_in: float = 0.0) -> LabeledTraversal:
    traj = sample_trajectory(path, speed, channel.sample_period, t_in)
    fading = make_fading(speed, channel.carrier_hz, channel.sample_period, rng,
                         channel.n_oscillators)
    trace = generate_trace(traj, slow_source if slow_source is not None else topology, fading)
    return LabeledTraversal(path.entry_neighbor, path.exit_neighbor, trace, path.path_id, speed)


def generate_dataset(topology: CellTopology, samples_per_path: int, channel: ChannelConfig,
                     rng: np.random.Generator,
                     radio_map: RadioMap | None = None) -> list[LabeledTraversal]:
    """``samples_per_path`` traversals of every path with uniform random speeds."""
    if samples_per_path < 1:
        raise DatasetError("samples_per_path must be at least 1")
    v_min, v_max = channel.speed_range
    if not 0 < v_min <= v_max:
        raise DatasetError(f"invalid speed range {channel.speed_range}")
    out = []
    for path in topology.paths:
        for _ in range(samples_per_path):
            speed = float(rng.uniform(v_min, v_max))
            out.append(simulate_traversal(topology, path, speed, channel, rng, radio_map))
    return out


def split_dataset(data, test_fraction: float, rng: np.random.Generator):
    """Split stratified by (path, next cell); returns ``(train, test)``."""
    if not 0 < test_fraction < 1:
        raise DatasetError("test fraction must lie in (0, 1)")
    groups = defaultdict(list)
    for k, d in enumerate(data):
        groups[(d.path_id, d.next_cell)].append(k)
    test_idx = set()
    for key in sorted(groups):
        idx = np.array(groups[key])
        rng.shuffle(idx)
        test_idx.update(idx[:int(round(test_fraction * len(idx)))].tolist())
    train = [d for k, d in enumerate(data) if k not in test_idx]
    test = [d for k, d in enumerate(data) if k in test_idx]
    return train, test


def save_dataset(data, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    offset = 0
    with open(directory / INDEX_FILE, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(INDEX_HEADER)
        for k, d in enumerate(data):
            n = len(d.trace)
            w.writerow([k, d.path_id, d.previous_cell, d.next_cell, repr(float(d.speed)),
                        repr(float(d.trace.t_in)), repr(float(d.trace.sample_period)), offset, n])
            offset += n
    gains = np.concatenate([d.trace.gains for d in data]) if data else np.empty(0)
    np.save(directory / GAINS_FILE, gains, allow_pickle=False)


def load_dataset(directory) -> list[LabeledTraversal]:
    directory = Path(directory)
    index, gains_file = directory / INDEX_FILE, directory / GAINS_FILE
    if not index.exists() or not gains_file.exists():
        raise FileNotFoundError(f"no dataset in {directory}")
    gains = np.load(gains_file, allow_pickle=False)
    out = []
    with open(index, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != INDEX_HEADER:
            raise DatasetError(f"unexpected dataset header {reader.fieldnames}")
        for row in reader:
            off, n = int(row["offset"]), int(row["n_samples"])
            if off + n > len(gains):
                raise DatasetError("gain file shorter than index")
            trace = CsiTrace(gains[off:off + n], float(row["sample_period"]), float(row["t_in"]))
            out.append(LabeledTraversal(int(row["previous_cell"]), int(row["next_cell"]), trace,
                                        int(row["path_id"]), float(row["speed"])))
    return out


def generate_histories(topology: CellTopology, n: int, rng: np.random.Generator,
                       length: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """``n`` random-mobility handover histories as neighbor indices, plus labels.

    Labels are neighbor cell ids; history entries index ``topology.neighbor_ids``.
    """
    index = {c: k for k, c in enumerate(topology.neighbor_ids)}
    H = np.empty((n, length), dtype=int)
    y = np.empty(n, dtype=int)
    for k in range(n):
        hist, nxt = sample_history(topology, rng, length)
        H[k] = [index[c] for c in hist]
        y[k] = nxt
    return H, y
