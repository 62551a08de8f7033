"""JSON configuration files for scenarios and experiments."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .channel import DEFAULT_OSCILLATORS
from .dataset import ChannelConfig
from .scenario import (
    DEFAULT_ALPHAS,
    FOCAL_CELL,
    MANHATTAN_NEIGHBORS,
    CellTopology,
    PathSpec,
    RadioMap,
    Rect,
    build_manhattan,
    build_radio_map_scenario,
    load_radio_map,
)

DEFAULT_RATIOS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0)


class ConfigError(ValueError):
    pass


@dataclass
class ScenarioConfig:
    """Where users walk and how their channel is simulated.

    ``kind`` is ``manhattan``, ``radio_map`` (map file plus explicit paths)
    or ``synthetic_radio_map`` (random paths over a generated map).
    """

    kind: str = "manhattan"
    size: float = 75.0
    bs_position: tuple[float, float] | None = None
    streets: tuple[float, float] | None = None
    alpha_quadrants: tuple[float, float, float, float] = DEFAULT_ALPHAS
    speed_range: tuple[float, float] = (5.0, 40.0)
    sample_period: float = 0.02
    carrier_hz: float = 2e9
    n_oscillators: int = DEFAULT_OSCILLATORS
    seed: int = 1
    radio_map: str | None = None
    neighbor_ids: tuple[int, ...] = MANHATTAN_NEIGHBORS
    paths: list[dict] = field(default_factory=list)
    n_paths: int = 26
    base_dir: str = "."

    def __post_init__(self):
        if self.kind not in ("manhattan", "radio_map", "synthetic_radio_map"):
            raise ConfigError(f"unknown scenario kind {self.kind!r}")
        lo, hi = self.speed_range
        if not 0 < lo <= hi:
            raise ConfigError(f"invalid speed range {self.speed_range}")
        if not self.sample_period > 0:
            raise ConfigError("sample_period must be positive")
        if not self.carrier_hz > 0:
            raise ConfigError("carrier_hz must be positive")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> ScenarioConfig:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        d = dict(d)
        for key in ("bs_position", "streets", "alpha_quadrants", "speed_range", "neighbor_ids"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        d.setdefault("base_dir", base_dir)
        return cls(**d)

    @classmethod
    def load(cls, file) -> ScenarioConfig:
        file = Path(file)
        try:
            d = json.loads(file.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{file}: {exc}") from exc
        return cls.from_dict(d.get("scenario", d), base_dir=str(file.parent))

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("base_dir")
        return d

    @property
    def channel(self) -> ChannelConfig:
        return ChannelConfig(tuple(self.speed_range), self.sample_period, self.carrier_hz,
                             self.n_oscillators)

    def build(self) -> tuple[CellTopology, RadioMap | None]:
        if self.kind == "manhattan":
            topo = build_manhattan(self.seed, self.size, self.alpha_quadrants, self.streets,
                                   self.bs_position)
            return topo, None
        if self.kind == "synthetic_radio_map":
            return build_radio_map_scenario(self.seed, self.size, self.n_paths)
        if not self.radio_map:
            raise ConfigError("radio_map scenario needs a 'radio_map' file")
        if not self.paths:
            raise ConfigError("radio_map scenario needs explicit 'paths'")
        bounds = Rect(0.0, 0.0, self.size, self.size)
        rmap = load_radio_map(Path(self.base_dir) / self.radio_map, bounds)
        paths = [PathSpec(int(p["path_id"]), tuple(map(tuple, p["waypoints"])),
                          int(p["entry"]), int(p["exit"])) for p in self.paths]
        bs = self.bs_position if self.bs_position is not None else bounds.center
        topo = CellTopology(rmap.cell_id if rmap.cell_id is not None else FOCAL_CELL, bounds,
                            tuple(bs), tuple(self.neighbor_ids), tuple(paths))
        return topo, rmap


@dataclass
class ExperimentConfig:
    scenario: ScenarioConfig = field(default_factory=ScenarioConfig)
    samples_per_path: int = 500
    split: tuple[float, float] = (0.9, 0.1)
    ratio_grid: tuple[float, ...] = DEFAULT_RATIOS
    seed: int = 0
    seeds: tuple[int, ...] = (0,)
    out: str = "out"
    mode: str = "offline"
    length: int = 100
    C_grid: tuple[float, ...] | None = None
    gamma_grid: tuple[float, ...] | None = None
    folds: int = 5
    cv_subset: float = 0.5
    C: float | None = None
    gamma: float | None = None
    history_length: int = 8
    baseline_C: float = 1.0
    baseline_gamma: float = 0.125
    baseline_samples: int | None = None
    online: dict = field(default_factory=dict)

    def __post_init__(self):
        if abs(sum(self.split) - 1.0) > 1e-9 or any(s <= 0 for s in self.split):
            raise ConfigError(f"split fractions {self.split} must be positive and sum to 1")
        if not self.ratio_grid or any(not 0 < r <= 1 for r in self.ratio_grid):
            raise ConfigError(f"ratio grid {self.ratio_grid} must lie in (0, 1]")
        if self.samples_per_path < 1:
            raise ConfigError("samples_per_path must be at least 1")
        if self.mode not in ("offline", "online", "baseline"):
            raise ConfigError(f"unknown mode {self.mode!r}")

    @classmethod
    def from_dict(cls, d: dict, base_dir: str = ".") -> ExperimentConfig:
        d = dict(d)
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown experiment keys: {sorted(unknown)}")
        scen = d.pop("scenario", {})
        if isinstance(scen, str):
            scenario = ScenarioConfig.load(Path(base_dir) / scen)
        else:
            scenario = ScenarioConfig.from_dict(scen, base_dir)
        for key in ("split", "ratio_grid", "seeds", "C_grid", "gamma_grid"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(scenario=scenario, **d)

    @classmethod
    def load(cls, file) -> ExperimentConfig:
        file = Path(file)
        try:
            d = json.loads(file.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{file}: {exc}") from exc
        return cls.from_dict(d, base_dir=str(file.parent))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["scenario"] = self.scenario.to_dict()
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=_jsonable)
        return hashlib.sha256(blob.encode()).hexdigest()


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(type(o).__name__)
