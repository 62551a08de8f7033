"""Cell topologies, path geometry and the random mobility process.

A cell is a rectangle with one base station and a finite set of paths.  Every
path enters from one neighbor cell and leaves towards another, so the pair
(entry neighbor, exit neighbor) is the (previous cell, next cell) of a user who
follows it.  Users pick a path and a speed uniformly at random on entry.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ALPHA_MIN, ALPHA_MAX = 1.5, 6.0
# path-loss exponents of the SW, SE, NE and NW quadrants
DEFAULT_ALPHAS = (2.0, 3.0, 4.0, 5.0)

# cell ids of the Manhattan focal cell and its neighbors, in one-hot order
FOCAL_CELL = 0
NORTH, EAST, SOUTH, WEST = 1, 2, 3, 4
MANHATTAN_NEIGHBORS = (NORTH, EAST, SOUTH, WEST)

RADIO_MAP_HEADER = ["cell_id", "origin_x", "origin_y", "cell_size", "rows", "cols"]


class ScenarioError(ValueError):
    pass


class RadioMapError(ValueError):
    """Base class for radio-map loading problems."""


class RadioMapFormatError(RadioMapError):
    pass


class RadioMapValueError(RadioMapError):
    pass


class RadioMapBoundsError(RadioMapError):
    pass


@dataclass(frozen=True)
class Rect:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))

    def contains(self, p, eps: float = 1e-9) -> bool:
        x, y = p
        return (self.x_min - eps <= x <= self.x_max + eps
                and self.y_min - eps <= y <= self.y_max + eps)

    def on_boundary(self, p, eps: float = 1e-9) -> bool:
        if not self.contains(p, eps):
            return False
        x, y = p
        return (abs(x - self.x_min) <= eps or abs(x - self.x_max) <= eps
                or abs(y - self.y_min) <= eps or abs(y - self.y_max) <= eps)

    def side_of(self, p, eps: float = 1e-9) -> str | None:
        """Boundary side ('N', 'E', 'S', 'W') a point lies on, if any."""
        x, y = p
        if abs(y - self.y_max) <= eps:
            return "N"
        if abs(x - self.x_max) <= eps:
            return "E"
        if abs(y - self.y_min) <= eps:
            return "S"
        if abs(x - self.x_min) <= eps:
            return "W"
        return None


@dataclass(frozen=True)
class PathSpec:
    path_id: int
    waypoints: tuple[tuple[float, float], ...]
    entry_neighbor: int
    exit_neighbor: int

    def __post_init__(self):
        pts = tuple((float(x), float(y)) for x, y in self.waypoints)
        object.__setattr__(self, "waypoints", pts)
        if len(pts) < 2:
            raise ScenarioError(f"path {self.path_id}: need at least 2 waypoints")
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise ScenarioError(f"path {self.path_id}: repeated waypoint {a}")

    @property
    def segment_lengths(self) -> np.ndarray:
        pts = np.asarray(self.waypoints)
        return np.hypot(*np.diff(pts, axis=0).T)

    @property
    def length(self) -> float:
        return float(self.segment_lengths.sum())

    def point_at(self, s) -> np.ndarray:
        """Positions at arc lengths ``s`` (clipped to [0, length])."""
        pts = np.asarray(self.waypoints)
        cum = np.concatenate([[0.0], np.cumsum(self.segment_lengths)])
        s = np.clip(np.atleast_1d(np.asarray(s, dtype=float)), 0.0, cum[-1])
        return np.column_stack([np.interp(s, cum, pts[:, 0]),
                                np.interp(s, cum, pts[:, 1])])


class AlphaMap:
    """Piecewise-constant path-loss exponent over axis-aligned rectangles.

    Regions are checked in order; the first one containing the point wins.
    ``default`` covers everything else, which keeps the map total.
    """

    def __init__(self, regions: Sequence[tuple[Rect, float]] = (), default: float = 2.0):
        for _, a in regions:
            _check_alpha(a)
        _check_alpha(default)
        self.regions = tuple(regions)
        self.default = float(default)

    def __call__(self, p) -> float:
        x, y = p
        for rect, a in self.regions:
            if rect.x_min <= x < rect.x_max and rect.y_min <= y < rect.y_max:
                return a
        return self.default

    def values(self, positions: np.ndarray) -> np.ndarray:
        positions = np.atleast_2d(positions)
        out = np.full(len(positions), self.default)
        assigned = np.zeros(len(positions), dtype=bool)
        x, y = positions[:, 0], positions[:, 1]
        for rect, a in self.regions:
            hit = (~assigned & (x >= rect.x_min) & (x < rect.x_max)
                   & (y >= rect.y_min) & (y < rect.y_max))
            out[hit] = a
            assigned |= hit
        return out

    @classmethod
    def quadrants(cls, bounds: Rect, values=DEFAULT_ALPHAS) -> AlphaMap:
        """Split ``bounds`` into SW, SE, NE, NW quadrants (in that order).

        The closed upper/right edges of the cell fall into the default region,
        so the default is set to the NE value to keep quadrants whole.
        """
        cx, cy = bounds.center
        big = 1e9
        sw = Rect(-big, -big, cx, cy)
        se = Rect(cx, -big, big, cy)
        ne = Rect(cx, cy, big, big)
        nw = Rect(-big, cy, cx, big)
        return cls(list(zip([sw, se, ne, nw], values)), default=values[2])


def _check_alpha(a):
    if not (ALPHA_MIN <= a <= ALPHA_MAX) or not math.isfinite(a):
        raise ScenarioError(f"path-loss exponent {a} outside [{ALPHA_MIN}, {ALPHA_MAX}]")


@dataclass(frozen=True)
class CellTopology:
    cell_id: int
    bounds: Rect
    bs_position: tuple[float, float]
    neighbor_ids: tuple[int, ...]
    paths: tuple[PathSpec, ...]
    alpha_map: AlphaMap = field(default_factory=AlphaMap)

    def __post_init__(self):
        object.__setattr__(self, "neighbor_ids", tuple(self.neighbor_ids))
        object.__setattr__(self, "paths", tuple(self.paths))
        for p in self.paths:
            for end in (p.waypoints[0], p.waypoints[-1]):
                if not self.bounds.on_boundary(end):
                    raise ScenarioError(f"path {p.path_id}: endpoint {end} not on cell boundary")
            for nb in (p.entry_neighbor, p.exit_neighbor):
                if nb not in self.neighbor_ids:
                    raise ScenarioError(f"path {p.path_id}: {nb} is not a neighbor")

    def path(self, path_id: int) -> PathSpec:
        for p in self.paths:
            if p.path_id == path_id:
                return p
        raise KeyError(path_id)

    @property
    def labels(self) -> list[int]:
        return sorted({p.exit_neighbor for p in self.paths})


@dataclass(frozen=True)
class Trajectory:
    path_id: int
    speed: float
    sample_period: float
    positions: np.ndarray
    t_in: float
    t_out: float
    entry_neighbor: int = -1
    exit_neighbor: int = -1

    @property
    def times(self) -> np.ndarray:
        return self.t_in + self.sample_period * np.arange(len(self.positions))

    def __len__(self):
        return len(self.positions)


def manhattan_streets(size: float = 75.0) -> tuple[float, float]:
    return (size / 3.0, 2.0 * size / 3.0)


def build_manhattan(seed: int = 0, size: float = 75.0,
                    alphas=DEFAULT_ALPHAS, streets=None,
                    bs_position=None) -> CellTopology:
    """The Manhattan-grid focal cell with 16 paths.

    Two horizontal and two vertical streets cross the cell.  Each street is
    driven straight through in both directions (8 paths).  A user entering
    on either street may also turn at the first intersection, towards the
    nearer cell edge (8 paths).  Every neighbor is the exit of exactly four
    paths and the entry of exactly four.

    The geometry is fixed; ``seed`` is accepted for interface symmetry with
    randomised scenarios and does not change the result.
    """
    del seed
    lo, hi = streets if streets is not None else manhattan_streets(size)
    if not 0 < lo < hi < size:
        raise ScenarioError(f"streets {lo}, {hi} must lie strictly inside the cell")
    s = size
    specs = [
        # straight through, west <-> east
        ([(0, lo), (s, lo)], WEST, EAST),
        ([(0, hi), (s, hi)], WEST, EAST),
        ([(s, lo), (0, lo)], EAST, WEST),
        ([(s, hi), (0, hi)], EAST, WEST),
        # straight through, south <-> north
        ([(lo, 0), (lo, s)], SOUTH, NORTH),
        ([(hi, 0), (hi, s)], SOUTH, NORTH),
        ([(lo, s), (lo, 0)], NORTH, SOUTH),
        ([(hi, s), (hi, 0)], NORTH, SOUTH),
        # turns at the first intersection
        ([(0, lo), (lo, lo), (lo, 0)], WEST, SOUTH),
        ([(0, hi), (lo, hi), (lo, s)], WEST, NORTH),
        ([(s, lo), (hi, lo), (hi, 0)], EAST, SOUTH),
        ([(s, hi), (hi, hi), (hi, s)], EAST, NORTH),
        ([(lo, 0), (lo, lo), (0, lo)], SOUTH, WEST),
        ([(hi, 0), (hi, lo), (s, lo)], SOUTH, EAST),
        ([(lo, s), (lo, hi), (0, hi)], NORTH, WEST),
        ([(hi, s), (hi, hi), (s, hi)], NORTH, EAST),
    ]
    bounds = Rect(0.0, 0.0, s, s)
    paths = [PathSpec(i, tuple(wp), a, b) for i, (wp, a, b) in enumerate(specs)]
    return CellTopology(
        cell_id=FOCAL_CELL,
        bounds=bounds,
        bs_position=tuple(bs_position) if bs_position is not None else bounds.center,
        neighbor_ids=MANHATTAN_NEIGHBORS,
        paths=tuple(paths),
        alpha_map=AlphaMap.quadrants(bounds, alphas),
    )


def sample_trajectory(path: PathSpec, speed: float, sample_period: float,
                      t_in: float = 0.0) -> Trajectory:
    """Deterministic arc-length stepping along ``path`` at constant speed.

    Samples fall on the ``sample_period`` grid from ``t_in``; the last one is
    the first grid instant at or after the exit and is placed on the exit point.
    """
    if speed <= 0:
        raise ScenarioError("speed must be positive")
    if sample_period <= 0:
        raise ScenarioError("sample_period must be positive")
    length = path.length
    step = speed * sample_period
    n = int(math.ceil(length / step - 1e-9)) + 1
    positions = path.point_at(np.minimum(step * np.arange(n), length))
    return Trajectory(
        path_id=path.path_id,
        speed=float(speed),
        sample_period=float(sample_period),
        positions=positions,
        t_in=float(t_in),
        t_out=float(t_in) + length / speed,
        entry_neighbor=path.entry_neighbor,
        exit_neighbor=path.exit_neighbor,
    )


def sample_traversal(topology: CellTopology, rng: np.random.Generator,
                     speed_range=(5.0, 40.0), sample_period: float = 0.02,
                     t_in: float = 0.0) -> Trajectory:
    """Draw a path uniformly from ``topology.paths`` and a uniform speed."""
    v_min, v_max = speed_range
    if not 0 < v_min <= v_max:
        raise ScenarioError(f"invalid speed range {speed_range}")
    if sample_period <= 0:
        raise ScenarioError("sample_period must be positive")
    if not topology.paths:
        raise ScenarioError("topology has no paths")
    path = topology.paths[rng.integers(len(topology.paths))]
    speed = rng.uniform(v_min, v_max)
    return sample_trajectory(path, speed, sample_period, t_in)


def sample_history(topology: CellTopology, rng: np.random.Generator,
                   length: int = 8) -> tuple[list[int], int]:
    """Handover history of a user under the random mobility model.

    Each handover is the exit of an independently, uniformly chosen path.
    Returns the last ``length`` handover targets (oldest first) and the
    target of the following handover, which is the label to predict.
    """
    if not topology.paths:
        raise ScenarioError("topology has no paths")
    picks = rng.integers(len(topology.paths), size=length + 1)
    exits = [topology.paths[k].exit_neighbor for k in picks]
    return exits[:-1], exits[-1]


# -- radio maps ------------------------------------------------------------

@dataclass(frozen=True)
class RadioMap:
    """Average channel gain (linear) on a regular grid of nodes.

    Node (r, c) sits at ``(origin_x + c * cell_size, origin_y + r * cell_size)``.
    """

    cell_id: int
    origin: tuple[float, float]
    cell_size: float
    gains: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        if g.ndim != 2 or g.shape[0] < 2 or g.shape[1] < 2:
            raise RadioMapFormatError(f"radio map needs at least 2x2 nodes, got {g.shape}")
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise RadioMapValueError("radio-map gains must be finite and positive")
        if not self.cell_size > 0:
            raise RadioMapFormatError("cell_size must be positive")
        g.setflags(write=False)
        object.__setattr__(self, "gains", g)

    @property
    def rows(self) -> int:
        return self.gains.shape[0]

    @property
    def cols(self) -> int:
        return self.gains.shape[1]

    @property
    def extent(self) -> Rect:
        x0, y0 = self.origin
        return Rect(x0, y0, x0 + (self.cols - 1) * self.cell_size,
                    y0 + (self.rows - 1) * self.cell_size)

    def covers(self, bounds: Rect, eps: float = 1e-9) -> bool:
        e = self.extent
        return (e.x_min <= bounds.x_min + eps and e.y_min <= bounds.y_min + eps
                and e.x_max >= bounds.x_max - eps and e.y_max >= bounds.y_max - eps)

    def gain_at(self, positions) -> np.ndarray:
        """Bilinear interpolation of the gain at each position."""
        pos = np.atleast_2d(np.asarray(positions, dtype=float))
        if not all(self.extent.contains(p) for p in pos):
            raise RadioMapBoundsError("position outside the radio map")
        fx = (pos[:, 0] - self.origin[0]) / self.cell_size
        fy = (pos[:, 1] - self.origin[1]) / self.cell_size
        c0 = np.clip(np.floor(fx).astype(int), 0, self.cols - 2)
        r0 = np.clip(np.floor(fy).astype(int), 0, self.rows - 2)
        tx = np.clip(fx - c0, 0.0, 1.0)
        ty = np.clip(fy - r0, 0.0, 1.0)
        g = self.gains
        return ((1 - tx) * (1 - ty) * g[r0, c0] + tx * (1 - ty) * g[r0, c0 + 1]
                + (1 - tx) * ty * g[r0 + 1, c0] + tx * ty * g[r0 + 1, c0 + 1])


def load_radio_map(file, bounds: Rect | None = None) -> RadioMap:
    """Read a radio map CSV.

    Layout: the header line ``cell_id,origin_x,origin_y,cell_size,rows,cols``,
    one line with those values, then ``rows`` lines of ``cols`` gains each.
    If ``bounds`` is given the grid must cover it.
    """
    try:
        with open(file, newline="") as fh:
            lines = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    except OSError:
        raise
    except (UnicodeDecodeError, csv.Error) as exc:
        raise RadioMapFormatError(f"unreadable radio map: {exc}") from exc
    if len(lines) < 2 or [c.strip() for c in lines[0]] != RADIO_MAP_HEADER:
        raise RadioMapFormatError(f"expected header {','.join(RADIO_MAP_HEADER)}")
    try:
        meta = [float(c) for c in lines[1]]
        cell_id, ox, oy, size, rows, cols = meta
        if rows != int(rows) or cols != int(cols):
            raise ValueError("non-integer grid shape")
        rows, cols = int(rows), int(cols)
        values = [[float(c) for c in row] for row in lines[2:]]
    except ValueError as exc:
        raise RadioMapFormatError(f"malformed radio map: {exc}") from exc
    if rows < 2 or cols < 2:
        raise RadioMapFormatError(f"grid {rows}x{cols} cannot be interpolated")
    if len(values) != rows or any(len(r) != cols for r in values):
        raise RadioMapBoundsError(f"gain block does not match declared {rows}x{cols} grid")
    gains = np.array(values)
    if not np.all(np.isfinite(gains)) or np.any(gains <= 0):
        raise RadioMapValueError("radio-map gains must be finite and positive")
    rmap = RadioMap(int(cell_id), (ox, oy), size, gains)
    if bounds is not None and not rmap.covers(bounds):
        raise RadioMapBoundsError(f"radio map {rmap.extent} does not cover {bounds}")
    return rmap


def save_radio_map(rmap: RadioMap, file) -> None:
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(RADIO_MAP_HEADER)
        w.writerow([rmap.cell_id, repr(rmap.origin[0]), repr(rmap.origin[1]),
                    repr(rmap.cell_size), rmap.rows, rmap.cols])
        for row in rmap.gains:
            w.writerow([repr(float(v)) for v in row])


def synthetic_radio_map(bounds: Rect, bs_position, rng: np.random.Generator,
                        cell_id: int = 0, resolution: float = 2.0,
                        alpha: float = 3.0, shadow_db: float = 8.0,
                        corr_length: float = 15.0) -> RadioMap:
    """Distance path loss times spatially correlated log-normal shadowing.

    Used as a stand-in for a measured map.
    """
    from scipy.ndimage import gaussian_filter

    cols = int(math.ceil(bounds.width / resolution)) + 1
    rows = int(math.ceil(bounds.height / resolution)) + 1
    xs = bounds.x_min + resolution * np.arange(cols)
    ys = bounds.y_min + resolution * np.arange(rows)
    gx, gy = np.meshgrid(xs, ys)
    d = np.maximum(np.hypot(gx - bs_position[0], gy - bs_position[1]), 1.0)
    noise = gaussian_filter(rng.standard_normal((rows, cols)), corr_length / resolution,
                            mode="reflect")
    noise *= shadow_db / noise.std()
    gain_db = -10.0 * alpha * np.log10(d) + noise
    return RadioMap(cell_id, (bounds.x_min, bounds.y_min), resolution, 10.0 ** (gain_db / 10.0))


_SIDES = ("N", "E", "S", "W")


def _point_on_side(bounds: Rect, side: str, u: float) -> tuple[float, float]:
    if side == "N":
        return (bounds.x_min + u * bounds.width, bounds.y_max)
    if side == "S":
        return (bounds.x_min + u * bounds.width, bounds.y_min)
    if side == "E":
        return (bounds.x_max, bounds.y_min + u * bounds.height)
    return (bounds.x_min, bounds.y_min + u * bounds.height)


def random_path_set(bounds: Rect, neighbor_ids: Sequence[int], n_paths: int,
                    rng: np.random.Generator, n_inner: int = 2) -> list[PathSpec]:
    """Random polylines between distinct cell sides.

    ``neighbor_ids`` lists the neighbors behind the N, E, S and W sides.
    Each path has ``n_inner`` interior waypoints drawn uniformly in the
    central 80% of the cell.  Exit sides cycle so labels stay balanced.
    """
    if len(neighbor_ids) != 4:
        raise ScenarioError("need one neighbor per side (N, E, S, W)")
    paths = []
    for k in range(n_paths):
        exit_side = k % 4
        entry_side = (exit_side + 1 + rng.integers(3)) % 4
        start = _point_on_side(bounds, _SIDES[entry_side], rng.uniform(0.1, 0.9))
        end = _point_on_side(bounds, _SIDES[exit_side], rng.uniform(0.1, 0.9))
        inner = [(bounds.x_min + bounds.width * rng.uniform(0.1, 0.9),
                  bounds.y_min + bounds.height * rng.uniform(0.1, 0.9))
                 for _ in range(n_inner)]
        paths.append(PathSpec(k, (start, *inner, end), neighbor_ids[entry_side],
                              neighbor_ids[exit_side]))
    return paths


def build_radio_map_scenario(seed: int = 0, size: float = 200.0, n_paths: int = 26,
                             resolution: float = 2.0) -> tuple[CellTopology, RadioMap]:
    """A square cell with random paths over a synthetic shadowing map."""
    rng = np.random.default_rng(seed)
    bounds = Rect(0.0, 0.0, size, size)
    bs = (float(rng.uniform(0.3, 0.7) * size), float(rng.uniform(0.3, 0.7) * size))
    topo = CellTopology(
        cell_id=FOCAL_CELL,
        bounds=bounds,
        bs_position=bs,
        neighbor_ids=MANHATTAN_NEIGHBORS,
        paths=tuple(random_path_set(bounds, MANHATTAN_NEIGHBORS, n_paths, rng)),
    )
    rmap = synthetic_radio_map(bounds, bs, rng, cell_id=FOCAL_CELL, resolution=resolution)
    return topo, rmap

