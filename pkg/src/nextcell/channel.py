"""Channel-gain traces: Jakes fast fading times position-dependent slow fading.

The reported gain is ``|h(t)|^2 * slow(x(t))`` where ``slow`` is either the
distance law ``d^-alpha(x)`` or a radio map.  ``h`` is a unit-power complex
Gaussian process whose autocorrelation is ``J0(2 pi f_d tau)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .scenario import CellTopology, RadioMap, Trajectory

SPEED_OF_LIGHT = 299_792_458.0
DEFAULT_CARRIER_HZ = 2e9
DEFAULT_OSCILLATORS = 128
D_MIN = 1.0


class ChannelError(ValueError):
    pass


def doppler_shift(speed: float, carrier_hz: float = DEFAULT_CARRIER_HZ) -> float:
    return speed * carrier_hz / SPEED_OF_LIGHT


class FadingProcess:
    """Sum-of-sinusoids Rayleigh fading with a Bessel autocorrelation.

    Oscillator ``n`` has Doppler frequency ``f_d cos((2 pi n + theta) / N)``
    and an independent uniform phase; ``theta`` is shared and uniform.
    Averaged over ``theta`` the arrival angles sweep the full circle, so the
    ensemble autocorrelation is exactly ``J0(2 pi f_d tau)``.

    A process built with ``unit=True`` always yields ``h = 1``.
    """

    def __init__(self, doppler_hz: float, sample_period: float, rng: np.random.Generator | None,
                 n_oscillators: int = DEFAULT_OSCILLATORS, unit: bool = False):
        if doppler_hz < 0:
            raise ChannelError("Doppler shift must be non-negative")
        if sample_period <= 0:
            raise ChannelError("sample_period must be positive")
        self.doppler_hz = float(doppler_hz)
        self.sample_period = float(sample_period)
        self.unit = unit
        self.n_oscillators = n_oscillators
        if unit:
            self._freqs = np.zeros(1)
            self._phases = np.zeros(1)
            return
        if rng is None:
            raise ChannelError("a random generator is required unless unit=True")
        if n_oscillators < 16:
            raise ChannelError("need at least 16 oscillators")
        theta = rng.uniform(-np.pi, np.pi)
        n = np.arange(1, n_oscillators + 1)
        self._freqs = self.doppler_hz * np.cos((2 * np.pi * n + theta) / n_oscillators)
        self._phases = rng.uniform(-np.pi, np.pi, n_oscillators)

    @classmethod
    def unity(cls, sample_period: float) -> FadingProcess:
        return cls(0.0, sample_period, None, unit=True)

    def envelope(self, n: int, start: int = 0) -> np.ndarray:
        """Complex envelope at sample indices ``start .. start+n-1``."""
        if self.unit:
            return np.ones(n, dtype=complex)
        t = self.sample_period * np.arange(start, start + n)
        arg = 2 * np.pi * np.outer(t, self._freqs) + self._phases
        return np.exp(1j * arg).sum(axis=1) / np.sqrt(self.n_oscillators)

    def power(self, n: int, start: int = 0) -> np.ndarray:
        return np.abs(self.envelope(n, start)) ** 2


def make_fading(speed: float, carrier_hz: float, sample_period: float,
                rng: np.random.Generator, n_oscillators: int = DEFAULT_OSCILLATORS) -> FadingProcess:
    if speed < 0:
        raise ChannelError("speed must be non-negative")
    if carrier_hz <= 0:
        raise ChannelError("carrier frequency must be positive")
    return FadingProcess(doppler_shift(speed, carrier_hz), sample_period, rng, n_oscillators)


def slow_fading_pathloss(position, bs_position, alpha_map, d_min: float = D_MIN):
    """``d^-alpha(position)`` with the distance clamped to ``d_min``.

    Accepts one point or an (n, 2) array.  Returns ``(gain, clamped)``.
    """
    pos = np.asarray(position, dtype=float)
    single = pos.ndim == 1
    pos = np.atleast_2d(pos)
    d = np.hypot(pos[:, 0] - bs_position[0], pos[:, 1] - bs_position[1])
    clamped = d < d_min
    d = np.maximum(d, d_min)
    alpha = alpha_map.values(pos) if hasattr(alpha_map, "values") else np.array(
        [alpha_map(p) for p in pos])
    gain = d ** -alpha
    if single:
        return float(gain[0]), bool(clamped[0])
    return gain, bool(clamped.any())


@dataclass(frozen=True)
class CsiTrace:
    gains: np.ndarray
    sample_period: float
    t_in: float = 0.0
    positions: np.ndarray | None = None
    clamped: bool = False

    def __post_init__(self):
        g = np.asarray(self.gains, dtype=float)
        if g.ndim != 1:
            raise ChannelError("gains must be one-dimensional")
        object.__setattr__(self, "gains", g)

    def __len__(self):
        return len(self.gains)

    @property
    def times(self) -> np.ndarray:
        return self.t_in + self.sample_period * np.arange(len(self.gains))

    def prefix(self, n: int) -> CsiTrace:
        pos = None if self.positions is None else self.positions[:n]
        return CsiTrace(self.gains[:n], self.sample_period, self.t_in, pos, self.clamped)


def slow_fading(trajectory: Trajectory, source) -> tuple[np.ndarray, bool]:
    """Slow-fading gains along a trajectory from a topology or a radio map."""
    if isinstance(source, RadioMap):
        return source.gain_at(trajectory.positions), False
    if isinstance(source, CellTopology):
        return slow_fading_pathloss(trajectory.positions, source.bs_position, source.alpha_map)
    raise TypeError(f"cannot derive slow fading from {type(source).__name__}")


def generate_trace(trajectory: Trajectory, source, fading: FadingProcess) -> CsiTrace:
    if not np.isclose(fading.sample_period, trajectory.sample_period):
        raise ChannelError("fading and trajectory sample periods differ")
    slow, clamped = slow_fading(trajectory, source)
    gains = fading.power(len(trajectory)) * slow
    # a deep fade can underflow to exactly zero, which has no dB value
    gains = np.maximum(gains, np.finfo(float).tiny)
    return CsiTrace(gains, trajectory.sample_period, trajectory.t_in,
                    trajectory.positions, clamped)


def dump_trace(trace: CsiTrace, file) -> None:
    """Write ``t, gain, x, y`` rows for inspection."""
    with open(file, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "gain", "x", "y"])
        pos = trace.positions if trace.positions is not None else np.full((len(trace), 2), np.nan)
        for t, g, (x, y) in zip(trace.times, trace.gains, pos):
            w.writerow([repr(float(t)), repr(float(g)), repr(float(x)), repr(float(y))])
