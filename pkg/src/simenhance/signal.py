"""Telemetry synthesis, the coarse simulator and classical signal processing.

Everything here is a pure function of its inputs. ``TimeSeries`` values are
stored in a read-only float64 array so a series can be shared freely.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError

NS_PER_S = 1_000_000_000


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Uniformly sampled scalar signal.

    Sample ``i`` is taken at ``start_time + i * sample_interval`` (seconds since
    the UTC epoch). Exact timestamps are kept as integer nanoseconds in
    ``start_ns`` / ``interval_ns``; pass those instead of relying on the float
    seconds when nanosecond exactness matters (see :meth:`from_ns`).
    """

    start_time: float
    sample_interval: float
    values: np.ndarray
    start_ns: int | None = None
    interval_ns: int | None = None

    def __post_init__(self):
        if self.interval_ns is None:
            if not self.sample_interval > 0:
                raise ValidationError(f"sample_interval must be > 0, got {self.sample_interval}")
            object.__setattr__(self, "interval_ns", int(round(self.sample_interval * NS_PER_S)))
        if self.interval_ns <= 0:
            raise ValidationError(f"sample interval must be > 0, got {self.interval_ns} ns")
        if self.start_ns is None:
            object.__setattr__(self, "start_ns", int(round(self.start_time * NS_PER_S)))
        object.__setattr__(self, "start_ns", int(self.start_ns))
        object.__setattr__(self, "interval_ns", int(self.interval_ns))
        vals = np.array(self.values, dtype=np.float64).reshape(-1)
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_ns(cls, start_ns: int, interval_ns: int, values) -> "TimeSeries":
        return cls(start_ns / NS_PER_S, interval_ns / NS_PER_S, values, int(start_ns), int(interval_ns))

    def __len__(self) -> int:
        return self.values.shape[0]

    def timestamps_ns(self) -> np.ndarray:
        return self.start_ns + self.interval_ns * np.arange(len(self), dtype=np.int64)

    def timestamps(self) -> np.ndarray:
        return self.start_time + self.sample_interval * np.arange(len(self))

    def with_values(self, values) -> "TimeSeries":
        return TimeSeries(self.start_time, self.sample_interval, values, self.start_ns, self.interval_ns)

    def slice(self, offset: int, length: int) -> "TimeSeries":
        return TimeSeries.from_ns(
            self.start_ns + offset * self.interval_ns,
            self.interval_ns,
            self.values[offset:offset + length],
        )

    def equals(self, other: "TimeSeries", atol: float = 0.0) -> bool:
        return (
            len(self) == len(other)
            and self.start_ns == other.start_ns
            and self.interval_ns == other.interval_ns
            and bool(np.all(np.abs(self.values - other.values) <= atol))
        )


@dataclass(frozen=True)
class SineComponent:
    period: float
    amplitude: float = 1.0
    phase: float = 0.0


@dataclass(frozen=True)
class SignalSpec:
    components: tuple[SineComponent, ...]
    offset: float = 0.0
    sample_interval: float = 1.0
    num_samples: int = 2000
    start_time: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "components", tuple(self.components))
        self.validate()

    def validate(self) -> None:
        for c in self.components:
            if not c.period > 0:
                raise ValidationError(f"component period must be > 0, got {c.period}")
        if not self.sample_interval > 0:
            raise ValidationError(f"sample_interval must be > 0, got {self.sample_interval}")
        if int(self.num_samples) != self.num_samples or self.num_samples < 1:
            raise ValidationError(f"num_samples must be a positive integer, got {self.num_samples}")


@dataclass(frozen=True)
class QuantizerSpec:
    levels: int
    min_value: float
    max_value: float

    def __post_init__(self):
        if int(self.levels) != self.levels or self.levels < 2:
            raise ValidationError(f"levels must be an integer >= 2, got {self.levels}")
        if not self.max_value > self.min_value:
            raise ValidationError("max_value must exceed min_value")

    def alphabet(self) -> np.ndarray:
        return np.linspace(self.min_value, self.max_value, int(self.levels))

    @classmethod
    def spanning(cls, series: TimeSeries, levels: int = 8) -> "QuantizerSpec":
        """Quantizer whose levels cover the range of ``series``."""
        lo, hi = float(series.values.min()), float(series.values.max())
        if hi <= lo:
            hi = lo + 1.0
        return cls(levels, lo, hi)


@dataclass(frozen=True)
class NormParams:
    src_min: float
    src_max: float
    lo: float
    hi: float
    degenerate: bool = False

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if self.degenerate:
            return np.full_like(x, 0.5 * (self.lo + self.hi))
        scale = (self.hi - self.lo) / (self.src_max - self.src_min)
        return self.lo + (x - self.src_min) * scale

    def invert(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=np.float64)
        if self.degenerate:
            return np.full_like(y, self.src_min)
        scale = (self.src_max - self.src_min) / (self.hi - self.lo)
        return self.src_min + (y - self.lo) * scale


def synthesize(spec: SignalSpec) -> TimeSeries:
    spec.validate()
    t = np.arange(spec.num_samples) * spec.sample_interval
    values = np.full(spec.num_samples, float(spec.offset))
    for c in spec.components:
        values += c.amplitude * np.sin(2.0 * math.pi * t / c.period + c.phase)
    return TimeSeries(spec.start_time, spec.sample_interval, values)


def quantize(series: TimeSeries, q: QuantizerSpec) -> TimeSeries:
    """Snap every sample to the nearest quantizer level.

    Samples outside ``[min_value, max_value]`` clamp to the end levels. An exact
    tie goes to the level with the larger magnitude (the upper one if both are
    equally large).
    """
    levels = q.alphabet()
    step = (q.max_value - q.min_value) / (q.levels - 1)
    pos = (series.values - q.min_value) / step
    lower = np.clip(np.floor(pos), 0, q.levels - 1).astype(np.int64)
    upper = np.minimum(lower + 1, q.levels - 1)
    d_lower = np.abs(series.values - levels[lower])
    d_upper = np.abs(levels[upper] - series.values)
    tie_up = np.abs(levels[upper]) >= np.abs(levels[lower])
    pick_upper = (d_upper < d_lower) | ((d_upper == d_lower) & tie_up)
    idx = np.where(pick_upper, upper, lower)
    return series.with_values(levels[idx])


def _check_window(n: int, window: int) -> None:
    if int(window) != window or window < 1 or window % 2 == 0:
        raise ValidationError(f"window must be an odd positive integer, got {window}")
    if window > n:
        raise ValidationError(f"window {window} exceeds series length {n}")


def moving_average(series: TimeSeries, window: int = 11) -> TimeSeries:
    """Centered moving average.

    Near the ends the window is cut to the samples that exist, so sample ``i``
    averages ``x[max(0, i-h) : min(n, i+h+1)]`` with ``h = window // 2``.
    """
    x = series.values
    _check_window(len(x), window)
    kernel = np.ones(window)
    sums = np.convolve(x, kernel, mode="same")
    counts = np.convolve(np.ones_like(x), kernel, mode="same")
    return series.with_values(sums / counts)


def extract_noise(series: TimeSeries, window: int = 11) -> tuple[TimeSeries, TimeSeries]:
    """Split ``series`` into a moving-average trend and the residual noise."""
    trend = moving_average(series, window)
    noise = series.with_values(series.values - trend.values)
    return trend, noise


def random_offset(length: int, window_len: int, rng: np.random.Generator) -> int:
    if int(window_len) != window_len or window_len < 1:
        raise ValidationError(f"window_len must be a positive integer, got {window_len}")
    if window_len > length:
        raise ValidationError(f"window_len {window_len} exceeds series length {length}")
    return int(rng.integers(0, length - window_len + 1))


def window_random_offset(series: TimeSeries, window_len: int, rng_seed: int) -> np.ndarray:
    rng = np.random.default_rng(rng_seed)
    off = random_offset(len(series), window_len, rng)
    return series.values[off:off + window_len].copy()


def normalize(series: TimeSeries, lo: float = -1.0, hi: float = 1.0) -> tuple[TimeSeries, NormParams]:
    params = fit_norm(series.values, lo, hi)
    return series.with_values(params.apply(series.values)), params


def fit_norm(values: Sequence[float] | np.ndarray, lo: float = -1.0, hi: float = 1.0) -> NormParams:
    if not hi > lo:
        raise ValidationError(f"hi must exceed lo, got [{lo}, {hi}]")
    v = np.asarray(values, dtype=np.float64)
    mn, mx = float(v.min()), float(v.max())
    return NormParams(mn, mx, float(lo), float(hi), degenerate=(mx == mn))


def denormalize(series: TimeSeries, params: NormParams) -> TimeSeries:
    return series.with_values(params.invert(series.values))


def add_gaussian_noise(series: TimeSeries, sigma: float, seed: int) -> TimeSeries:
    """Stand-in for real telemetry: the clean signal plus seeded white noise."""
    if sigma < 0:
        raise ValidationError("sigma must be >= 0")
    rng = np.random.default_rng(seed)
    return series.with_values(series.values + rng.normal(0.0, sigma, len(series)) if sigma > 0 else series.values)
