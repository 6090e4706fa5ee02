"""External load metrics over a subset of a player's frames.

Every function takes a per-frame boolean mask (``None`` selects the whole
track) and maps it onto kinematic samples using the alignment documented in
:mod:`offscreen.kinematics`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .exceptions import ValidationError
from .kinematics import KinematicSeries
from .tracking import FRAME_DT

PEAK_WINDOWS = (1, 3, 5, 10)


@dataclass(frozen=True)
class Band:
    """Half-open interval ``[lo, hi)``; ``hi`` may be infinite."""

    lo: float
    hi: float
    kind: str = "velocity"

    def __post_init__(self):
        if self.kind not in ("velocity", "acceleration"):
            raise ValidationError(f"unknown band kind {self.kind!r}")
        if not (self.lo >= 0 and self.lo < self.hi):
            raise ValidationError(f"invalid band [{self.lo}, {self.hi})")

    def contains(self, values):
        values = np.asarray(values)
        return (values >= self.lo) & (values < self.hi)

    @property
    def label(self):
        hi = "inf" if math.isinf(self.hi) else f"{self.hi:g}"
        return f"[{self.lo:g}, {hi})"


def bands_from_edges(edges, kind):
    """``[0, 3.5, 5.7]`` -> bands [0,3.5), [3.5,5.7), [5.7,inf)."""
    edges = [float(e) for e in edges]
    his = edges[1:] + [math.inf]
    return tuple(Band(lo, hi, kind) for lo, hi in zip(edges, his))


VELOCITY_EDGES = (0.0, 3.5, 5.7)
ACCELERATION_EDGES = (0.65, 1.46, 2.77)
VELOCITY_BANDS = bands_from_edges(VELOCITY_EDGES, "velocity")
ACCELERATION_BANDS = bands_from_edges(ACCELERATION_EDGES, "acceleration")

TARGET_METRICS = (
    "total_distance",
    "high_speed_distance",
    "very_high_speed_distance",
    "time_vband1",
    "time_vband2",
    "time_vband3",
    "total_acceleration",
    "acceleration_density",
    "time_aband1",
    "time_aband2",
    "time_aband3",
)

METRIC_LABELS = {
    "total_distance": "total distance (m)",
    "high_speed_distance": "high speed distance (m)",
    "very_high_speed_distance": "very high speed distance (m)",
    "time_vband1": "time in velocity band 1 (s)",
    "time_vband2": "time in velocity band 2 (s)",
    "time_vband3": "time in velocity band 3 (s)",
    "total_acceleration": "total acceleration (m/s^2)",
    "acceleration_density": "acceleration density (m/s^2)",
    "time_aband1": "time in acceleration band 1 (s)",
    "time_aband2": "time in acceleration band 2 (s)",
    "time_aband3": "time in acceleration band 3 (s)",
}

# metrics aggregated by time-weighted mean rather than by summation
MEAN_METRICS = ("acceleration_density",)


def _speed_sel(kin, mask):
    if mask is None:
        return np.ones(len(kin.speed), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if len(mask) != kin.n_frames:
        raise ValidationError(f"mask of length {len(mask)} for {kin.n_frames} frames")
    return mask[1:]


def _accel_sel(kin, mask):
    if mask is None:
        return np.ones(len(kin.accel), dtype=bool)
    mask = np.asarray(mask, dtype=bool)
    if len(mask) != kin.n_frames:
        raise ValidationError(f"mask of length {len(mask)} for {kin.n_frames} frames")
    return mask[1:-1]


def total_distance(kin: KinematicSeries, mask=None) -> float:
    return float(np.sum(kin.step[_speed_sel(kin, mask)]))


def band_distance(kin: KinematicSeries, band: Band, mask=None) -> float:
    if band.kind != "velocity":
        raise ValidationError("band_distance needs a velocity band")
    sel = _speed_sel(kin, mask) & band.contains(kin.speed)
    return float(np.sum(kin.step[sel]))


def band_time(series, band: Band, mask=None) -> float:
    """Seconds spent in ``band``. ``mask`` is aligned with ``series`` samples."""
    series = np.asarray(series, dtype=float)
    sel = band.contains(series)
    if mask is not None:
        sel &= np.asarray(mask, dtype=bool)
    return FRAME_DT * int(np.count_nonzero(sel))


def peak_rolling_velocity(kin: KinematicSeries, window: float, mask=None) -> Optional[float]:
    """Largest mean speed sustained over at least ``window`` seconds of selected samples.

    Spans never bridge a gap in the selection. A span of 2w or more samples
    splits into two spans of at least w, one of which is no slower, so only
    lengths w..2w-1 are scanned. Longer windows search a subset of the spans
    of shorter ones, so the peak never rises with the window. Returns None
    when no selected run is long enough.
    """
    w = int(round(window / FRAME_DT))
    if w < 1:
        raise ValidationError(f"window must be at least {FRAME_DT} s")
    sel = _speed_sel(kin, mask)
    padded = np.concatenate(([False], sel, [False]))
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    best = None
    for a, b in zip(edges[::2], edges[1::2]):
        if b - a < w:
            continue
        s = kin.speed[a:b]
        mu = float(np.mean(s))
        # prefix sums of the centred run stay small, so differences keep precision
        prefix = np.concatenate(([0.0], np.cumsum(s - mu)))
        padded = np.concatenate((prefix, np.full(2 * w, -np.inf)))
        # row i holds prefix[i + L] for L = w..2w-1; spans past the run end become -inf
        ends = sliding_window_view(padded, 2 * w)[:len(prefix), w:]
        means = (ends - prefix[:, None]) / np.arange(w, 2 * w)
        m = float(np.max(means)) + mu
        if best is None or m > best:
            best = m
    return best


def total_acceleration(kin: KinematicSeries, mask=None) -> float:
    return float(np.sum(np.abs(kin.accel[_accel_sel(kin, mask)])))


def acceleration_density(kin: KinematicSeries, mask=None) -> Optional[float]:
    """Mean absolute acceleration, or None for an empty selection."""
    sel = _accel_sel(kin, mask)
    n = int(np.count_nonzero(sel))
    if n == 0:
        return None
    return float(np.sum(np.abs(kin.accel[sel]))) / n


@dataclass
class LoadMetrics:
    total_distance: float = 0.0
    high_speed_distance: float = 0.0
    very_high_speed_distance: float = 0.0
    time_v_band: tuple = (0.0, 0.0, 0.0)
    peak_velocity: dict = field(default_factory=lambda: {w: None for w in PEAK_WINDOWS})
    total_acceleration: float = 0.0
    acceleration_density: Optional[float] = None
    time_a_band: tuple = (0.0, 0.0, 0.0)
    # seconds covered by speed samples and by acceleration samples
    elapsed: float = 0.0
    accel_time: float = 0.0

    def as_dict(self):
        d = {
            "total_distance": self.total_distance,
            "high_speed_distance": self.high_speed_distance,
            "very_high_speed_distance": self.very_high_speed_distance,
        }
        for i, v in enumerate(self.time_v_band, 1):
            d[f"time_vband{i}"] = v
        for w in PEAK_WINDOWS:
            d[f"peak_velocity_{w}s"] = self.peak_velocity.get(w)
        d["total_acceleration"] = self.total_acceleration
        d["acceleration_density"] = self.acceleration_density
        for i, v in enumerate(self.time_a_band, 1):
            d[f"time_aband{i}"] = v
        d["elapsed"] = self.elapsed
        d["accel_time"] = self.accel_time
        return d

    def get(self, name):
        return self.as_dict()[name]


METRIC_COLUMNS = list(LoadMetrics().as_dict())


def compute_load_metrics(kin: KinematicSeries, mask=None,
                         velocity_bands=VELOCITY_BANDS,
                         acceleration_bands=ACCELERATION_BANDS) -> LoadMetrics:
    """The full metric suite over the frames selected by ``mask``."""
    ssel = _speed_sel(kin, mask)
    asel = _accel_sel(kin, mask)
    abs_acc = np.abs(kin.accel)
    n_acc = int(np.count_nonzero(asel))
    return LoadMetrics(
        total_distance=total_distance(kin, mask),
        high_speed_distance=band_distance(kin, velocity_bands[1], mask),
        very_high_speed_distance=band_distance(kin, velocity_bands[2], mask),
        time_v_band=tuple(band_time(kin.speed, b, ssel) for b in velocity_bands),
        peak_velocity={w: peak_rolling_velocity(kin, w, mask) for w in PEAK_WINDOWS},
        total_acceleration=total_acceleration(kin, mask),
        acceleration_density=acceleration_density(kin, mask),
        time_a_band=tuple(band_time(abs_acc, b, asel) for b in acceleration_bands),
        elapsed=FRAME_DT * int(np.count_nonzero(ssel)),
        accel_time=FRAME_DT * n_acc,
    )


def combine_metrics(parts) -> LoadMetrics:
    """Merge metrics of disjoint frame sets, e.g. the two halves of a game."""
    parts = list(parts)
    out = LoadMetrics()
    if not parts:
        return out
    out.total_distance = sum(p.total_distance for p in parts)
    out.high_speed_distance = sum(p.high_speed_distance for p in parts)
    out.very_high_speed_distance = sum(p.very_high_speed_distance for p in parts)
    out.time_v_band = tuple(sum(vals) for vals in zip(*(p.time_v_band for p in parts)))
    out.time_a_band = tuple(sum(vals) for vals in zip(*(p.time_a_band for p in parts)))
    out.total_acceleration = sum(p.total_acceleration for p in parts)
    out.elapsed = sum(p.elapsed for p in parts)
    out.accel_time = sum(p.accel_time for p in parts)
    n_acc = round(out.accel_time / FRAME_DT)
    out.acceleration_density = out.total_acceleration / n_acc if n_acc else None
    for w in PEAK_WINDOWS:
        vals = [p.peak_velocity.get(w) for p in parts if p.peak_velocity.get(w) is not None]
        out.peak_velocity[w] = max(vals) if vals else None
    return out


def span_metrics(kin: KinematicSeries, start, stop,
                 velocity_bands=VELOCITY_BANDS,
                 acceleration_bands=ACCELERATION_BANDS) -> LoadMetrics:
    """Metrics over the contiguous frames ``[start, stop)``.

    Equivalent to :func:`compute_load_metrics` with a mask selecting exactly
    those frames, without touching the rest of the series.
    """
    s0, s1 = max(start - 1, 0), max(stop - 1, 0)
    a0, a1 = min(s0, len(kin.accel)), min(s1, len(kin.accel))
    sub = KinematicSeries(t=kin.t[start:stop], step=kin.step[s0:s1], speed=kin.speed[s0:s1],
                          accel_raw=kin.accel_raw[a0:a1], accel=kin.accel[a0:a1])
    return compute_load_metrics(sub, None, velocity_bands, acceleration_bands)
