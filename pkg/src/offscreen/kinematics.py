"""Per-interval distance and speed, and kernel-smoothed acceleration.

Sample alignment for a track of ``n`` frames:

* ``step[k]`` / ``speed[k]`` cover the interval from frame ``k`` to ``k + 1``
  and are attributed to frame ``k + 1`` (``k = 0 .. n - 2``).
* ``accel[k] = (speed[k + 1] - speed[k]) / 0.1`` is timestamped at the frame
  shared by intervals ``k`` and ``k + 1``, i.e. frame ``k + 1``
  (``k = 0 .. n - 3``).

So frame 0 of a half carries no kinematic sample and the last frame carries
speed but no acceleration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError
from .tracking import FRAME_DT, PlayerTrack

DEFAULT_BANDWIDTH = 0.3
# Gaussian weight at 8 bandwidths is exp(-32) ~ 1e-14
_TRUNCATE = 8.0


@dataclass
class KinematicSeries:
    t: np.ndarray
    step: np.ndarray
    speed: np.ndarray
    accel_raw: np.ndarray
    accel: np.ndarray

    @property
    def n_frames(self):
        return len(self.t)

    def speed_mask(self, frame_mask):
        """Select speed/step samples whose attributed frame is in ``frame_mask``."""
        return np.asarray(frame_mask, dtype=bool)[1:]

    def accel_mask(self, frame_mask):
        return np.asarray(frame_mask, dtype=bool)[1:-1]


def nw_smooth(values, times, bandwidth=DEFAULT_BANDWIDTH):
    """Nadaraya-Watson smoother with a Gaussian kernel.

    ``out[j] = sum_i K((t_j - t_i) / h) v_i / sum_i K((t_j - t_i) / h)``.
    Weights beyond eight bandwidths are dropped; they are below 1e-13 of the
    central weight.
    """
    values = np.asarray(values, dtype=float)
    times = np.asarray(times, dtype=float)
    if values.shape != times.shape or values.ndim != 1:
        raise ValidationError("values and times must be 1-d arrays of equal length")
    if len(values) == 0:
        raise ValidationError("cannot smooth an empty series")
    if not np.all(np.isfinite(values)):
        raise ValidationError("cannot smooth non-finite values")
    if not bandwidth > 0:
        raise ValidationError(f"bandwidth must be positive, got {bandwidth}")
    n = len(values)
    if n == 1:
        return values.copy()
    dt = np.diff(times)
    uniform = np.allclose(dt, dt[0], rtol=1e-9, atol=1e-12) and dt[0] > 0
    if uniform:
        radius = min(n - 1, int(math.ceil(_TRUNCATE * bandwidth / dt[0])))
        lags = np.arange(-radius, radius + 1) * dt[0]
        kernel = np.exp(-0.5 * (lags / bandwidth) ** 2)
        num = np.convolve(values, kernel)[radius:radius + n]
        den = np.convolve(np.ones(n), kernel)[radius:radius + n]
        return num / den
    out = np.empty(n)
    reach = _TRUNCATE * bandwidth
    lo = np.searchsorted(times, times - reach, side="left")
    hi = np.searchsorted(times, times + reach, side="right")
    for j in range(n):
        w = np.exp(-0.5 * ((times[j] - times[lo[j]:hi[j]]) / bandwidth) ** 2)
        out[j] = np.dot(w, values[lo[j]:hi[j]]) / w.sum()
    return out


def derive_kinematics(track, bandwidth=DEFAULT_BANDWIDTH) -> KinematicSeries:
    """Step distances, speeds and accelerations of one player-half."""
    if isinstance(track, PlayerTrack):
        t, x, y = track.t, track.x, track.y
    else:
        t, x, y = (np.asarray(a, dtype=float) for a in track)
    if len(t) < 2:
        raise ValidationError("need at least 2 frames to derive kinematics")
    step = np.hypot(np.diff(x), np.diff(y))
    speed = step / FRAME_DT
    accel_raw = np.diff(speed) / FRAME_DT
    if len(accel_raw):
        accel = nw_smooth(accel_raw, t[1:-1], bandwidth)
    else:
        accel = accel_raw.copy()
    return KinematicSeries(t=np.asarray(t, dtype=float), step=step, speed=speed,
                           accel_raw=accel_raw, accel=accel)
