"""Predictor construction at subtrack and game level, plus standardization."""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import ValidationError
from .metrics import LoadMetrics, TARGET_METRICS
from .tracking import FRAME_DT, POSITIONS

log = logging.getLogger(__name__)

BOUNDARY_SAMPLES = 20  # 2 s at 10 Hz

POSITION_COLUMNS = ["is_midfielder", "is_forward"]

OBSERVED_BLOCK = [
    "observed_avg_acceleration",
    "observed_total_acceleration",
    "observed_avg_velocity",
    "observed_high_speed_distance",
    "observed_very_high_speed_distance",
    "observed_time_vband1",
    "observed_time_vband2",
    "observed_time_vband3",
    "observed_time_aband1",
    "observed_time_aband2",
    "observed_time_aband3",
]

SUBTRACK_FEATURES = POSITION_COLUMNS + [
    "offscreen_time",
    "offscreen_distance",
    "pre_velocity",
    "post_velocity",
    "pre_abs_accel",
    "post_abs_accel",
] + OBSERVED_BLOCK + ["gap_imputed", "pre_imputed", "post_imputed"]

GAME_FEATURES = POSITION_COLUMNS + [
    "censored_total_time",
    "observed_total_distance",
] + OBSERVED_BLOCK + ["censored_fraction"]

# observed-scope column that mirrors each target metric
OBSERVED_COUNTERPART = {
    "total_distance": "observed_total_distance",
    "high_speed_distance": "observed_high_speed_distance",
    "very_high_speed_distance": "observed_very_high_speed_distance",
    "time_vband1": "observed_time_vband1",
    "time_vband2": "observed_time_vband2",
    "time_vband3": "observed_time_vband3",
    "total_acceleration": "observed_total_acceleration",
    "acceleration_density": "observed_avg_acceleration",
    "time_aband1": "observed_time_aband1",
    "time_aband2": "observed_time_aband2",
    "time_aband3": "observed_time_aband3",
}

TARGET_PREFIX = "target__"


def target_column(metric):
    return TARGET_PREFIX + metric


def position_indicators(position):
    if position not in POSITIONS:
        raise ValidationError(f"unknown position {position!r}")
    return {"is_midfielder": float(position == "midfielder"),
            "is_forward": float(position == "forward")}


def observed_block(observed: LoadMetrics):
    """Game-level observed metrics shared by both predictor sets."""
    avg_velocity = observed.total_distance / observed.elapsed if observed.elapsed > 0 else 0.0
    density = observed.acceleration_density
    return {
        "observed_avg_acceleration": 0.0 if density is None else density,
        "observed_total_acceleration": observed.total_acceleration,
        "observed_avg_velocity": avg_velocity,
        "observed_high_speed_distance": observed.high_speed_distance,
        "observed_very_high_speed_distance": observed.very_high_speed_distance,
        "observed_time_vband1": observed.time_v_band[0],
        "observed_time_vband2": observed.time_v_band[1],
        "observed_time_vband3": observed.time_v_band[2],
        "observed_time_aband1": observed.time_a_band[0],
        "observed_time_aband2": observed.time_a_band[1],
        "observed_time_aband3": observed.time_a_band[2],
    }


def _boundary_frames(mask, start, stop, before):
    """Frames of the observed run adjacent to [start, stop), at most 2 s of them."""
    if before:
        lo = start
        while lo > 0 and start - lo < BOUNDARY_SAMPLES and mask[lo - 1]:
            lo -= 1
        return np.arange(lo, start)
    hi = stop
    while hi < len(mask) and hi - stop < BOUNDARY_SAMPLES and mask[hi]:
        hi += 1
    return np.arange(stop, hi)


def _window_means(kin, frames):
    # speed sample k belongs to frame k + 1; accel sample k to frame k + 1
    s_idx = frames[frames >= 1] - 1
    a_idx = frames[(frames >= 1) & (frames <= len(kin.accel))] - 1
    v = float(np.mean(kin.speed[s_idx])) if len(s_idx) else None
    a = float(np.mean(np.abs(kin.accel[a_idx]))) if len(a_idx) else None
    return v, a


def subtrack_features(sub, kin, game_observed: LoadMetrics, position, mask=None) -> dict:
    """Predictors for one censored subtrack.

    ``mask`` is the visibility mask of the parent track; without it the
    frames next to the subtrack are assumed observed. Boundary windows cover
    at most 2 s of the adjacent observed run. A side with no usable samples
    falls back to the player's observed game averages and is flagged.
    """
    if sub.observed:
        raise ValidationError("subtrack features are only defined for censored subtracks")
    if mask is None:
        mask = np.ones(kin.n_frames, dtype=bool)
        mask[sub.start:sub.stop] = False
    block = observed_block(game_observed)
    feats = dict(position_indicators(position))
    feats["offscreen_time"] = sub.elapsed
    gap = sub.gap_distance
    feats["offscreen_distance"] = 0.0 if gap is None else gap
    flags = {"gap_imputed": float(gap is None)}
    for side, before in (("pre", True), ("post", False)):
        v, a = _window_means(kin, _boundary_frames(mask, sub.start, sub.stop, before))
        flags[f"{side}_imputed"] = float(v is None or a is None)
        feats[f"{side}_velocity"] = block["observed_avg_velocity"] if v is None else v
        feats[f"{side}_abs_accel"] = block["observed_avg_acceleration"] if a is None else a
    feats.update(block)
    feats.update(flags)
    return {k: feats[k] for k in SUBTRACK_FEATURES}


def game_features(observed: LoadMetrics, position, censored_time, total_time) -> dict:
    """Predictors for one player-game from its observed-scope metrics."""
    if total_time - censored_time <= 0 or observed.elapsed <= 0:
        raise ValidationError("player was never on camera; no observed data to predict from")
    feats = dict(position_indicators(position))
    feats["censored_total_time"] = censored_time
    feats["observed_total_distance"] = observed.total_distance
    feats.update(observed_block(observed))
    feats["censored_fraction"] = censored_time / total_time
    return {k: feats[k] for k in GAME_FEATURES}


def _as_frame(X, columns=None):
    if isinstance(X, pd.DataFrame):
        return X
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if columns is None:
        columns = [f"x{i}" for i in range(X.shape[1])]
    return pd.DataFrame(X, columns=list(columns))


def binary_columns(df):
    """Columns whose values are all 0 or 1."""
    return [c for c in df.columns if np.isin(df[c].to_numpy(dtype=float), (0.0, 1.0)).all()]


@dataclass
class ScalerStats:
    columns: list
    mean: np.ndarray
    scale: np.ndarray


class FeatureScaler(TransformerMixin, BaseEstimator):
    """Centre and scale numeric columns to mean 0 and (sample) sd 1.

    Columns listed in ``passthrough`` are kept unscaled (indicators). Columns
    that are constant on the training data are dropped with a warning.
    """

    def __init__(self, passthrough=None):
        self.passthrough = passthrough

    def fit(self, X, y=None):
        X = _as_frame(X)
        if len(X) == 0:
            raise ValidationError("cannot fit a scaler on an empty matrix")
        keep = set(self.passthrough or [])
        values = X.to_numpy(dtype=float)
        n = len(values)
        mean = values.sum(axis=0) / n
        dev = values - mean
        sd = np.sqrt((dev * dev).sum(axis=0) / max(n - 1, 1))
        constant = [c for c, s in zip(X.columns, sd) if not s > 0]
        if constant:
            warnings.warn(f"dropping constant columns {constant}", stacklevel=2)
        self.feature_names_in_ = np.array(X.columns, dtype=object)
        self.columns_ = [c for c, s in zip(X.columns, sd) if s > 0]
        self.scaled_ = [c for c in self.columns_ if c not in keep]
        idx = [list(X.columns).index(c) for c in self.scaled_]
        self.mean_ = mean[idx]
        self.scale_ = sd[idx]
        return self

    def stats(self):
        check_is_fitted(self, "columns_")
        return ScalerStats(list(self.scaled_), self.mean_.copy(), self.scale_.copy())

    def transform(self, X):
        check_is_fitted(self, "columns_")
        X = _as_frame(X, self.feature_names_in_)
        out = X[self.columns_].astype(float).copy()
        if self.scaled_:
            out[self.scaled_] = (out[self.scaled_].to_numpy() - self.mean_) / self.scale_
        return out

    def inverse_transform(self, X):
        check_is_fitted(self, "columns_")
        X = _as_frame(X, self.columns_).astype(float).copy()
        if self.scaled_:
            X[self.scaled_] = X[self.scaled_].to_numpy() * self.scale_ + self.mean_
        return X

    def get_feature_names_out(self, input_features=None):
        return np.array(self.columns_, dtype=object)


def fit_scaler(X, passthrough=None) -> FeatureScaler:
    return FeatureScaler(passthrough=passthrough).fit(X)


def apply_scaler(scaler: FeatureScaler, X):
    return scaler.transform(X)


class InteractionExpander(TransformerMixin, BaseEstimator):
    """Append all pairwise products of columns.

    Products of two indicator columns are skipped; they are either redundant
    or identically zero for one-hot levels.
    """

    def __init__(self, indicators=None):
        self.indicators = indicators

    def fit(self, X, y=None):
        X = _as_frame(X)
        ind = set(self.indicators or [])
        cols = list(X.columns)
        self.feature_names_in_ = np.array(cols, dtype=object)
        self.pairs_ = [(a, b) for a, b in combinations(cols, 2) if not (a in ind and b in ind)]
        return self

    def transform(self, X):
        check_is_fitted(self, "pairs_")
        X = _as_frame(X, self.feature_names_in_)
        base = X[list(self.feature_names_in_)].to_numpy(dtype=float)
        pos = {c: i for i, c in enumerate(self.feature_names_in_)}
        prods = np.empty((len(X), len(self.pairs_)))
        for k, (a, b) in enumerate(self.pairs_):
            prods[:, k] = base[:, pos[a]] * base[:, pos[b]]
        out = np.hstack([base, prods])
        return pd.DataFrame(out, columns=self.get_feature_names_out(), index=X.index)

    def get_feature_names_out(self, input_features=None):
        return np.array(list(self.feature_names_in_) + [f"{a}:{b}" for a, b in self.pairs_],
                        dtype=object)
