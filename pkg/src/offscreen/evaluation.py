"""Train/test protocol, RMSPE and CV, residual diagnostics and importance tallies."""
from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .exceptions import ValidationError
from .features import GAME_FEATURES, OBSERVED_COUNTERPART, SUBTRACK_FEATURES, target_column
from .metrics import MEAN_METRICS, METRIC_LABELS, TARGET_METRICS
from .models import (BOOSTER_DEFAULTS, BOOSTERS, BaselineLinearModel, BoostedRegressor,
                     FittedModel, ScalingEstimator, aggregate_to_game, variable_importance)
from .tracking import POSITIONS

log = logging.getLogger(__name__)

LEVELS = ("subtrack", "game")
DEFAULT_ROSTER = ("base", "linear", "linear_interactions", "tree")
TOP_K = 5


def rmspe(y, y_hat):
    """Root mean square predictive error."""
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape:
        raise ValidationError("y and y_hat must have the same length")
    if y.size == 0:
        raise ValidationError("cannot compute RMSPE of zero observations")
    return float(np.sqrt(np.sum((y - y_hat) ** 2) / y.size))


def cv(y, y_hat):
    """RMSPE relative to the mean of the true values."""
    mean = float(np.mean(np.asarray(y, dtype=float))) if len(y) else 0.0
    if mean == 0:
        raise ValidationError("coefficient of variation is undefined for zero-mean targets")
    return rmspe(y, y_hat) / mean


@dataclass
class SplitPlan:
    """Chronological split: the first ``train_count`` games train, the rest test."""

    games: list
    train_count: int = 13
    test_count: int = 5

    def __post_init__(self):
        self.games = list(self.games)
        if len(set(self.games)) != len(self.games):
            raise ValidationError("split plan lists a game twice")
        if self.train_count < 1 or self.test_count < 1:
            raise ValidationError("train and test counts must be positive")
        if self.train_count + self.test_count != len(self.games):
            raise ValidationError(
                f"split of {self.train_count}+{self.test_count} games does not cover "
                f"the {len(self.games)} supplied games")

    @property
    def train_games(self):
        return self.games[:self.train_count]

    @property
    def test_games(self):
        return self.games[self.train_count:]

    @classmethod
    def from_corpus(cls, game_ids, train_count=13, test_count=5, order=None):
        """Games in season order (``order`` if given, else sorted by id)."""
        ids = sorted(set(map(str, game_ids)))
        if order:
            order = [str(g) for g in order]
            unknown = set(order) - set(ids)
            if unknown:
                raise ValidationError(f"game order names unknown games {sorted(unknown)}")
            ids = order + [g for g in ids if g not in order]
        return cls(ids, train_count, test_count)


def _rows_with_target(df, metric):
    return df[np.isfinite(df[target_column(metric)].to_numpy(dtype=float))]


def _fit_one(name, metric, level, games, subs, params, seed):
    y_col = target_column(metric)
    meta = {"seed": seed, "train_games": sorted(games["game_id"].unique().tolist())}
    if name == "base":
        g = _rows_with_target(games, metric)
        X = g[["censored_total_time", OBSERVED_COUNTERPART[metric]]]
        return FittedModel("baseline_lm", "game", metric, BaselineLinearModel().fit(X, g[y_col]), meta)
    if name == "scaling":
        est = ScalingEstimator(observed_column=OBSERVED_COUNTERPART[metric],
                               intensive=metric in MEAN_METRICS).fit()
        return FittedModel("scaling", "game", metric, est, meta)
    if name not in BOOSTERS:
        raise ValidationError(f"unknown model {name!r}")
    booster_params = dict(BOOSTER_DEFAULTS[name])
    booster_params.update(params.get(name, {}))
    booster_params.setdefault("seed", seed)
    if level == "game":
        g = _rows_with_target(games, metric)
        est = BoostedRegressor(booster=name, **booster_params).fit(g[GAME_FEATURES], g[y_col])
    else:
        s = _rows_with_target(subs, metric)
        est = BoostedRegressor(booster=name, **booster_params).fit(s[SUBTRACK_FEATURES], s[y_col])
    return FittedModel("boosted", level, metric, est, meta)


def model_key(metric, level, name):
    return f"{metric}__{level}__{name}"


def fit_models(games, subtracks, metrics=TARGET_METRICS, roster=DEFAULT_ROSTER, params=None, seed=0):
    """Fit every (metric, level, model) cell on training data.

    Returns ``(models, errors)``; a failing cell is logged and recorded in
    ``errors`` while the rest of the grid is fitted.
    """
    params = params or {}
    models, errors = {}, {}
    for metric in metrics:
        for name in roster:
            levels = ("game",) if name in ("base", "scaling") else LEVELS
            for level in levels:
                key = model_key(metric, level, name)
                try:
                    models[key] = _fit_one(name, metric, level, games, subtracks, params, seed)
                except Exception as exc:  # noqa: BLE001 - reported per cell
                    log.warning("fit failed for %s: %s", key, exc)
                    errors[key] = f"{type(exc).__name__}: {exc}"
    return models, errors


def _aggregate(sub_pred, subs, games, metric):
    """Sum (or time-weighted mean) of subtrack predictions per player-game."""
    df = pd.DataFrame({"game_id": subs["game_id"].to_numpy(), "player_id": subs["player_id"].to_numpy(),
                       "pred": sub_pred, "w": subs["accel_time"].to_numpy(dtype=float)})
    out = {}
    for (g, p), grp in df.groupby(["game_id", "player_id"], sort=True):
        out[(g, p)] = aggregate_to_game(grp["pred"].to_numpy(), metric, grp["w"].to_numpy())
    keys = list(zip(games["game_id"], games["player_id"]))
    # a player-game without censored subtracks has nothing to add
    empty = float("nan") if metric in MEAN_METRICS else 0.0
    return np.array([out.get(k, empty) for k in keys], dtype=float)


def predict_models(models, games, subtracks):
    """Game-level predictions of every fitted model, floored at zero, in long format."""
    rows = []
    for key in sorted(models):
        m = models[key]
        name = key.rsplit("__", 1)[1]
        if m.kind == "baseline_lm":
            X = games[list(m.feature_names)]
            pred = m.predict(X)
        elif m.kind == "scaling":
            pred = m.predict(games)
        elif m.level == "game":
            pred = m.predict(games[GAME_FEATURES])
        else:
            sub_pred = m.predict(subtracks[SUBTRACK_FEATURES]) if len(subtracks) else np.array([])
            pred = _aggregate(sub_pred, subtracks, games, m.target)
        pred = np.where(np.isnan(pred), pred, np.maximum(pred, 0.0))
        for g, p, v in zip(games["game_id"], games["player_id"], pred):
            rows.append((m.target, m.level, name, str(g), str(p), float(v)))
    return pd.DataFrame(rows, columns=["metric", "level", "model", "game_id", "player_id", "prediction"])


def _cell_entries(predictions, metric, level, name):
    """Prediction rows for a report cell; the base model serves both levels."""
    lvl = "game" if name in ("base", "scaling") else level
    sel = predictions[(predictions["metric"] == metric) & (predictions["level"] == lvl)
                      & (predictions["model"] == name)]
    return sel


def _num(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return None
    return float(v)


def build_report(predictions, games, models=None, errors=None, split=None,
                 metrics=TARGET_METRICS, roster=DEFAULT_ROSTER):
    """Assemble RMSPE/CV cells, per-position errors, residual records and importance.

    Returns ``(report, residuals)`` where ``report`` is a JSON-ready dict and
    ``residuals`` a DataFrame of per-player-game residuals.
    """
    models = models or {}
    errors = errors or {}
    truth = games.set_index(["game_id", "player_id"])
    cells, residual_rows = [], []
    for metric in metrics:
        y_col = target_column(metric)
        for level in LEVELS:
            for name in roster:
                fit_key = model_key(metric, "game" if name in ("base", "scaling") else level, name)
                cell = {"metric": metric, "level": level, "model": name}
                if fit_key in errors:
                    cells.append({**cell, "error": errors[fit_key]})
                    continue
                sel = _cell_entries(predictions, metric, level, name)
                if sel.empty:
                    cells.append({**cell, "error": "no predictions"})
                    continue
                idx = pd.MultiIndex.from_arrays([sel["game_id"], sel["player_id"]])
                t = truth.loc[idx]
                y = t[y_col].to_numpy(dtype=float)
                y_hat = sel["prediction"].to_numpy(dtype=float)
                ok = np.isfinite(y) & np.isfinite(y_hat)
                try:
                    r = rmspe(y[ok], y_hat[ok])
                    c = cv(y[ok], y_hat[ok])
                except ValidationError as exc:
                    cells.append({**cell, "error": str(exc), "n": int(ok.sum())})
                    continue
                pos = t["position"].to_numpy()
                per_position = {}
                for p in POSITIONS:
                    m = ok & (pos == p)
                    per_position[p] = rmspe(y[m], y_hat[m]) if m.any() else None
                cells.append({**cell, "rmspe": r, "cv": c, "n": int(ok.sum()),
                              "mean_y": float(np.mean(y[ok])), "rmspe_by_position": per_position})
                if level == "game" or name not in ("base", "scaling"):
                    frac = t["censored_fraction"].to_numpy(dtype=float)
                    for i in np.flatnonzero(ok):
                        residual_rows.append((metric, level, name, str(idx[i][0]), str(idx[i][1]), pos[i],
                                              frac[i], y[i], y_hat[i], y[i] - y_hat[i]))
    importance, tally = {}, {}
    for key in sorted(models):
        m = models[key]
        metric, level, name = key.split("__")
        if m.kind != "boosted" or metric not in metrics:
            continue
        top = [n for n, _ in variable_importance(m)[:TOP_K]]
        importance.setdefault(level, {}).setdefault(name, {})[metric] = top
        counter = tally.setdefault(level, {}).setdefault(name, Counter())
        counter.update(top)
    tally = {lvl: {name: dict(sorted(c.items(), key=lambda kv: (-kv[1], kv[0])))
                   for name, c in by.items()} for lvl, by in tally.items()}
    report = {
        "split": None if split is None else {"train": split.train_games, "test": split.test_games},
        "metrics": list(metrics),
        "roster": list(roster),
        "cells": cells,
        "importance": importance,
        "importance_tally": tally,
    }
    residuals = pd.DataFrame(residual_rows, columns=["metric", "level", "model", "game_id", "player_id",
                                                     "position", "censored_fraction", "y", "y_hat", "residual"])
    return report, residuals


@dataclass
class EvalReport:
    report: dict
    residuals: pd.DataFrame
    models: dict = field(default_factory=dict)
    predictions: pd.DataFrame = None

    def cell(self, metric, model, level):
        for c in self.report["cells"]:
            if (c["metric"], c["model"], c["level"]) == (metric, model, level):
                return c
        raise KeyError((metric, model, level))

    def to_json(self):
        return dumps_report(self.report)


def _clean(obj):
    """Non-finite floats become null; numpy scalars become plain numbers."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def dumps_report(report):
    return json.dumps(_clean(report), indent=1, sort_keys=True, allow_nan=False) + "\n"


def split_tables(games, subtracks, split):
    train = games[games["game_id"].isin(split.train_games)]
    test = games[games["game_id"].isin(split.test_games)]
    sub_train = subtracks[subtracks["game_id"].isin(split.train_games)]
    sub_test = subtracks[subtracks["game_id"].isin(split.test_games)]
    return train, test, sub_train, sub_test


def run_experiment(games, subtracks, split: SplitPlan, roster=DEFAULT_ROSTER, params=None,
                   metrics=TARGET_METRICS, seed=0) -> EvalReport:
    """Fit on the training games, predict the test games and score every cell."""
    train, test, sub_train, sub_test = split_tables(games, subtracks, split)
    models, errors = fit_models(train, sub_train, metrics, roster, params, seed)
    preds = predict_models(models, test, sub_test)
    report, residuals = build_report(preds, test, models, errors, split, metrics, roster)
    return EvalReport(report, residuals, models, preds)


def residuals_by_censoring(residuals, metric, model, level="game"):
    """Plot-ready (censored %, residual, position) records of one cell."""
    sel = residuals[(residuals["metric"] == metric) & (residuals["model"] == model)
                    & (residuals["level"] == level)]
    if sel.empty:
        raise KeyError(f"no residuals for {metric}/{model}/{level}")
    return pd.DataFrame({"censored_pct": 100.0 * sel["censored_fraction"].to_numpy(),
                         "residual": sel["residual"].to_numpy(),
                         "position": sel["position"].to_numpy()})


def scaling_residuals(games, metric):
    """Residuals of the scaling estimator on every player-game with censored time."""
    g = _rows_with_target(games, metric)
    g = g[g["censored_total_time"] > 0]
    est = ScalingEstimator(observed_column=OBSERVED_COUNTERPART[metric], intensive=metric in MEAN_METRICS)
    pred = est.predict(g)
    y = g[target_column(metric)].to_numpy(dtype=float)
    return pd.DataFrame({"game_id": g["game_id"].to_numpy(), "player_id": g["player_id"].to_numpy(),
                         "position": g["position"].to_numpy(),
                         "censored_pct": 100.0 * g["censored_fraction"].to_numpy(),
                         "y": y, "y_hat": pred, "residual": y - pred})


def format_table(report, level):
    """Text table: one row per metric, RMSPE and CV per model."""
    roster = report["roster"]
    by = {(c["metric"], c["model"]): c for c in report["cells"] if c["level"] == level}
    header = ["metric"] + [f"{m} {s}" for m in roster for s in ("RMSPE", "CV")]
    lines = [header]
    for metric in report["metrics"]:
        row = [METRIC_LABELS.get(metric, metric)]
        for m in roster:
            c = by.get((metric, m), {})
            row += [_fmt(c.get("rmspe")), _fmt(c.get("cv"), 2)] if "rmspe" in c else ["n/a", "n/a"]
        lines.append(row)
    widths = [max(len(r[i]) for r in lines) for i in range(len(header))]
    return "\n".join("  ".join(v.ljust(w) if i == 0 else v.rjust(w) for i, (v, w) in enumerate(zip(r, widths)))
                     for r in lines)


def _fmt(v, digits=None):
    if v is None:
        return "n/a"
    if digits is not None:
        return f"{v:.{digits}f}"
    return f"{v:.4g}" if abs(v) < 10 else f"{v:.1f}"


def table_frame(report, level):
    """Error table as a DataFrame: one row per metric, RMSPE and CV columns per model."""
    roster = report["roster"]
    by = {(c["metric"], c["model"]): c for c in report["cells"] if c["level"] == level}
    rows = []
    for metric in report["metrics"]:
        row = {"metric": metric}
        for m in roster:
            c = by.get((metric, m), {})
            row[f"{m}_rmspe"] = c.get("rmspe")
            row[f"{m}_cv"] = c.get("cv")
        rows.append(row)
    return pd.DataFrame(rows)
