"""Predictors for censored load metrics.

* :func:`scaling_estimate` / :class:`ScalingEstimator` - observed metric scaled
  by the censored-to-observed time ratio.
* :class:`BaselineLinearModel` - OLS on censored time and the observed metric.
* :class:`BoostedRegressor` - squared-error gradient boosting with a ridge
  base learner (``linear``), a ridge learner on the pairwise-interaction
  expansion (``linear_interactions``) or depth-limited regression trees
  (``tree``).
"""
from __future__ import annotations

import json
import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from scipy.linalg import cho_factor, cho_solve
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from .exceptions import SchemaError, ValidationError
from .features import FeatureScaler, InteractionExpander, binary_columns
from .metrics import MEAN_METRICS

log = logging.getLogger(__name__)

FORMAT_VERSION = 1
BOOSTERS = ("linear", "linear_interactions", "tree")

# The product expansion has many more columns than the plain design, so it gets a stiffer ridge.
BOOSTER_DEFAULTS = {
    "linear": {"n_rounds": 300, "learning_rate": 0.1, "reg_lambda": 1.0},
    "linear_interactions": {"n_rounds": 300, "learning_rate": 0.1, "reg_lambda": 100.0},
    "tree": {"n_rounds": 300, "learning_rate": 0.1, "max_depth": 4, "reg_lambda": 1.0,
             "min_samples_leaf": 20, "max_bins": 64},
}


def scaling_estimate(observed, observed_time, censored_time, intensive=False):
    """``observed * censored_time / observed_time``.

    Works elementwise on arrays. Intensive quantities (means such as
    acceleration density) do not scale with time, so the observed value is
    returned unchanged when ``intensive`` is set.
    """
    observed = np.asarray(observed, dtype=float)
    observed_time = np.asarray(observed_time, dtype=float)
    censored_time = np.asarray(censored_time, dtype=float)
    if np.any(observed_time <= 0):
        raise ValidationError("observed time must be positive for the scaling estimator")
    if np.any(censored_time < 0):
        raise ValidationError("censored time cannot be negative")
    if intensive:
        out = observed * np.ones_like(censored_time)
    else:
        out = observed * censored_time / observed_time
    return out if out.ndim else float(out)


def _check_frame(X, feature_names=None):
    if isinstance(X, pd.DataFrame):
        if feature_names is not None:
            have, want = list(X.columns), list(feature_names)
            missing = [c for c in want if c not in have]
            extra = [c for c in have if c not in want]
            if missing or extra:
                raise SchemaError(f"column mismatch: missing {missing}, extra {extra}")
            X = X[want]
        values = X.to_numpy(dtype=float)
    else:
        values = np.asarray(X, dtype=float)
        if values.ndim == 1:
            values = values.reshape(-1, 1)
        if feature_names is not None and values.shape[1] != len(feature_names):
            raise SchemaError(f"expected {len(feature_names)} columns, got {values.shape[1]}")
        cols = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(values.shape[1])]
        X = pd.DataFrame(values, columns=cols)
    if not np.all(np.isfinite(values)):
        raise ValidationError("feature matrix contains missing or non-finite values")
    return X


def _check_target(y, n):
    y = np.asarray(y, dtype=float).ravel()
    if len(y) != n:
        raise ValidationError(f"{n} rows of features but {len(y)} targets")
    if not np.all(np.isfinite(y)):
        raise ValidationError("targets contain missing or non-finite values")
    return y


class ScalingEstimator(RegressorMixin, BaseEstimator):
    """Column-driven wrapper around :func:`scaling_estimate` (nothing to fit)."""

    def __init__(self, observed_column="observed", observed_time_column="observed_time",
                 censored_time_column="censored_total_time", intensive=False):
        self.observed_column = observed_column
        self.observed_time_column = observed_time_column
        self.censored_time_column = censored_time_column
        self.intensive = intensive

    def fit(self, X=None, y=None):
        self.fitted_ = True
        return self

    def predict(self, X):
        return np.atleast_1d(scaling_estimate(X[self.observed_column], X[self.observed_time_column],
                                              X[self.censored_time_column], self.intensive))


def _collinear_column(design, names):
    """Name of the first column that adds no rank to the ones before it."""
    for j in range(1, design.shape[1] + 1):
        if np.linalg.matrix_rank(design[:, :j]) < j:
            return names[j - 1]
    return None


class BaselineLinearModel(RegressorMixin, BaseEstimator):
    """Ordinary least squares with an intercept.

    With ``standardize`` the predictors are centred and scaled on the
    training data first, so coefficients are comparable in size.
    """

    def __init__(self, standardize=False):
        self.standardize = standardize

    def fit(self, X, y):
        X = _check_frame(X)
        y = _check_target(y, len(X))
        if len(X) < 3:
            raise ValidationError("need at least 3 observations")
        self.feature_names_in_ = np.array(X.columns, dtype=object)
        self.n_features_in_ = X.shape[1]
        self.train_sd_ = X.to_numpy(dtype=float).std(axis=0, ddof=1)
        if self.standardize:
            self.scaler_ = FeatureScaler().fit(X)
            if len(self.scaler_.columns_) != X.shape[1]:
                dropped = [c for c in X.columns if c not in self.scaler_.columns_]
                raise ValidationError(f"design matrix is rank deficient: constant column {dropped[0]!r}")
            Z = self.scaler_.transform(X).to_numpy()
        else:
            self.scaler_ = None
            Z = X.to_numpy(dtype=float)
        design = np.column_stack([np.ones(len(Z)), Z])
        names = ["intercept"] + list(X.columns)
        if np.linalg.matrix_rank(design) < design.shape[1]:
            raise ValidationError(
                f"design matrix is rank deficient: column {_collinear_column(design, names)!r} is collinear")
        beta, *_ = np.linalg.lstsq(design, y, rcond=None)
        self.intercept_ = float(beta[0])
        self.coef_ = beta[1:]
        self.residuals_ = y - design @ beta
        return self

    def _design(self, X):
        X = _check_frame(X, self.feature_names_in_)
        if self.scaler_ is not None:
            return self.scaler_.transform(X).to_numpy()
        return X.to_numpy(dtype=float)

    def predict(self, X):
        check_is_fitted(self, "coef_")
        return self.intercept_ + self._design(X) @ self.coef_

    def standardized_coef(self):
        """Coefficients per training standard deviation of each predictor."""
        check_is_fitted(self, "coef_")
        if self.scaler_ is not None:
            return self.coef_.copy()
        return self.coef_ * self.train_sd_

    def _state(self):
        return {"intercept": self.intercept_, "coef": self.coef_.tolist(),
                "residuals": self.residuals_.tolist(), "train_sd": self.train_sd_.tolist(),
                "scaler": _scaler_state(self.scaler_)}

    def _load_state(self, state):
        self.intercept_ = state["intercept"]
        self.coef_ = np.array(state["coef"], dtype=float)
        self.residuals_ = np.array(state["residuals"], dtype=float)
        self.train_sd_ = np.array(state["train_sd"], dtype=float)
        self.scaler_ = _scaler_from_state(state["scaler"])


@dataclass
class _Tree:
    feature: list = field(default_factory=list)
    threshold: list = field(default_factory=list)
    left: list = field(default_factory=list)
    right: list = field(default_factory=list)
    value: list = field(default_factory=list)

    def add_leaf(self, value):
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        return len(self.value) - 1

    def predict(self, Z):
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        node = np.zeros(len(Z), dtype=int)
        rows = np.arange(len(Z))
        while True:
            f = feature[node]
            active = f >= 0
            if not active.any():
                break
            go_left = Z[rows[active], f[active]] < threshold[node[active]]
            node[active] = np.where(go_left, left[node[active]], right[node[active]])
        return np.asarray(self.value)[node]

    def as_dict(self):
        return {"feature": self.feature, "threshold": self.threshold,
                "left": self.left, "right": self.right, "value": self.value}


class _HistTreeBuilder:
    """Regression trees on pre-binned features, split by penalized squared-error gain."""

    def __init__(self, Z, max_depth, min_samples_leaf, reg_lambda, max_bins):
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.reg_lambda = reg_lambda
        n, p = Z.shape
        self.cuts = []
        codes = np.empty((n, p), dtype=np.int64)
        for j in range(p):
            uniq = np.unique(Z[:, j])
            if len(uniq) > max_bins:
                qs = np.quantile(Z[:, j], np.linspace(0, 1, max_bins + 1)[1:-1], method="lower")
                uniq = np.unique(np.concatenate([qs, uniq[-1:]]))
            # a cut at value v sends x < v left; the smallest value is never a cut
            cuts = uniq[1:]
            self.cuts.append(cuts)
            codes[:, j] = np.searchsorted(cuts, Z[:, j], side="right")
        self.n_bins = max(1, max(len(c) for c in self.cuts) + 1) if p else 1
        self.codes = codes
        self.offsets = np.arange(p) * self.n_bins
        self.gain = np.zeros(p)

    def build(self, residual):
        tree = _Tree()
        self._grow(tree, np.arange(len(residual)), residual, 0)
        return tree

    def _leaf_value(self, g, n):
        return g / (n + self.reg_lambda)

    def _grow(self, tree, idx, r, depth):
        g_tot = float(np.sum(r[idx]))
        n_tot = len(idx)
        node = tree.add_leaf(self._leaf_value(g_tot, n_tot))
        if depth >= self.max_depth or n_tot < 2 * self.min_samples_leaf:
            return node
        p = self.codes.shape[1]
        if p == 0:
            return node
        flat = (self.codes[idx] + self.offsets).ravel()
        size = p * self.n_bins
        g_hist = np.bincount(flat, weights=np.repeat(r[idx], p), minlength=size).reshape(p, self.n_bins)
        n_hist = np.bincount(flat, minlength=size).reshape(p, self.n_bins)
        gl = np.cumsum(g_hist, axis=1)[:, :-1]
        nl = np.cumsum(n_hist, axis=1)[:, :-1]
        gr, nr = g_tot - gl, n_tot - nl
        lam = self.reg_lambda
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = gl ** 2 / (nl + lam) + gr ** 2 / (nr + lam) - g_tot ** 2 / (n_tot + lam)
        valid = (nl >= self.min_samples_leaf) & (nr >= self.min_samples_leaf)
        gain = np.where(valid & np.isfinite(gain), gain, -np.inf)
        best = int(np.argmax(gain))
        j, c = divmod(best, gain.shape[1])
        if not gain[j, c] > 1e-12 * max(1.0, g_tot ** 2 / (n_tot + lam)):
            return node
        self.gain[j] += gain[j, c]
        go_left = self.codes[idx, j] <= c
        tree.feature[node] = j
        tree.threshold[node] = float(self.cuts[j][c])
        tree.left[node] = self._grow(tree, idx[go_left], r, depth + 1)
        tree.right[node] = self._grow(tree, idx[~go_left], r, depth + 1)
        return node


class BoostedRegressor(RegressorMixin, BaseEstimator):
    """Squared-error gradient boosting.

    Each round fits a base learner to the current residuals and adds it with
    shrinkage ``learning_rate``. Numeric predictors are standardized on the
    training data; 0/1 columns pass through unscaled. For
    ``linear_interactions`` the pairwise products are built after scaling.

    Parameters
    ----------
    booster : {"linear", "linear_interactions", "tree"}
    n_rounds : int
        Number of boosting rounds.
    learning_rate : float
        Shrinkage in (0, 1].
    max_depth : int
        Depth limit of each tree (tree booster only).
    reg_lambda : float
        L2 penalty on ridge coefficients or on leaf values.
    min_samples_leaf : int
        Minimum training rows per leaf (tree booster only).
    max_bins : int
        Candidate split points per feature (tree booster only).
    seed : int
        Recorded for reproducibility; fitting uses no subsampling.
    """

    def __init__(self, booster="tree", n_rounds=300, learning_rate=0.1, max_depth=4,
                 reg_lambda=1.0, min_samples_leaf=20, max_bins=64, seed=0):
        self.booster = booster
        self.n_rounds = n_rounds
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.reg_lambda = reg_lambda
        self.min_samples_leaf = min_samples_leaf
        self.max_bins = max_bins
        self.seed = seed

    def _validate_params(self):
        if self.booster not in BOOSTERS:
            raise ValidationError(f"unknown booster {self.booster!r}; expected one of {BOOSTERS}")
        if int(self.n_rounds) < 1:
            raise ValidationError("n_rounds must be at least 1")
        if not 0 < self.learning_rate <= 1:
            raise ValidationError("learning_rate must lie in (0, 1]")
        if self.booster == "tree" and int(self.max_depth) < 1:
            raise ValidationError("max_depth must be at least 1")
        if self.reg_lambda < 0:
            raise ValidationError("reg_lambda must be nonnegative")

    def _transform(self, X):
        Z = self.scaler_.transform(X)
        if self.expander_ is not None:
            Z = self.expander_.transform(Z)
        return Z.to_numpy(dtype=float)

    def fit(self, X, y):
        self._validate_params()
        X = _check_frame(X)
        y = _check_target(y, len(X))
        if len(X) == 0:
            raise ValidationError("cannot fit on zero rows")
        self.feature_names_in_ = np.array(X.columns, dtype=object)
        self.n_features_in_ = X.shape[1]
        indicators = binary_columns(X)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            self.scaler_ = FeatureScaler(passthrough=indicators).fit(X)
        self.expander_ = None
        if self.booster == "linear_interactions":
            self.expander_ = InteractionExpander(
                indicators=[c for c in indicators if c in self.scaler_.columns_]
            ).fit(self.scaler_.transform(X))
        Z = self._transform(X)
        self.columns_ = (list(self.expander_.get_feature_names_out()) if self.expander_ is not None
                         else list(self.scaler_.columns_))
        self.base_score_ = float(np.mean(y))
        self.coef_ = np.zeros(Z.shape[1])
        self.intercept_ = self.base_score_
        self.trees_ = []
        self.gain_ = np.zeros(Z.shape[1])
        resid = y - self.base_score_
        losses = [float(np.mean(resid ** 2))]
        if not np.std(y) > 0:
            warnings.warn("target has zero variance; fitting a constant model", stacklevel=2)
            self.train_loss_ = np.array(losses * (int(self.n_rounds) + 1))
            return self
        eta = float(self.learning_rate)
        if self.booster == "tree":
            builder = _HistTreeBuilder(Z, int(self.max_depth), int(self.min_samples_leaf),
                                       float(self.reg_lambda), int(self.max_bins))
            for _ in range(int(self.n_rounds)):
                tree = builder.build(resid)
                tree.value = [eta * v for v in tree.value]
                self.trees_.append(tree)
                resid = resid - tree.predict(Z)
                losses.append(float(np.mean(resid ** 2)))
            self.gain_ = builder.gain.copy()
        else:
            # ridge learner on the centred design; the intercept is left unpenalized
            zbar = Z.mean(axis=0)
            Zc = Z - zbar
            G = Zc.T @ Zc
            c = Zc.T @ (y - self.base_score_)
            lam = max(float(self.reg_lambda), 1e-10 * max(1.0, float(np.trace(G)) / max(len(G), 1)))
            chol = cho_factor(G + lam * np.eye(len(G)))
            b = np.zeros(len(G))
            for _ in range(int(self.n_rounds)):
                step = eta * cho_solve(chol, c - G @ b)
                b = b + step
                resid = resid - Zc @ step
                losses.append(float(np.mean(resid ** 2)))
            self.coef_ = b
            self.intercept_ = float(self.base_score_ - zbar @ b)
        self.train_loss_ = np.array(losses)
        return self

    def predict(self, X):
        check_is_fitted(self, "base_score_")
        X = _check_frame(X, self.feature_names_in_)
        Z = self._transform(X)
        if self.booster == "tree":
            out = np.full(len(Z), self.base_score_)
            for tree in self.trees_:
                out = out + tree.predict(Z)
            return out
        return self.intercept_ + Z @ self.coef_

    def raw_coef(self):
        """``(intercept, coef)`` of the linear booster in the units of the input columns.

        Columns dropped as constant get a zero coefficient.
        """
        check_is_fitted(self, "base_score_")
        if self.booster != "linear":
            raise ValidationError("raw coefficients exist only for the linear booster")
        s = self.scaler_
        coef = dict(zip(self.columns_, self.coef_))
        scale = dict(zip(s.scaled_, s.scale_))
        mean = dict(zip(s.scaled_, s.mean_))
        raw = np.array([coef.get(c, 0.0) / scale.get(c, 1.0) for c in self.feature_names_in_])
        intercept = self.intercept_ - sum(coef[c] * mean[c] / scale[c] for c in s.scaled_)
        return float(intercept), raw

    def _state(self):
        return {
            "scaler": _scaler_state(self.scaler_),
            "interaction_pairs": None if self.expander_ is None else [list(p) for p in self.expander_.pairs_],
            "interaction_indicators": None if self.expander_ is None else list(self.expander_.indicators or []),
            "columns": self.columns_,
            "base_score": self.base_score_,
            "intercept": self.intercept_,
            "coef": self.coef_.tolist(),
            "gain": self.gain_.tolist(),
            "trees": [t.as_dict() for t in self.trees_],
            "train_loss": self.train_loss_.tolist(),
        }

    def _load_state(self, state):
        self.scaler_ = _scaler_from_state(state["scaler"])
        if state["interaction_pairs"] is None:
            self.expander_ = None
        else:
            exp = InteractionExpander(indicators=state["interaction_indicators"])
            exp.feature_names_in_ = np.array(self.scaler_.columns_, dtype=object)
            exp.pairs_ = [tuple(p) for p in state["interaction_pairs"]]
            self.expander_ = exp
        self.columns_ = list(state["columns"])
        self.base_score_ = state["base_score"]
        self.intercept_ = state["intercept"]
        self.coef_ = np.array(state["coef"], dtype=float)
        self.gain_ = np.array(state["gain"], dtype=float)
        self.trees_ = [_Tree(**t) for t in state["trees"]]
        self.train_loss_ = np.array(state["train_loss"], dtype=float)


def _scaler_state(scaler):
    if scaler is None:
        return None
    return {"feature_names_in": list(scaler.feature_names_in_), "columns": list(scaler.columns_),
            "scaled": list(scaler.scaled_), "mean": scaler.mean_.tolist(),
            "scale": scaler.scale_.tolist(), "passthrough": scaler.passthrough}


def _scaler_from_state(state):
    if state is None:
        return None
    s = FeatureScaler(passthrough=state["passthrough"])
    s.feature_names_in_ = np.array(state["feature_names_in"], dtype=object)
    s.columns_ = list(state["columns"])
    s.scaled_ = list(state["scaled"])
    s.mean_ = np.array(state["mean"], dtype=float)
    s.scale_ = np.array(state["scale"], dtype=float)
    return s


def fit_baseline_lm(T, x, y) -> BaselineLinearModel:
    """OLS of the censored metric on censored time and the observed metric."""
    X = pd.DataFrame({"censored_time": np.asarray(T, dtype=float),
                      "observed_metric": np.asarray(x, dtype=float)})
    return BaselineLinearModel().fit(X, y)


def fit_boosted(X, y, booster="tree", **params) -> BoostedRegressor:
    return BoostedRegressor(booster=booster, **params).fit(X, y)


@dataclass
class FittedModel:
    """A trained estimator with the context needed to use and audit it."""

    kind: str
    level: str
    target: str
    estimator: object
    metadata: dict = field(default_factory=dict)

    def predict(self, X):
        return self.estimator.predict(X)

    @property
    def feature_names(self):
        return list(getattr(self.estimator, "feature_names_in_", []))

    def to_dict(self):
        est = self.estimator
        d = {"format_version": FORMAT_VERSION, "kind": self.kind, "level": self.level,
             "target": self.target, "estimator": type(est).__name__,
             "params": est.get_params(), "schema": self.feature_names,
             "metadata": self.metadata}
        if hasattr(est, "_state"):
            d["state"] = est._state()
        return d

    @classmethod
    def from_dict(cls, d):
        if d.get("format_version") != FORMAT_VERSION:
            raise ValidationError(f"unsupported model format version {d.get('format_version')!r}")
        types = {c.__name__: c for c in (ScalingEstimator, BaselineLinearModel, BoostedRegressor)}
        est = types[d["estimator"]](**d["params"])
        if isinstance(est, ScalingEstimator):
            est.fitted_ = True
        else:
            est.feature_names_in_ = np.array(d["schema"], dtype=object)
            est.n_features_in_ = len(d["schema"])
            est._load_state(d["state"])
        return cls(d["kind"], d["level"], d["target"], est, d.get("metadata", {}))


def save_model(model: FittedModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path) -> FittedModel:
    with open(path, encoding="utf-8") as fh:
        return FittedModel.from_dict(json.load(fh))


def aggregate_to_game(estimates, metric, weights=None):
    """Combine subtrack estimates of one player-game into a game estimate.

    Summed metrics add up; mean metrics (acceleration density) take the
    mean weighted by each subtrack's sample time.
    """
    estimates = np.asarray(estimates, dtype=float)
    if metric in MEAN_METRICS:
        if weights is None:
            raise ValidationError(f"{metric} needs subtrack time weights")
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if total <= 0:
            return float("nan")
        return float(np.dot(weights, estimates) / total)
    return float(estimates.sum())


def variable_importance(model):
    """Predictors ranked by importance, as ``[(name, score), ...]``.

    Linear models use absolute coefficients on standardized predictors,
    tree ensembles the total squared-error gain of their splits.
    """
    est = model.estimator if isinstance(model, FittedModel) else model
    if isinstance(est, ScalingEstimator):
        return []
    if isinstance(est, BaselineLinearModel):
        names = list(est.feature_names_in_)
        scores = np.abs(est.standardized_coef())
    elif isinstance(est, BoostedRegressor):
        names = list(est.columns_)
        scores = est.gain_ if est.booster == "tree" else np.abs(est.coef_)
    else:
        raise TypeError(f"no importance for {type(est).__name__}")
    order = sorted(range(len(names)), key=lambda i: (-scores[i], names[i]))
    return [(names[i], float(scores[i])) for i in order]
