import json

import numpy as np
import pandas as pd
import pytest

from offscreen.exceptions import SchemaError, ValidationError
from offscreen.models import (BaselineLinearModel, BoostedRegressor, FittedModel, ScalingEstimator,
                              aggregate_to_game, fit_baseline_lm, fit_boosted, load_model,
                              save_model, scaling_estimate, variable_importance)


def rel_rmse(y, p):
    return float(np.sqrt(np.mean((y - p) ** 2)) / np.sqrt(np.mean(y ** 2)))


def frame(rng, n, p, names=None):
    names = names or [f"f{i + 1}" for i in range(p)]
    return pd.DataFrame(rng.normal(size=(n, p)), columns=names)


# ---- scaling estimator ---------------------------------------------------

def test_scaling_formula():
    assert scaling_estimate(100.0, 50.0, 25.0) == 50.0
    assert scaling_estimate(100.0, 50.0, 0.0) == 0.0
    assert scaling_estimate(100.0, 50.0, 50.0) == 100.0
    assert scaling_estimate(0.8, 50.0, 10.0, intensive=True) == 0.8
    np.testing.assert_allclose(scaling_estimate([1.0, 2.0], [1.0, 4.0], [2.0, 2.0]), [2.0, 1.0])


def test_scaling_rejects_bad_times():
    with pytest.raises(ValidationError):
        scaling_estimate(1.0, 0.0, 1.0)
    with pytest.raises(ValidationError):
        scaling_estimate(1.0, 1.0, -1.0)


def test_scaling_estimator_columns():
    df = pd.DataFrame({"obs": [10.0, 20.0], "observed_time": [5.0, 10.0], "censored_total_time": [5.0, 1.0]})
    est = ScalingEstimator(observed_column="obs").fit()
    np.testing.assert_allclose(est.predict(df), [10.0, 2.0])


# ---- baseline OLS --------------------------------------------------------

def test_ols_exact_recovery():
    rng = np.random.default_rng(0)
    T, x = rng.uniform(100, 2000, 40), rng.uniform(500, 5000, 40)
    m = fit_baseline_lm(T, x, 2 + 3 * T + 0.5 * x)
    assert m.intercept_ == pytest.approx(2, abs=1e-8)
    np.testing.assert_allclose(m.coef_, [3, 0.5], atol=1e-8)


def test_ols_constant_target():
    rng = np.random.default_rng(1)
    m = fit_baseline_lm(rng.normal(size=20), rng.normal(size=20), np.full(20, 7.5))
    assert m.intercept_ == pytest.approx(7.5)
    np.testing.assert_allclose(m.coef_, 0, atol=1e-12)


def test_ols_normal_equations_oracle():
    rng = np.random.default_rng(2)
    X = frame(rng, 60, 2)
    y = 1.0 + X.to_numpy() @ [2.0, -1.0] + rng.normal(0, 0.5, 60)
    m = BaselineLinearModel().fit(X, y)
    A = np.column_stack([np.ones(60), X.to_numpy()])
    beta = np.linalg.solve(A.T @ A, A.T @ y)
    np.testing.assert_allclose([m.intercept_, *m.coef_], beta, rtol=1e-10, atol=1e-10)
    np.testing.assert_allclose(y - m.predict(X), m.residuals_, atol=1e-10)


def test_ols_standardized_zero_row_gives_intercept():
    rng = np.random.default_rng(3)
    X = frame(rng, 30, 2) * [5.0, 0.1] + [100.0, -3.0]
    y = rng.normal(size=30)
    m = BaselineLinearModel(standardize=True).fit(X, y)
    mean_row = pd.DataFrame([X.mean().to_numpy()], columns=X.columns)
    assert m.predict(mean_row)[0] == pytest.approx(m.intercept_)
    plain = BaselineLinearModel().fit(X, y)
    np.testing.assert_allclose(m.standardized_coef(), plain.standardized_coef(), rtol=1e-9)


def test_ols_rank_deficiency_names_column():
    rng = np.random.default_rng(4)
    X = frame(rng, 20, 2)
    X["dup"] = 2 * X["f1"]
    with pytest.raises(ValidationError, match="dup"):
        BaselineLinearModel().fit(X, rng.normal(size=20))
    with pytest.raises(ValidationError):
        BaselineLinearModel().fit(X.iloc[:2, :1], [1.0, 2.0])


def test_ols_input_checks():
    rng = np.random.default_rng(5)
    X = frame(rng, 10, 2)
    with pytest.raises(ValidationError):
        BaselineLinearModel().fit(X, np.ones(9))
    y = rng.normal(size=10)
    y[3] = np.nan
    with pytest.raises(ValidationError):
        BaselineLinearModel().fit(X, y)
    m = BaselineLinearModel().fit(X, rng.normal(size=10))
    with pytest.raises(SchemaError, match="f2"):
        m.predict(X[["f1"]])


# ---- boosting ------------------------------------------------------------

def test_linear_booster_realizable():
    rng = np.random.default_rng(6)
    X = frame(rng, 200, 4)
    y = 3 + X.to_numpy() @ [1.0, -2.0, 0.5, 4.0]
    m = BoostedRegressor("linear", n_rounds=300).fit(X, y)
    assert np.sqrt(np.mean((m.predict(X) - y) ** 2)) < 1e-6 * y.std()
    b0, b = m.raw_coef()
    assert b0 == pytest.approx(3, abs=1e-6)
    np.testing.assert_allclose(b, [1.0, -2.0, 0.5, 4.0], atol=1e-6)


def test_linear_booster_converges_to_ols():
    rng = np.random.default_rng(7)
    X = frame(rng, 80, 3)
    y = X.to_numpy() @ [1.0, 2.0, 3.0] + rng.normal(size=80)
    m = BoostedRegressor("linear", n_rounds=500, reg_lambda=5.0).fit(X, y)
    ols = BaselineLinearModel().fit(X, y)
    np.testing.assert_allclose(m.predict(X), ols.predict(X), atol=1e-6)


def test_stump_equals_group_means():
    g = np.array([0.0] * 30 + [1.0] * 50)
    y = np.where(g == 1, 5.0, 2.0) + np.random.default_rng(8).normal(0, 0.3, 80)
    X = pd.DataFrame({"g": g})
    m = BoostedRegressor("tree", n_rounds=1, learning_rate=1.0, max_depth=1, reg_lambda=0.0,
                         min_samples_leaf=1).fit(X, y)
    pred = m.predict(X)
    assert pred[0] == pytest.approx(y[g == 0].mean(), rel=1e-12)
    assert pred[-1] == pytest.approx(y[g == 1].mean(), rel=1e-12)


def test_interaction_target():
    rng = np.random.default_rng(9)
    X = frame(rng, 400, 2)
    y = X["f1"].to_numpy() * X["f2"].to_numpy()
    lin = BoostedRegressor("linear", n_rounds=300).fit(X, y)
    inter = BoostedRegressor("linear_interactions", n_rounds=300, reg_lambda=1.0).fit(X, y)
    assert rel_rmse(y, lin.predict(X)) > 0.9
    assert rel_rmse(y, inter.predict(X)) < 0.05
    # direct least squares on the expanded design reaches the same fit
    A = np.column_stack([np.ones(400), X, X["f1"] * X["f2"]])
    beta, *_ = np.linalg.lstsq(A, y, rcond=None)
    np.testing.assert_allclose(inter.predict(X), A @ beta, atol=0.05 * y.std())


@pytest.mark.parametrize("booster", ["linear", "linear_interactions", "tree"])
def test_training_loss_nonincreasing(booster):
    rng = np.random.default_rng(10)
    X = frame(rng, 150, 3)
    y = np.sin(X["f1"].to_numpy()) + X["f2"].to_numpy() ** 2 + rng.normal(0, 0.2, 150)
    m = BoostedRegressor(booster, n_rounds=50, min_samples_leaf=5).fit(X, y)
    assert len(m.train_loss_) == 51
    assert np.all(np.diff(m.train_loss_) <= 1e-12 * m.train_loss_[0])
    assert m.train_loss_[0] == pytest.approx(np.var(y))


def test_tree_leaf_values_penalized():
    X = pd.DataFrame({"g": [0.0] * 10 + [1.0] * 10})
    y = np.array([0.0] * 10 + [10.0] * 10)
    m = BoostedRegressor("tree", n_rounds=1, learning_rate=1.0, max_depth=1, reg_lambda=10.0,
                         min_samples_leaf=1).fit(X, y)
    # residual sums +-50 over 10 rows shrink to 50 / (10 + 10)
    assert m.predict(X)[-1] == pytest.approx(5.0 + 2.5)


def test_constant_target_warns():
    X = frame(np.random.default_rng(11), 20, 2)
    with pytest.warns(UserWarning, match="zero variance"):
        m = BoostedRegressor("tree").fit(X, np.full(20, 3.0))
    np.testing.assert_allclose(m.predict(X), 3.0)


@pytest.mark.parametrize("params", [{"booster": "forest"}, {"n_rounds": 0}, {"learning_rate": 0.0},
                                    {"learning_rate": 1.5}, {"max_depth": 0}, {"reg_lambda": -1}])
def test_invalid_params(params):
    X = frame(np.random.default_rng(12), 20, 2)
    with pytest.raises(ValidationError):
        BoostedRegressor(**params).fit(X, np.arange(20.0))


def test_sklearn_params_round_trip():
    m = BoostedRegressor("linear", n_rounds=7, reg_lambda=2.5)
    p = m.get_params()
    assert p["n_rounds"] == 7 and p["reg_lambda"] == 2.5
    assert BoostedRegressor(**p).get_params() == p
    assert m.set_params(learning_rate=0.3).learning_rate == 0.3


def test_raw_coef_only_for_linear():
    X = frame(np.random.default_rng(13), 30, 2)
    m = BoostedRegressor("tree", n_rounds=2).fit(X, np.arange(30.0))
    with pytest.raises(ValidationError):
        m.raw_coef()


@pytest.mark.parametrize("booster", ["linear", "linear_interactions", "tree"])
def test_serialization_bit_identical(tmp_path, booster):
    rng = np.random.default_rng(14)
    X = frame(rng, 120, 3)
    X["ind"] = (rng.random(120) < 0.5).astype(float)
    y = X["f1"] * X["ind"] + rng.normal(0, 0.1, 120)
    fm = FittedModel("boosted", "game", "total_distance",
                     fit_boosted(X, y, booster, n_rounds=20, min_samples_leaf=5), {"seed": 1})
    path = tmp_path / "m.json"
    save_model(fm, path)
    back = load_model(path)
    assert np.array_equal(back.predict(X), fm.predict(X))
    save_model(back, tmp_path / "again.json")
    assert path.read_bytes() == (tmp_path / "again.json").read_bytes()
    assert back.metadata == {"seed": 1} and back.feature_names == list(X.columns)


def test_baseline_serialization(tmp_path):
    rng = np.random.default_rng(15)
    X = frame(rng, 40, 2)
    fm = FittedModel("baseline_lm", "game", "total_distance",
                     BaselineLinearModel().fit(X, rng.normal(size=40)))
    save_model(fm, tmp_path / "b.json")
    back = load_model(tmp_path / "b.json")
    assert np.array_equal(back.predict(X), fm.predict(X))
    np.testing.assert_array_equal(back.estimator.residuals_, fm.estimator.residuals_)


def test_unknown_format_version(tmp_path):
    fm = FittedModel("scaling", "game", "total_distance", ScalingEstimator().fit())
    d = fm.to_dict()
    d["format_version"] = 99
    (tmp_path / "x.json").write_text(json.dumps(d))
    with pytest.raises(ValidationError, match="format version"):
        load_model(tmp_path / "x.json")


# ---- aggregation and importance -----------------------------------------

def test_aggregate_sum_and_weighted_mean():
    assert aggregate_to_game([30, 20, 50], "total_distance") == 100
    assert aggregate_to_game([42.0], "total_distance") == 42.0
    assert aggregate_to_game([1.0, 2.0], "acceleration_density", [10, 30]) == pytest.approx(1.75)
    with pytest.raises(ValidationError):
        aggregate_to_game([1.0], "acceleration_density")
    assert np.isnan(aggregate_to_game([1.0], "acceleration_density", [0.0]))


def test_importance_orders_by_absolute_coefficient():
    rng = np.random.default_rng(16)
    X = frame(rng, 500, 3, ["feature1", "feature2", "feature3"])
    X = (X - X.mean()) / X.std()
    y = X.to_numpy() @ [0.1, -5.0, 2.0]
    m = BoostedRegressor("linear", n_rounds=300).fit(X, y)
    assert [n for n, _ in variable_importance(m)] == ["feature2", "feature3", "feature1"]
    single = BoostedRegressor("linear", n_rounds=10).fit(X[["feature3"]], y)
    assert variable_importance(single)[0][0] == "feature3"


def test_importance_planted_dominant_feature():
    rng = np.random.default_rng(17)
    X = frame(rng, 600, 5)
    y = 10 * X["f3"].to_numpy() + X.drop(columns="f3").to_numpy() @ np.ones(4) + rng.normal(0, 0.5, 600)
    for booster in ("linear", "tree"):
        m = BoostedRegressor(booster, n_rounds=100).fit(X, y)
        assert variable_importance(m)[0][0] == "f3"
    ols = BaselineLinearModel().fit(X, y)
    assert variable_importance(ols)[0][0] == "f3"
    assert variable_importance(ScalingEstimator()) == []
