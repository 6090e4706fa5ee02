import warnings

import numpy as np
import pandas as pd
import pytest

from offscreen.exceptions import ValidationError
from offscreen.features import (GAME_FEATURES, OBSERVED_BLOCK, SUBTRACK_FEATURES, FeatureScaler,
                                InteractionExpander, binary_columns, game_features, observed_block,
                                position_indicators, subtrack_features, target_column)
from offscreen.kinematics import derive_kinematics
from offscreen.metrics import LoadMetrics, compute_load_metrics
from offscreen.tracking import segment_subtracks

from conftest import track_from_speeds


def _setup(speeds, mask):
    tr = track_from_speeds(speeds)
    kin = derive_kinematics(tr)
    mask = np.asarray(mask, dtype=bool)
    subs = segment_subtracks(tr, mask)
    observed = compute_load_metrics(kin, mask)
    return tr, kin, mask, subs, observed


def test_position_indicators():
    assert position_indicators("defender") == {"is_midfielder": 0.0, "is_forward": 0.0}
    assert position_indicators("forward") == {"is_midfielder": 0.0, "is_forward": 1.0}
    with pytest.raises(ValidationError):
        position_indicators("keeper")


def test_constant_boundary_speeds():
    n = 100
    mask = np.ones(n + 1, dtype=bool)
    mask[40:60] = False
    _, kin, mask, subs, obs = _setup([4.0] * n, mask)
    f = subtrack_features(subs[1], kin, obs, "midfielder", mask)
    assert f["pre_velocity"] == pytest.approx(4.0) and f["post_velocity"] == pytest.approx(4.0)
    assert f["pre_imputed"] == 0.0 and f["post_imputed"] == 0.0
    assert f["offscreen_time"] == pytest.approx(2.0)
    assert f["offscreen_distance"] == pytest.approx(21 * 0.4)
    assert list(f) == SUBTRACK_FEATURES


def test_censored_start_imputes_pre_window():
    speeds = np.linspace(1, 5, 80)
    mask = np.ones(81, dtype=bool)
    mask[:10] = False
    _, kin, mask, subs, obs = _setup(speeds, mask)
    f = subtrack_features(subs[0], kin, obs, "defender", mask)
    assert f["pre_imputed"] == 1.0 and f["gap_imputed"] == 1.0
    assert f["offscreen_distance"] == 0.0
    assert f["pre_velocity"] == pytest.approx(obs.total_distance / obs.elapsed)
    assert f["post_imputed"] == 0.0


def test_boundary_window_is_twenty_sample_mean():
    speeds = np.arange(3.0, 3.0 + 100 * 0.05, 0.05)[:100]
    mask = np.ones(101, dtype=bool)
    mask[50:70] = False
    _, kin, mask, subs, obs = _setup(speeds, mask)
    f = subtrack_features(subs[1], kin, obs, "forward", mask)
    # frames 30..49 carry speed samples 29..48; frames 70..89 carry samples 69..88
    assert f["pre_velocity"] == pytest.approx(np.mean(speeds[29:49]), rel=1e-12)
    assert f["post_velocity"] == pytest.approx(np.mean(speeds[69:89]), rel=1e-12)


def test_short_observed_run_limits_window():
    speeds = np.full(60, 2.0)
    speeds[22:30] = 6.0
    mask = np.zeros(61, dtype=bool)
    mask[23:31] = True  # short observed run before the censored stretch
    mask[45:] = True
    _, kin, mask, subs, obs = _setup(speeds, mask)
    sub = [s for s in subs if not s.observed][1]
    f = subtrack_features(sub, kin, obs, "forward", mask)
    assert f["pre_velocity"] == pytest.approx(6.0)


def test_observed_subtrack_rejected():
    _, kin, mask, subs, obs = _setup([1.0] * 10, np.ones(11, dtype=bool))
    with pytest.raises(ValidationError):
        subtrack_features(subs[0], kin, obs, "forward", mask)


def test_game_features_fractions():
    _, kin, mask, _, obs = _setup([3.0] * 100, np.ones(101, dtype=bool))
    f = game_features(obs, "defender", 0.0, 10.1)
    assert f["censored_total_time"] == 0.0 and f["censored_fraction"] == 0.0
    assert list(f) == GAME_FEATURES
    half = game_features(obs, "defender", 5.0, 10.0)
    assert half["censored_fraction"] == 0.5
    with pytest.raises(ValidationError, match="never"):
        game_features(LoadMetrics(), "defender", 10.0, 10.0)


def test_game_features_match_metrics_on_observed_mask(small_tables, small_corpus):
    _, tables = small_tables
    row = tables.games.iloc[0]
    obs = tables.metrics[(tables.metrics.game_id == row.game_id) & (tables.metrics.player_id == row.player_id)
                         & (tables.metrics.scope == "observed")].iloc[0]
    assert row["observed_total_distance"] == obs["total_distance"]
    assert row["observed_time_vband2"] == obs["time_vband2"]
    assert row["observed_avg_acceleration"] == obs["acceleration_density"]
    full = tables.metrics[(tables.metrics.game_id == row.game_id) & (tables.metrics.player_id == row.player_id)
                          & (tables.metrics.scope == "full")].iloc[0]
    assert row[target_column("total_distance")] == pytest.approx(full["total_distance"] - obs["total_distance"])


def test_observed_block_keys():
    assert list(observed_block(LoadMetrics())) == OBSERVED_BLOCK


def test_scaler_symmetric_case():
    s = FeatureScaler().fit(pd.DataFrame({"a": [1.0, 2.0, 3.0]}))
    np.testing.assert_allclose(s.transform(pd.DataFrame({"a": [1.0, 2.0, 3.0]}))["a"], [-1, 0, 1])


def test_scaler_two_pass_oracle_and_idempotence():
    rng = np.random.default_rng(0)
    col = rng.gamma(2.0, 3.0, 57)
    s = FeatureScaler().fit(pd.DataFrame({"a": col}))
    mean = sum(col) / len(col)
    var = sum((v - mean) ** 2 for v in col) / (len(col) - 1)
    st = s.stats()
    assert st.mean[0] == pytest.approx(mean, rel=1e-12)
    assert st.scale[0] == pytest.approx(var ** 0.5, rel=1e-12)
    z = s.transform(pd.DataFrame({"a": col}))
    again = FeatureScaler().fit(z).transform(z)
    np.testing.assert_allclose(again, z, atol=1e-9)
    np.testing.assert_allclose(s.inverse_transform(z)["a"], col, rtol=1e-12)


def test_scaler_drops_constant_and_passes_indicators():
    df = pd.DataFrame({"a": [1.0, 2.0, 4.0], "c": [7.0, 7.0, 7.0], "ind": [0.0, 1.0, 1.0]})
    with pytest.warns(UserWarning, match="constant"):
        s = FeatureScaler(passthrough=["ind"]).fit(df)
    out = s.transform(df)
    assert list(out.columns) == ["a", "ind"]
    np.testing.assert_array_equal(out["ind"], df["ind"])
    assert list(s.get_feature_names_out()) == ["a", "ind"]
    assert s.get_params() == {"passthrough": ["ind"]}


def test_scaler_empty():
    with pytest.raises(ValidationError):
        FeatureScaler().fit(pd.DataFrame({"a": []}))


def test_binary_columns():
    df = pd.DataFrame({"a": [0.0, 1.0], "b": [0.0, 2.0], "c": [1, 1]})
    assert binary_columns(df) == ["a", "c"]


def test_interaction_expander():
    df = pd.DataFrame({"a": [1.0, 2.0], "b": [3.0, 4.0], "i": [0.0, 1.0], "j": [1.0, 0.0]})
    ex = InteractionExpander(indicators=["i", "j"]).fit(df)
    out = ex.transform(df)
    assert "i:j" not in out.columns
    assert list(out.columns[:4]) == ["a", "b", "i", "j"]
    np.testing.assert_array_equal(out["a:b"], [3.0, 8.0])
    np.testing.assert_array_equal(out["b:i"], [0.0, 4.0])
    assert len(ex.pairs_) == 5
