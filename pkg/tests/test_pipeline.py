import logging

import numpy as np
import pytest

from offscreen.exceptions import ValidationError
from offscreen.features import GAME_FEATURES, SUBTRACK_FEATURES, target_column
from offscreen.pipeline import build_tables, censor_corpus
from offscreen.tracking import CameraWindow, Event, segment_subtracks

from conftest import make_track

ADDITIVE = ["total_distance", "high_speed_distance", "very_high_speed_distance", "time_vband1",
            "time_vband2", "time_vband3", "total_acceleration", "time_aband1", "time_aband2", "time_aband3"]


def test_subtrack_targets_add_up_to_game_targets(small_tables):
    _, tables = small_tables
    sums = tables.subtracks.groupby(["game_id", "player_id"])[[target_column(m) for m in ADDITIVE]].sum()
    games = tables.games.set_index(["game_id", "player_id"])
    for m in ADDITIVE:
        col = target_column(m)
        np.testing.assert_allclose(sums[col], games.loc[sums.index, col], rtol=1e-9, atol=1e-9)


def test_density_target_is_time_weighted_mean(small_tables):
    _, tables = small_tables
    s = tables.subtracks.dropna(subset=[target_column("acceleration_density")])
    col = target_column("acceleration_density")
    for (g, p), grp in s.groupby(["game_id", "player_id"]):
        want = np.average(grp[col], weights=grp["accel_time"])
        got = tables.games.set_index(["game_id", "player_id"]).loc[(g, p), col]
        assert got == pytest.approx(want, rel=1e-9)


def test_scopes_partition_full(small_tables):
    _, tables = small_tables
    m = tables.metrics.set_index(["game_id", "player_id", "scope"])
    for col in ("total_distance", "time_vband1", "total_acceleration", "elapsed"):
        obs = m.xs("observed", level="scope")[col]
        cen = m.xs("censored", level="scope")[col]
        full = m.xs("full", level="scope")[col]
        np.testing.assert_allclose(obs + cen, full, rtol=1e-9)


def test_censored_time_consistent(small_tables):
    _, tables = small_tables
    g = tables.games
    np.testing.assert_allclose(g["observed_time"] + g["censored_total_time"], g["total_time"], rtol=1e-12)
    sub_time = tables.subtracks.groupby(["game_id", "player_id"])["stop"].sum() - \
        tables.subtracks.groupby(["game_id", "player_id"])["start"].sum()
    gi = g.set_index(["game_id", "player_id"])
    np.testing.assert_allclose(sub_time * 0.1, gi.loc[sub_time.index, "censored_total_time"], rtol=1e-9)


def test_huge_window_censors_nothing(small_corpus):
    subs = censor_corpus(small_corpus.tracks, small_corpus.events, CameraWindow(10000, 10000))
    assert all(len(v) == 1 and v[0].observed for v in subs.values())
    tables = build_tables(small_corpus.tracks, subs)
    assert len(tables.subtracks) == 0
    assert (tables.games["censored_total_time"] == 0).all()


def test_missing_events_rejected(small_corpus):
    with pytest.raises(ValidationError, match="no events"):
        censor_corpus(small_corpus.tracks[:1], {})


def test_never_observed_player_skipped(caplog):
    seen = make_track(np.arange(30.0) * 0.3, player_id="a")
    hidden = make_track(np.arange(30.0) * 0.3 + 500, player_id="b")
    events = {("g01", 1): [Event(0.0, 0.0, 0.0, "kickoff")]}
    subs = censor_corpus([seen, hidden], events)
    with caplog.at_level(logging.WARNING):
        tables = build_tables([seen, hidden], subs)
    assert list(tables.games["player_id"]) == ["a"]
    assert "never observed" in caplog.text


def test_features_finite(small_tables):
    _, tables = small_tables
    assert np.isfinite(tables.games[GAME_FEATURES].to_numpy(dtype=float)).all()
    assert np.isfinite(tables.subtracks[SUBTRACK_FEATURES].to_numpy(dtype=float)).all()
