"""Corpus-level processing: censor every track and tabulate metrics and predictors."""
from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass

import numpy as np
import pandas as pd

from . import features as F
from .exceptions import ValidationError
from .kinematics import DEFAULT_BANDWIDTH, derive_kinematics
from .metrics import (ACCELERATION_BANDS, METRIC_COLUMNS, TARGET_METRICS, VELOCITY_BANDS,
                      combine_metrics, compute_load_metrics, span_metrics)
from .tracking import (CameraWindow, build_camera_path, censor, segment_subtracks,
                       subtracks_mask)

log = logging.getLogger(__name__)

ID_COLUMNS = ["game_id", "player_id", "position"]
GAME_META = ["observed_time", "total_time"]
SUBTRACK_META = ["subtrack_id", "half", "start", "stop", "accel_time"]


@dataclass
class CorpusTables:
    metrics: pd.DataFrame
    subtracks: pd.DataFrame
    games: pd.DataFrame


def censor_corpus(tracks, events, window=CameraWindow()) -> dict:
    """Segment every track against the camera path of its game-half."""
    paths = {}
    out = {}
    for tr in tracks:
        gh = (tr.game_id, tr.half)
        if gh not in paths:
            if gh not in events or not events[gh]:
                raise ValidationError(f"no events for game {tr.game_id} half {tr.half}")
            paths[gh] = build_camera_path(events[gh])
        out[tr.key] = segment_subtracks(tr, censor(tr, paths[gh], window))
    return out


def _player_games(tracks):
    groups = defaultdict(list)
    for tr in tracks:
        groups[(tr.game_id, tr.player_id)].append(tr)
    return {k: sorted(v, key=lambda tr: tr.half) for k, v in sorted(groups.items())}


def build_tables(tracks, subtracks_by_key, bandwidth=DEFAULT_BANDWIDTH,
                 velocity_bands=VELOCITY_BANDS, acceleration_bands=ACCELERATION_BANDS) -> CorpusTables:
    """Metrics per scope, censored-subtrack rows and player-game rows.

    Player-games that were never on camera are skipped with a warning.
    """
    metric_rows, sub_rows, game_rows = [], [], []
    for (game_id, player_id), halves in _player_games(tracks).items():
        position = halves[0].position
        per_half = []
        for tr in halves:
            subs = subtracks_by_key[tr.key]
            mask = subtracks_mask(subs, len(tr))
            kin = derive_kinematics(tr, bandwidth)
            per_half.append((tr, subs, mask, kin))
        scopes = {}
        for scope, pick in (("observed", lambda m: m), ("censored", lambda m: ~m),
                            ("full", lambda m: np.ones_like(m))):
            scopes[scope] = combine_metrics(
                compute_load_metrics(kin, pick(mask), velocity_bands, acceleration_bands)
                for _, _, mask, kin in per_half)
            metric_rows.append({"game_id": game_id, "player_id": player_id, "scope": scope,
                                **scopes[scope].as_dict()})
        total_time = sum(tr.duration for tr in halves)
        censored_time = sum(s.elapsed for _, subs, _, _ in per_half for s in subs if not s.observed)
        try:
            gfeat = F.game_features(scopes["observed"], position, censored_time, total_time)
        except ValidationError:
            log.warning("skipping %s/%s: never observed", game_id, player_id)
            continue
        censored = scopes["censored"].as_dict()
        game_rows.append({
            "game_id": game_id, "player_id": player_id, "position": position,
            "observed_time": total_time - censored_time, "total_time": total_time,
            **gfeat,
            **{F.target_column(m): _nan(censored[m]) for m in TARGET_METRICS},
        })
        for tr, subs, mask, kin in per_half:
            for s in subs:
                if s.observed:
                    continue
                target = span_metrics(kin, s.start, s.stop, velocity_bands, acceleration_bands)
                td = target.as_dict()
                sub_rows.append({
                    "game_id": game_id, "player_id": player_id, "position": position,
                    "subtrack_id": s.subtrack_id, "half": tr.half, "start": s.start,
                    "stop": s.stop, "accel_time": target.accel_time,
                    **F.subtrack_features(s, kin, scopes["observed"], position, mask),
                    **{F.target_column(m): _nan(td[m]) for m in TARGET_METRICS},
                })
    sub_cols = ID_COLUMNS + SUBTRACK_META + F.SUBTRACK_FEATURES + [F.target_column(m) for m in TARGET_METRICS]
    game_cols = ID_COLUMNS + GAME_META + F.GAME_FEATURES + [F.target_column(m) for m in TARGET_METRICS]
    return CorpusTables(
        metrics=pd.DataFrame(metric_rows, columns=["game_id", "player_id", "scope"] + METRIC_COLUMNS),
        subtracks=pd.DataFrame(sub_rows, columns=sub_cols),
        games=pd.DataFrame(game_rows, columns=game_cols),
    )


def _nan(v):
    return np.nan if v is None else v
