"""Track ingestion, camera simulation, censoring and subtrack segmentation.

Tracks are stored column-wise (numpy arrays of ``t``, ``x``, ``y``) rather
than as lists of frame objects; a half of tracking data at 10 Hz is tens of
thousands of frames per player.
"""
from __future__ import annotations

import io
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .exceptions import GapError, ParseError, ValidationError

FRAME_DT = 0.1
POSITIONS = ("defender", "midfielder", "forward")

FRAME_COLUMNS = ["game_id", "player_id", "half", "position", "t", "x", "y"]
EVENT_COLUMNS = ["game_id", "half", "t", "x", "y", "kind"]

PathLike = Union[str, os.PathLike]


class Frame(NamedTuple):
    t: float
    x: float
    y: float


class Event(NamedTuple):
    t: float
    x: float
    y: float
    kind: str = ""


@dataclass
class PlayerTrack:
    """Uniformly sampled positions of one player for one half."""

    game_id: str
    player_id: str
    half: int
    position: str
    t: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if not (self.t.shape == self.x.shape == self.y.shape) or self.t.ndim != 1:
            raise ValidationError("t, x and y must be 1-d arrays of equal length")
        if self.position not in POSITIONS:
            raise ValidationError(
                f"unknown position {self.position!r} for player {self.player_id}; "
                f"expected one of {POSITIONS}"
            )
        if self.half not in (1, 2):
            raise ValidationError(f"half must be 1 or 2, got {self.half!r}")

    def __len__(self):
        return len(self.t)

    @property
    def key(self):
        return (self.game_id, self.player_id, self.half)

    @property
    def duration(self):
        return len(self.t) * FRAME_DT

    def frame(self, i):
        return Frame(float(self.t[i]), float(self.x[i]), float(self.y[i]))

    def frames(self):
        return [self.frame(i) for i in range(len(self))]

    def validate(self):
        """Check the uniform 0.1 s spacing invariant."""
        if len(self.t) == 0:
            raise GapError(f"player {self.player_id} half {self.half}: empty track")
        if not np.all(np.isfinite(self.x)) or not np.all(np.isfinite(self.y)):
            raise ValidationError(f"player {self.player_id} half {self.half}: non-finite coordinates")
        if self.t[0] < 0:
            raise ValidationError(f"player {self.player_id} half {self.half}: negative time")
        ticks = self.t / FRAME_DT
        k = np.rint(ticks)
        if np.any(np.abs(ticks - k) > 1e-6):
            raise GapError(
                f"player {self.player_id} half {self.half}: timestamps are not multiples of 0.1 s"
            )
        steps = np.diff(k)
        if np.any(steps != 1):
            i = int(np.flatnonzero(steps != 1)[0])
            raise GapError(
                f"player {self.player_id} (game {self.game_id}) half {self.half}: "
                f"non-uniform timestamps between t={self.t[i]:.1f} and t={self.t[i + 1]:.1f}"
            )
        return self


@dataclass(frozen=True)
class CameraWindow:
    width: float = 40.0
    height: float = 40.0

    def __post_init__(self):
        if not (self.width > 0 and self.height > 0):
            raise ValidationError("camera window dimensions must be positive")


@dataclass
class CameraPath:
    """Piecewise-linear camera centre, clamped outside the knot range."""

    t: np.ndarray
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.x = np.asarray(self.x, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if len(self.t) == 0:
            raise ValidationError("camera path needs at least one knot")
        if np.any(np.diff(self.t) <= 0):
            raise ValidationError("camera knot times must be strictly increasing")

    def position(self, t):
        t = np.asarray(t, dtype=float)
        return np.interp(t, self.t, self.x), np.interp(t, self.t, self.y)


@dataclass
class Subtrack:
    """A maximal run of frames that are all observed or all censored.

    ``start`` and ``stop`` index the parent track (half-open).
    """

    subtrack_id: str
    game_id: str
    player_id: str
    half: int
    observed: bool
    start: int
    stop: int
    t: np.ndarray = field(repr=False)
    x: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    exit_point: Optional[tuple] = None
    entry_point: Optional[tuple] = None

    @property
    def n_frames(self):
        return self.stop - self.start

    @property
    def elapsed(self):
        return self.n_frames * FRAME_DT

    @property
    def gap_distance(self):
        if self.exit_point is None or self.entry_point is None:
            return None
        return float(np.hypot(self.entry_point[0] - self.exit_point[0],
                              self.entry_point[1] - self.exit_point[1]))


_TEXT_COLUMNS = ("game_id", "player_id", "position", "kind")


def _read_table(source, columns, name):
    if isinstance(source, pd.DataFrame):
        df = source.copy()
    else:
        if isinstance(source, str) and "\n" in source:
            source = io.StringIO(source)
        try:
            # numeric columns parse natively; ``_numeric`` re-checks them and
            # falls back to row-level diagnostics when a value is bad
            df = pd.read_csv(source, dtype={c: str for c in _TEXT_COLUMNS}, keep_default_na=False,
                             float_precision="round_trip", low_memory=False)
        except pd.errors.ParserError as exc:
            raise ParseError(f"malformed {name} file: {exc}") from exc
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ParseError(f"{name} file is missing columns {missing}", line=1)
    return df


def _numeric(df, column, name, integer=False):
    if pd.api.types.is_numeric_dtype(df[column]) and not df[column].isna().any():
        values = df[column].to_numpy(dtype=float)
        if np.all(np.isfinite(values)) and (not integer or np.all(values == np.round(values))):
            return values.astype(int) if integer else values
    values = pd.to_numeric(df[column], errors="coerce")
    bad = values.isna().to_numpy() | ~np.isfinite(values.to_numpy(dtype=float))
    if bad.any():
        # header is line 1, first data row is line 2
        row = int(np.flatnonzero(bad)[0])
        raise ParseError(
            f"bad {column!r} value {df[column].iloc[row]!r} in {name} file", line=row + 2
        )
    values = values.to_numpy(dtype=float)
    if integer:
        if np.any(values != np.round(values)):
            row = int(np.flatnonzero(values != np.round(values))[0])
            raise ParseError(f"non-integer {column!r} in {name} file", line=row + 2)
        return values.astype(int)
    return values


def parse_frames(source) -> list:
    """Read a frames file into one validated :class:`PlayerTrack` per player-half.

    ``source`` may be a path, an open file, CSV text or a DataFrame with the
    columns ``game_id, player_id, half, position, t, x, y``. Rows may arrive in
    any order.
    """
    df = _read_table(source, FRAME_COLUMNS, "frames")
    half = _numeric(df, "half", "frames", integer=True)
    t = _numeric(df, "t", "frames")
    x = _numeric(df, "x", "frames")
    y = _numeric(df, "y", "frames")
    bad_half = ~np.isin(half, (1, 2))
    if bad_half.any():
        raise ParseError("half must be 1 or 2", line=int(np.flatnonzero(bad_half)[0]) + 2)
    position = df["position"].str.strip().str.lower().to_numpy()
    bad_pos = ~np.isin(position, POSITIONS)
    if bad_pos.any():
        row = int(np.flatnonzero(bad_pos)[0])
        raise ValidationError(
            f"line {row + 2}: unknown position label {df['position'].iloc[row]!r}"
        )
    frame = pd.DataFrame({
        "game_id": df["game_id"].astype(str).to_numpy(),
        "player_id": df["player_id"].astype(str).to_numpy(),
        "half": half, "position": position, "t": t, "x": x, "y": y,
    })
    frame = frame.sort_values(["game_id", "player_id", "half", "t"], kind="mergesort")
    tracks = []
    for (game_id, player_id, h), g in frame.groupby(["game_id", "player_id", "half"], sort=True):
        labels = g["position"].unique()
        if len(labels) != 1:
            raise ValidationError(
                f"player {player_id} in game {game_id} has several positions: {sorted(labels)}"
            )
        track = PlayerTrack(str(game_id), str(player_id), int(h), labels[0],
                            g["t"].to_numpy(), g["x"].to_numpy(), g["y"].to_numpy())
        tracks.append(track.validate())
    return tracks


def parse_events(source) -> dict:
    """Read an events file into ``{(game_id, half): [Event, ...]}`` sorted by time."""
    df = _read_table(source, EVENT_COLUMNS, "events")
    half = _numeric(df, "half", "events", integer=True)
    t = _numeric(df, "t", "events")
    x = _numeric(df, "x", "events")
    y = _numeric(df, "y", "events")
    out = {}
    order = np.lexsort((t, half, df["game_id"].astype(str).to_numpy()))
    games = df["game_id"].astype(str).to_numpy()
    kinds = df["kind"].astype(str).to_numpy()
    for i in order:
        out.setdefault((games[i], int(half[i])), []).append(
            Event(float(t[i]), float(x[i]), float(y[i]), kinds[i]))
    return out


def tracks_to_frame(tracks: Iterable[PlayerTrack]) -> pd.DataFrame:
    parts = []
    for tr in tracks:
        n = len(tr)
        parts.append(pd.DataFrame({
            "game_id": np.repeat(tr.game_id, n), "player_id": np.repeat(tr.player_id, n),
            "half": np.repeat(tr.half, n), "position": np.repeat(tr.position, n),
            "t": tr.t, "x": tr.x, "y": tr.y,
        }))
    if not parts:
        return pd.DataFrame(columns=FRAME_COLUMNS)
    return pd.concat(parts, ignore_index=True)


def write_table(df, path, **kwargs):
    """``DataFrame.to_csv`` with reproducible bytes for ``.gz`` targets."""
    compression = {"method": "gzip", "mtime": 0} if str(path).endswith(".gz") else None
    df.to_csv(path, index=False, compression=compression, **kwargs)


def read_table(path, **kwargs):
    return pd.read_csv(path, float_precision="round_trip", **kwargs)


def write_frames(tracks, path):
    write_table(tracks_to_frame(tracks), path, float_format="%.3f")


def events_to_frame(events: dict) -> pd.DataFrame:
    rows = [(g, h, e.t, e.x, e.y, e.kind) for (g, h), evs in sorted(events.items()) for e in evs]
    return pd.DataFrame(rows, columns=EVENT_COLUMNS)


def write_events(events, path):
    write_table(events_to_frame(events), path, float_format="%.3f")


def build_camera_path(events: Sequence) -> CameraPath:
    """Camera centre that moves linearly between consecutive event locations.

    Events sharing a timestamp and location are merged; events sharing a
    timestamp with different locations are rejected.
    """
    if len(events) == 0:
        raise ValidationError("cannot build a camera path from zero events")
    arr = np.array([(e[0], e[1], e[2]) for e in events], dtype=float)
    arr = arr[np.argsort(arr[:, 0], kind="mergesort")]
    keep = np.ones(len(arr), dtype=bool)
    same_t = np.diff(arr[:, 0]) == 0
    for i in np.flatnonzero(same_t):
        if arr[i, 1] != arr[i + 1, 1] or arr[i, 2] != arr[i + 1, 2]:
            raise ValidationError(
                f"two events at t={arr[i, 0]} with different locations "
                f"({arr[i, 1]}, {arr[i, 2]}) and ({arr[i + 1, 1]}, {arr[i + 1, 2]})"
            )
        keep[i + 1] = False
    arr = arr[keep]
    return CameraPath(arr[:, 0], arr[:, 1], arr[:, 2])


def censor(track: PlayerTrack, path: CameraPath, window: CameraWindow = CameraWindow()) -> np.ndarray:
    """Per-frame visibility: True where the player lies inside the camera window.

    The window boundary is closed, so a player exactly on an edge is observed.
    """
    cx, cy = path.position(track.t)
    return (np.abs(track.x - cx) <= window.width / 2) & (np.abs(track.y - cy) <= window.height / 2)


def run_bounds(mask):
    """Start/stop indices of maximal runs of equal values in ``mask``."""
    mask = np.asarray(mask)
    if len(mask) == 0:
        return np.array([], dtype=int), np.array([], dtype=int)
    change = np.flatnonzero(mask[1:] != mask[:-1]) + 1
    starts = np.concatenate(([0], change))
    stops = np.concatenate((change, [len(mask)]))
    return starts, stops


def segment_subtracks(track: PlayerTrack, mask) -> list:
    """Split a track into alternating observed/censored subtracks.

    For every subtrack the exit point is the last observed position before it
    and the entry point the first observed position after it; both are absent
    at the ends of the track.
    """
    mask = np.asarray(mask, dtype=bool)
    if len(mask) != len(track):
        raise ValidationError(f"mask has {len(mask)} entries for a track of {len(track)} frames")
    starts, stops = run_bounds(mask)
    subs = []
    for k, (a, b) in enumerate(zip(starts, stops)):
        observed = bool(mask[a])
        if observed:
            exit_point = entry_point = None
        else:
            exit_point = (float(track.x[a - 1]), float(track.y[a - 1])) if a > 0 else None
            entry_point = (float(track.x[b]), float(track.y[b])) if b < len(track) else None
        subs.append(Subtrack(
            subtrack_id=f"{track.game_id}:{track.player_id}:{track.half}:{k}",
            game_id=track.game_id, player_id=track.player_id, half=track.half,
            observed=observed, start=int(a), stop=int(b),
            t=track.t[a:b], x=track.x[a:b], y=track.y[a:b],
            exit_point=exit_point, entry_point=entry_point,
        ))
    return subs


def subtracks_mask(subtracks, n_frames):
    """Rebuild the per-frame visibility mask from a segmentation."""
    mask = np.zeros(n_frames, dtype=bool)
    for s in subtracks:
        mask[s.start:s.stop] = s.observed
    return mask


SUBTRACK_COLUMNS = ["subtrack_id", "game_id", "player_id", "half", "observed", "start", "stop",
                    "t_start", "t_end", "n_frames", "elapsed",
                    "exit_x", "exit_y", "entry_x", "entry_y", "gap_distance"]


def subtracks_to_frame(subtracks) -> pd.DataFrame:
    rows = []
    for s in subtracks:
        ex = s.exit_point or (np.nan, np.nan)
        en = s.entry_point or (np.nan, np.nan)
        gap = s.gap_distance
        rows.append((s.subtrack_id, s.game_id, s.player_id, s.half, int(s.observed), s.start, s.stop,
                     float(s.t[0]), float(s.t[-1]), s.n_frames, s.elapsed,
                     ex[0], ex[1], en[0], en[1], np.nan if gap is None else gap))
    return pd.DataFrame(rows, columns=SUBTRACK_COLUMNS)


def subtracks_from_frame(df: pd.DataFrame, tracks) -> dict:
    """Inverse of :func:`subtracks_to_frame`; returns ``{track.key: [Subtrack, ...]}``."""
    by_key = {tr.key: tr for tr in tracks}
    out = {}
    df = df.sort_values(["game_id", "player_id", "half", "start"], kind="mergesort")
    for (g, p, h), grp in df.groupby(["game_id", "player_id", "half"], sort=True):
        key = (str(g), str(p), int(h))
        if key not in by_key:
            raise ValidationError(f"subtracks reference unknown track {key}")
        tr = by_key[key]
        mask = np.zeros(len(tr), dtype=bool)
        covered = np.zeros(len(tr), dtype=int)
        for a, b, obs in zip(grp["start"].astype(int), grp["stop"].astype(int), grp["observed"].astype(int)):
            mask[a:b] = bool(obs)
            covered[a:b] += 1
        if np.any(covered != 1):
            raise ValidationError(f"subtracks for {key} do not partition the track")
        out[key] = segment_subtracks(tr, mask)
    return out
