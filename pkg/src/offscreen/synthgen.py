"""Synthetic multi-game tracking corpora with known ground truth.

Players follow a damped, mean-reverting motion around a position-specific
home spot, driven by a smooth random force (an OU process) plus occasional
sprints. The ball wanders as an OU process over the pitch and events are
dropped at its location at Poisson times. With ``camera_bias > 0`` players
close to the latest event move faster, which is what makes on-camera and
off-camera movement differ.
"""
from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from .exceptions import ConfigError
from .tracking import FRAME_DT, Event, PlayerTrack, write_events, write_frames

_POS_ORDER = ("defender", "midfielder", "forward")


@dataclass
class SynthConfig:
    games: int = 18
    formation: tuple = (3, 3, 2)
    pitch_length: float = 105.0
    pitch_width: float = 68.0
    half_length: float = 600.0
    # home spot as a fraction of pitch length, for a team attacking towards +x
    home_x: dict = field(default_factory=lambda: {"defender": 0.35, "midfielder": 0.47, "forward": 0.58})
    mobility: dict = field(default_factory=lambda: {"defender": 0.9, "midfielder": 1.1, "forward": 1.0})
    mean_speed: float = 1.9
    # between-player spread of the speed scale (log-sd) and a slow within-game
    # intensity swing (log-sd and timescale in s)
    fitness_spread: float = 0.15
    intensity_spread: float = 0.3
    intensity_timescale: float = 60.0
    # fraction of the ball's displacement from the centre that home spots follow
    block_shift: float = 0.7
    # fraction of the pitch width a line of players spans
    team_width: float = 0.5
    home_pull: float = 0.05
    damping: float = 0.5
    force_timescale: float = 0.5
    sprint_rate: float = 0.5  # per minute
    sprint_speed: float = 7.0
    sprint_duration: float = 3.0
    event_rate: float = 0.3  # per second
    ball_spread: tuple = (22.0, 15.0)
    ball_timescale: float = 8.0
    camera_bias: float = 0.3
    bias_radius: float = 20.0
    bias_timescale: float = 0.5
    speed_cap: float = 9.5
    position_noise: float = 0.0
    seed: int = 0

    def __post_init__(self):
        self.formation = tuple(int(n) for n in self.formation)
        self.ball_spread = tuple(float(s) for s in self.ball_spread)
        self.validate()

    @property
    def players_per_side(self):
        return sum(self.formation)

    def validate(self):
        if self.games < 1:
            raise ConfigError("games must be at least 1")
        if len(self.formation) != 3 or min(self.formation) < 0 or sum(self.formation) < 1:
            raise ConfigError("formation must give (defenders, midfielders, forwards) counts")
        for name in ("pitch_length", "pitch_width", "half_length", "damping", "force_timescale",
                     "ball_timescale", "bias_timescale", "bias_radius",
                     "intensity_timescale"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        for name in ("mean_speed", "fitness_spread", "intensity_spread", "block_shift", "team_width",
                     "home_pull", "sprint_rate", "sprint_speed", "sprint_duration", "event_rate",
                     "camera_bias", "position_noise", "speed_cap"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} cannot be negative")
        if self.half_length < 1:
            raise ConfigError("half_length must be at least one second")
        if set(self.home_x) != set(_POS_ORDER) or set(self.mobility) != set(_POS_ORDER):
            raise ConfigError("home_x and mobility need an entry per position")
        if any(v < 0 for v in self.mobility.values()):
            raise ConfigError("mobility scales cannot be negative")

    def to_dict(self):
        d = asdict(self)
        d["formation"] = list(self.formation)
        d["ball_spread"] = list(self.ball_spread)
        return d

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown generator settings {sorted(unknown)}")
        return cls(**d)


@dataclass
class Corpus:
    tracks: list
    events: dict
    config: SynthConfig

    @property
    def game_ids(self):
        return sorted({tr.game_id for tr in self.tracks})


def _roster(cfg, game_index):
    """(player_id, position, team) for both sides; home players recur across games."""
    out = []
    for team in ("h", "a"):
        k = 0
        for pos, n in zip(_POS_ORDER, cfg.formation):
            for _ in range(n):
                k += 1
                pid = f"h{k:02d}" if team == "h" else f"a{game_index + 1:02d}{k:02d}"
                out.append((pid, pos, team))
    return out


def _homes(cfg, roster, half):
    homes = np.empty((len(roster), 2))
    counts = dict(zip(_POS_ORDER, cfg.formation))
    lane = {}
    for i, (_, pos, team) in enumerate(roster):
        j = lane.get((team, pos), 0)
        lane[(team, pos)] = j + 1
        x = cfg.home_x[pos] * cfg.pitch_length
        # home side attacks +x in the first half, teams swap ends at halftime
        attacks_right = (team == "h") == (half == 1)
        homes[i, 0] = x if attacks_right else cfg.pitch_length - x
        lane_y = (j + 1) / (counts[pos] + 1) - 0.5
        homes[i, 1] = cfg.pitch_width * (0.5 + cfg.team_width * lane_y)
    return homes


def _ball_and_events(cfg, rng, n):
    centre = np.array([cfg.pitch_length / 2, cfg.pitch_width / 2])
    spread = np.array(cfg.ball_spread)
    theta = 1.0 / cfg.ball_timescale
    sigma = spread * math.sqrt(2 * theta)
    noise = rng.standard_normal((n, 2))
    ball = np.empty((n, 2))
    ball[0] = centre
    lo, hi = np.zeros(2), np.array([cfg.pitch_length, cfg.pitch_width])
    for i in range(1, n):
        b = ball[i - 1] + theta * (centre - ball[i - 1]) * FRAME_DT + sigma * math.sqrt(FRAME_DT) * noise[i]
        ball[i] = np.clip(b, lo, hi)
    frames = [0]
    if cfg.event_rate > 0:
        gaps = rng.exponential(1.0 / cfg.event_rate, size=int(n * FRAME_DT * cfg.event_rate * 2 + 20))
        times = np.cumsum(gaps)
        times = times[times < (n - 1) * FRAME_DT]
        frames += np.unique(np.rint(times / FRAME_DT).astype(int)).tolist()
    frames = np.unique(frames)
    kinds = rng.choice(["pass", "touch", "tackle", "shot"], size=len(frames), p=[0.6, 0.3, 0.08, 0.02])
    last = np.searchsorted(frames, np.arange(n), side="right") - 1
    events = [Event(round(f * FRAME_DT, 1), round(float(ball[f, 0]), 3), round(float(ball[f, 1]), 3), str(k))
              for f, k in zip(frames, kinds)]
    event_xy = ball[frames][last]
    return events, event_xy


def _simulate_half(cfg, per_game, n):
    """Integrate all players of all games jointly; per-game noise keeps results schedule-free."""
    homes = np.concatenate([g["homes"] for g in per_game])
    mob = np.concatenate([g["mobility"] for g in per_game])
    pos = np.concatenate([g["start"] for g in per_game])
    force_noise = np.concatenate([g["force_noise"] for g in per_game], axis=1)
    sprint_start = np.concatenate([g["sprint_start"] for g in per_game], axis=1)
    sprint_angle = np.concatenate([g["sprint_angle"] for g in per_game], axis=1)
    event_xy = np.concatenate([g["event_xy"] for g in per_game], axis=1)
    fitness = np.concatenate([g["fitness"] for g in per_game])
    intensity_noise = np.concatenate([g["intensity_noise"] for g in per_game], axis=1)
    m = len(homes)
    centre = np.array([cfg.pitch_length / 2, cfg.pitch_width / 2])

    gamma, alpha = cfg.damping, 1.0 / cfg.force_timescale
    s = cfg.mean_speed / math.sqrt(math.pi / 2)  # per-axis sd of a 2-d Gaussian velocity
    force_sd = s * math.sqrt(gamma * (gamma + alpha))
    force_sigma = (force_sd * math.sqrt(2 * alpha)) * mob[:, None]
    sprint_len = int(round(cfg.sprint_duration / FRAME_DT))
    lo, hi = np.zeros(2), np.array([cfg.pitch_length, cfg.pitch_width])
    dt, sq = FRAME_DT, math.sqrt(FRAME_DT)

    out = np.empty((n, m, 2))
    out[0] = pos
    vel = np.zeros((m, 2))
    force = np.zeros((m, 2))
    mult = np.ones(m)
    theta_i = 1.0 / cfg.intensity_timescale
    sigma_i = cfg.intensity_spread * math.sqrt(2 * theta_i)
    log_int = cfg.intensity_spread * intensity_noise[0]
    remaining = np.zeros(m, dtype=int)
    sdir = np.zeros((m, 2))
    for i in range(1, n):
        force += -alpha * force * dt + force_sigma * sq * force_noise[i]
        log_int += -theta_i * log_int * dt + sigma_i * sq * intensity_noise[i]
        target_home = homes + cfg.block_shift * (event_xy[i] - centre)
        vel += (-gamma * vel + cfg.home_pull * (target_home - pos) + force) * dt
        starting = sprint_start[i] & (remaining == 0)
        if starting.any():
            remaining[starting] = sprint_len
            ang = sprint_angle[i, starting]
            sdir[starting] = np.column_stack([np.cos(ang), np.sin(ang)])
        active = remaining > 0
        if active.any():
            vel[active] += 2.0 * (cfg.sprint_speed * sdir[active] - vel[active]) * dt
            remaining[active] -= 1
        if cfg.camera_bias > 0:
            near = np.hypot(*(pos - event_xy[i]).T) < cfg.bias_radius
            target = np.where(near, 1.0 + cfg.camera_bias, 1.0)
            mult += (target - mult) * (dt / cfg.bias_timescale)
        step = vel * (mult * fitness * np.exp(log_int))[:, None]
        speed = np.hypot(step[:, 0], step[:, 1])
        over = speed > cfg.speed_cap
        if over.any():
            step[over] *= (cfg.speed_cap / speed[over])[:, None]
        new = pos + step * dt
        clipped = np.clip(new, lo, hi)
        hit = clipped != new
        vel[hit] = 0.0
        pos = clipped
        out[i] = pos
    return out


def generate_corpus(cfg: SynthConfig) -> Corpus:
    """Frames, events and positions for ``cfg.games`` games of two halves."""
    cfg.validate()
    n = int(round(cfg.half_length / FRAME_DT))
    tracks, events = [], {}
    for half in (1, 2):
        per_game = []
        for g in range(cfg.games):
            rng = np.random.default_rng([cfg.seed, g, half])
            roster = _roster(cfg, g)
            homes = _homes(cfg, roster, half)
            ev, event_xy = _ball_and_events(cfg, rng, n)
            p = len(roster)
            per_game.append({
                "roster": roster, "homes": homes, "events": ev,
                "mobility": np.array([cfg.mobility[pos] for _, pos, _ in roster]),
                "start": homes + rng.normal(0.0, 3.0, size=(p, 2)),
                "force_noise": rng.standard_normal((n, p, 2)),
                "sprint_start": rng.random((n, p)) < cfg.sprint_rate / 60.0 * FRAME_DT,
                "sprint_angle": rng.uniform(0, 2 * math.pi, size=(n, p)),
                "event_xy": np.broadcast_to(event_xy[:, None, :], (n, p, 2)),
                "noise": rng.normal(0.0, 1.0, size=(n, p, 2)),
                "fitness": np.exp(cfg.fitness_spread * rng.standard_normal(p)),
                "intensity_noise": rng.standard_normal((n, p)),
            })
        for g in per_game:
            g["start"] = np.clip(g["start"], 0, [cfg.pitch_length, cfg.pitch_width])
        paths = _simulate_half(cfg, per_game, n)
        t = np.round(np.arange(n) * FRAME_DT, 1)
        col = 0
        for gi, g in enumerate(per_game):
            game_id = f"g{gi + 1:02d}"
            events[(game_id, half)] = g["events"]
            for k, (pid, pos, _) in enumerate(g["roster"]):
                xy = paths[:, col + k, :] + cfg.position_noise * g["noise"][:, k, :]
                xy = np.round(xy, 3)
                tracks.append(PlayerTrack(game_id, pid, half, pos, t.copy(), xy[:, 0], xy[:, 1]))
            col += len(g["roster"])
    tracks.sort(key=lambda tr: tr.key)
    return Corpus(tracks, events, cfg)


def write_corpus(corpus: Corpus, outdir, compress=True):
    """Write ``frames``, ``events`` and the generator config into ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    ext = ".csv.gz" if compress else ".csv"
    frames_path = os.path.join(outdir, "frames" + ext)
    events_path = os.path.join(outdir, "events" + ext)
    write_frames(corpus.tracks, frames_path)
    write_events(corpus.events, events_path)
    with open(os.path.join(outdir, "synth_config.json"), "w", encoding="utf-8") as fh:
        json.dump(corpus.config.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return frames_path, events_path


def random_censor_mask(n, rng, censored_fraction=0.45, mean_run=50.0):
    """Alternating observed/censored runs of geometric length, independent of motion."""
    if not 0 < censored_fraction < 1:
        raise ConfigError("censored_fraction must lie in (0, 1)")
    mean_c = 2 * mean_run * censored_fraction
    mean_o = 2 * mean_run - mean_c
    mask = np.empty(n, dtype=bool)
    state = bool(rng.random() >= censored_fraction)
    i = 0
    while i < n:
        length = int(rng.geometric(1.0 / (mean_o if state else mean_c)))
        mask[i:i + length] = state
        i += length
        state = not state
    return mask
