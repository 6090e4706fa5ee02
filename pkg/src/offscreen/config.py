"""Run configuration (JSON) with defaults matching the published protocol."""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field

from .evaluation import DEFAULT_ROSTER
from .exceptions import ConfigError
from .kinematics import DEFAULT_BANDWIDTH
from .metrics import ACCELERATION_EDGES, TARGET_METRICS, VELOCITY_EDGES, bands_from_edges
from .models import BOOSTER_DEFAULTS, BOOSTERS
from .synthgen import SynthConfig
from .tracking import CameraWindow

DEFAULT_BOOST = BOOSTER_DEFAULTS

_SECTIONS = ("seed", "camera", "smoothing", "bands", "models", "split", "synth")


@dataclass
class RunConfig:
    seed: int = 0
    camera: dict = field(default_factory=lambda: {"width": 40.0, "height": 40.0})
    smoothing: dict = field(default_factory=lambda: {"bandwidth": DEFAULT_BANDWIDTH})
    bands: dict = field(default_factory=lambda: {"velocity": list(VELOCITY_EDGES),
                                                 "acceleration": list(ACCELERATION_EDGES)})
    models: dict = field(default_factory=lambda: {"roster": list(DEFAULT_ROSTER),
                                                  "metrics": list(TARGET_METRICS),
                                                  "params": copy.deepcopy(DEFAULT_BOOST)})
    split: dict = field(default_factory=lambda: {"train": 13, "test": 5, "order": None})
    synth: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"unknown config sections {sorted(unknown)}")
        cfg = cls()
        for key in _SECTIONS:
            if key not in d:
                continue
            if isinstance(getattr(cfg, key), dict):
                merged = dict(getattr(cfg, key))
                if not isinstance(d[key], dict):
                    raise ConfigError(f"config section {key!r} must be an object")
                merged.update(d[key])
                setattr(cfg, key, merged)
            else:
                setattr(cfg, key, d[key])
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path=None):
        if path is None:
            return cls()
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        return {k: copy.deepcopy(getattr(self, k)) for k in _SECTIONS}

    def validate(self):
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed must be a nonnegative integer")
        try:
            self.window()
            self.velocity_bands()
            self.acceleration_bands()
            self.synth_config()
        except ConfigError:
            raise
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc)) from exc
        if not self.smoothing.get("bandwidth", 0) > 0:
            raise ConfigError("smoothing bandwidth must be positive")
        roster = self.models.get("roster", [])
        bad = [m for m in roster if m not in ("base", "scaling") + BOOSTERS]
        if bad or not roster:
            raise ConfigError(f"invalid model roster entries {bad}")
        bad = [m for m in self.models.get("metrics", []) if m not in TARGET_METRICS]
        if bad:
            raise ConfigError(f"unknown target metrics {bad}")
        for name, p in self.models.get("params", {}).items():
            if name not in BOOSTERS or not isinstance(p, dict):
                raise ConfigError(f"invalid booster parameters for {name!r}")
        if int(self.split.get("train", 0)) < 1 or int(self.split.get("test", 0)) < 1:
            raise ConfigError("split needs positive train and test counts")

    def window(self):
        return CameraWindow(float(self.camera["width"]), float(self.camera["height"]))

    def velocity_bands(self):
        edges = self.bands["velocity"]
        if len(edges) != 3:
            raise ConfigError("three velocity band edges expected")
        return bands_from_edges(edges, "velocity")

    def acceleration_bands(self):
        edges = self.bands["acceleration"]
        if len(edges) != 3:
            raise ConfigError("three acceleration band edges expected")
        return bands_from_edges(edges, "acceleration")

    @property
    def bandwidth(self):
        return float(self.smoothing["bandwidth"])

    def boost_params(self):
        params = copy.deepcopy(DEFAULT_BOOST)
        for name, p in self.models.get("params", {}).items():
            params[name].update(p)
        return params

    def synth_config(self):
        d = dict(self.synth)
        d.setdefault("seed", self.seed)
        return SynthConfig.from_dict(d)
