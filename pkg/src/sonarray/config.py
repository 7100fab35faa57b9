"""Run configuration: one YAML document with a section per stage.

Packaged defaults live in ``data/default.yaml``.  A user file is merged on
top of them, except for the array geometry, which a user file must state.
Unknown keys and out-of-range values raise :class:`ConfigError`.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .localization.frontend import LocalizerConfig
from .postfilter import PostfilterConfig
from .separation import SeparatorConfig
from .tracking import TrackerConfig


class ConfigError(ValueError):
    """Invalid or incomplete configuration."""


# (low, high) inclusive bounds; None leaves a side open.
RANGES = {
    "array.speed_of_sound": (200.0, 400.0),
    "audio.sample_rate": (8000, 192000),
    "audio.frame_length": (64, 16384),
    "localization.block": (1, 64),
    "localization.levels": (0, 6),
    "localization.n_sources": (1, 8),
    "localization.energy_base": (0.0, None),
    "localization.zero_halfwidth": (0, 16),
    "localization.alpha_d": (0.0, 1.0),
    "localization.gamma": (0.0, 0.999),
    "localization.delta": (0.01, None),
    "localization.mcra_window": (1, None),
    "tracking.n_particles": (10, 100000),
    "tracking.sigma": (1e-4, 1.0),
    "tracking.p_new": (0.0, 1.0),
    "tracking.p_false": (0.0, 1.0),
    "tracking.p_unobserved": (0.0, 1.0),
    "tracking.birth_threshold": (0.0, 1.0),
    "tracking.confirm_threshold": (0.0, 1.0),
    "tracking.t_obs": (0.0, None),
    "tracking.death_time": (0.0, None),
    "tracking.delay": (0.0, None),
    "tracking.resample_fraction": (0.0, 1.0),
    "tracking.max_tracks": (1, 64),
    "separation.mu": (0.0, 1.0),
    "separation.lam": (0.0, 100.0),
    "separation.rebuild_angle": (0.0, 180.0),
    "separation.min_activity": (0.0, 1.0),
    "postfilter.eta": (0.0, 1.0),
    "postfilter.alpha_s": (0.0, 1.0),
    "postfilter.alpha_pmin": (0.0, 1.0),
    "postfilter.g_min_db": (-80.0, 0.0),
    "postfilter.theta_db": (-40.0, 20.0),
    "postfilter.alpha_zeta": (0.0, 1.0),
    "postfilter.local_hz": (0.0, None),
    "postfilter.global_hz": (0.0, None),
    "postfilter.q_max": (0.0, 0.999),
    "postfilter.gamma": (0.0, 0.999),
    "postfilter.delta": (0.01, None),
    "postfilter.mcra_window": (1, None),
    "features.t_mask": (0.0, None),
}


def _read_yaml(path) -> dict:
    try:
        with open(path) as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from None
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def default_dict() -> dict:
    text = resources.files("sonarray").joinpath("data/default.yaml").read_text()
    return yaml.safe_load(text)


def _merge(base: dict, user: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in user.items():
        name = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown key: {name}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"{name} must be a mapping")
            out[key] = _merge(base[key], val, name + ".")
        else:
            out[key] = val
    return out


def _check_value(name: str, default, val):
    if isinstance(default, bool):
        if not isinstance(val, bool):
            raise ConfigError(f"{name} must be true or false, got {val!r}")
        return val
    if isinstance(default, (int, float)) or default is None:
        if val is None and default is None:
            return None
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigError(f"{name} must be a number, got {val!r}")
        if isinstance(default, int) and not isinstance(default, bool) and not float(val).is_integer():
            raise ConfigError(f"{name} must be an integer, got {val!r}")
        if not np.isfinite(val):
            raise ConfigError(f"{name} must be finite")
        lo, hi = RANGES.get(name, (None, None))
        if (lo is not None and val < lo) or (hi is not None and val > hi):
            raise ConfigError(f"{name}={val} outside [{lo}, {hi}]")
        return type(default)(val) if default is not None else float(val)
    if isinstance(default, str):
        if not isinstance(val, str):
            raise ConfigError(f"{name} must be a string")
        return val
    return val


def _validate(d: dict, defaults: dict, prefix: str = "") -> dict:
    out = {}
    for key, default in defaults.items():
        name = f"{prefix}{key}"
        if isinstance(default, dict):
            out[key] = _validate(d[key], default, name + ".")
        elif name == "array.mic_positions":
            out[key] = _mic_positions(d[key])
        else:
            out[key] = _check_value(name, default, d[key])
    return out


def _mic_positions(val) -> np.ndarray:
    try:
        mics = np.asarray(val, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("array.mic_positions must be a list of [x, y, z] triples") from None
    if mics.ndim != 2 or mics.shape[1] != 3 or len(mics) < 2:
        raise ConfigError("array.mic_positions must be a list of at least two [x, y, z] triples")
    if not np.all(np.isfinite(mics)):
        raise ConfigError("array.mic_positions must be finite")
    if len(np.unique(mics, axis=0)) != len(mics):
        raise ConfigError("array.mic_positions contains duplicate microphones")
    return mics


@dataclass
class RunConfig:
    """Validated settings for every stage."""

    mic_positions: np.ndarray
    speed_of_sound: float
    sample_rate: int
    frame_length: int
    localization: LocalizerConfig
    tracking: TrackerConfig
    separation: SeparatorConfig
    postfilter: PostfilterConfig
    t_mask: float
    seed: int = 0
    source: str = "<defaults>"
    raw: dict = field(default_factory=dict, repr=False)

    def tracker_config(self) -> TrackerConfig:
        """Tracker settings with ``dt`` set to one localisation block."""
        t = copy.copy(self.tracking)
        if self.raw["tracking"]["dt"] is None:
            t.dt = self.localization.block * (self.frame_length // 2) / self.sample_rate
        return t


def from_dict(d: dict, source: str = "<dict>", require_geometry: bool = True) -> RunConfig:
    defaults = default_dict()
    if require_geometry and "mic_positions" not in (d.get("array") or {}):
        raise ConfigError(f"{source}: array.mic_positions is required")
    v = _validate(_merge(defaults, d), defaults)
    a, au = v["array"], v["audio"]
    if au["frame_length"] % 2:
        raise ConfigError("audio.frame_length must be even")
    loc = LocalizerConfig(frame_length=au["frame_length"], speed_of_sound=a["speed_of_sound"], **v["localization"])
    trk = dict(v["tracking"])
    trk["dt"] = 0.04 if trk["dt"] is None else trk["dt"]
    pf = dict(v["postfilter"])
    pf["g_min"] = 10.0 ** (pf.pop("g_min_db") / 20.0)
    pf["theta"] = 10.0 ** (pf.pop("theta_db") / 10.0)
    if pf["estimator"] not in ("log", "stsa"):
        raise ConfigError(f"postfilter.estimator must be 'log' or 'stsa', got {pf['estimator']!r}")
    return RunConfig(
        mic_positions=a["mic_positions"],
        speed_of_sound=a["speed_of_sound"],
        sample_rate=au["sample_rate"],
        frame_length=au["frame_length"],
        localization=loc,
        tracking=TrackerConfig(**trk),
        separation=SeparatorConfig(**v["separation"]),
        postfilter=PostfilterConfig(**pf),
        t_mask=v["features"]["t_mask"],
        seed=v["seed"],
        source=source,
        raw=v,
    )


def load_config(path=None) -> RunConfig:
    """Defaults when ``path`` is None, else the file merged over the defaults."""
    if path is None:
        return from_dict({}, "<defaults>", require_geometry=False)
    return from_dict(_read_yaml(path), str(Path(path)))
