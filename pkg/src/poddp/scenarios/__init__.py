"""Benchmark scenarios and their configuration files."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..belief import Belief
from ..model import ProblemModel
from . import lane_change, terrain, tmaze
from .config import ConfigError, apply_overrides, default_config

EXPERIMENTS = ("tmaze", "terrain", "lanechange")


@dataclass(frozen=True)
class Scenario:
    """A fully instantiated benchmark problem."""

    name: str
    model: ProblemModel
    initial_state: np.ndarray
    prior: Belief
    horizon: int
    segments: int
    control_low: np.ndarray  # hard clamp applied at execution time
    control_high: np.ndarray
    config: dict  # the flat key/value config the scenario was built from


def build_scenario(name: str, config: Optional[dict] = None) -> Scenario:
    """Instantiate a named scenario, optionally from a custom config dict.

    When `config` is None the shipped default configuration is used.
    """
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}; expected one of {EXPERIMENTS}")
    cfg = default_config(name) if config is None else dict(config)
    if name == "tmaze":
        sc = tmaze.config_from_dict(cfg)
        model, x0, b0 = tmaze.build(sc), sc.start, tmaze.prior(sc)
    elif name == "terrain":
        sc = terrain.config_from_dict(cfg)
        model, x0, b0 = terrain.build(sc), sc.start, terrain.prior(sc)
    else:
        sc = lane_change.config_from_dict(cfg)
        model = lane_change.build(sc)
        x0, b0 = lane_change.initial_state(sc), lane_change.prior(sc)
    bound = np.array([sc.vehicle.steer_max, sc.vehicle.accel_max])
    return Scenario(
        name=name,
        model=model,
        initial_state=np.asarray(x0, dtype=float),
        prior=b0,
        horizon=sc.horizon,
        segments=sc.segments,
        control_low=-bound,
        control_high=bound,
        config=cfg,
    )


def scenario_with_overrides(name: str, overrides: dict, base: Optional[dict] = None) -> Scenario:
    cfg = default_config(name) if base is None else dict(base)
    return build_scenario(name, apply_overrides(cfg, overrides))
