"""T-maze: goal-location uncertainty.

A vehicle drives up a walled corridor that splits left and right. A binary
latent state places the goal in one arm; a scalar observation channel (mean
-1 for Left, +1 for Right) becomes more reliable as the vehicle progresses
up the corridor. Dynamics are deterministic and latent-independent, so all
evidence flows through the observation channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..belief import Belief, LatentSet
from ..model import ProblemModel
from .vehicle import (
    ACCEL,
    PX,
    PY,
    STEER,
    TH,
    V,
    BicycleParams,
    bicycle_jacobians,
    bicycle_step,
    sigmoid,
    softplus,
)

LEFT, RIGHT = 0, 1
OBS_MEANS = (-1.0, 1.0)


@dataclass(frozen=True)
class TMazeConfig:
    dt: float
    horizon: int
    segments: int
    vehicle: BicycleParams
    start: np.ndarray  # (px, py, theta, v)
    goal_lateral: float  # |x| of the two goals; Left is -x, Right is +x
    goal_forward: float  # y of both goals (the maze end)
    corridor_half_width: float
    corridor_open_y: float  # walls fade beyond this y
    wall_weight: float
    wall_sharpness: float  # softplus slope on the wall boundary
    gate_width: float  # y-extent of the wall fade
    goal_weight_running: float
    goal_weight_final: float
    speed_weight: float
    desired_speed: float
    steer_weight: float
    accel_weight: float
    sigma_level: float  # observation uncertainty level
    obs_decay_rate: float
    obs_decay_mid: float
    obs_var_floor_frac: float
    prior_left: float

    def goal(self, z: int) -> np.ndarray:
        sign = -1.0 if z == LEFT else 1.0
        return np.array([sign * self.goal_lateral, self.goal_forward])


def config_from_dict(cfg: dict) -> TMazeConfig:
    return TMazeConfig(
        dt=float(cfg["dt"]),
        horizon=int(cfg["horizon"]),
        segments=int(cfg["segments"]),
        vehicle=BicycleParams(
            wheelbase=float(cfg["wheelbase"]),
            v_max=float(cfg["v_max"]),
            steer_max=float(cfg["steer_max"]),
            accel_max=float(cfg["accel_max"]),
        ),
        start=np.array(
            [
                float(cfg["start_x"]),
                float(cfg["start_y"]),
                float(cfg["start_heading"]),
                float(cfg["start_speed"]),
            ]
        ),
        goal_lateral=float(cfg["goal_lateral"]),
        goal_forward=float(cfg["goal_forward"]),
        corridor_half_width=float(cfg["corridor_half_width"]),
        corridor_open_y=float(cfg["corridor_open_y"]),
        wall_weight=float(cfg["wall_weight"]),
        wall_sharpness=float(cfg["wall_sharpness"]),
        gate_width=float(cfg["gate_width"]),
        goal_weight_running=float(cfg["goal_weight_running"]),
        goal_weight_final=float(cfg["goal_weight_final"]),
        speed_weight=float(cfg["speed_weight"]),
        desired_speed=float(cfg["desired_speed"]),
        steer_weight=float(cfg["steer_weight"]),
        accel_weight=float(cfg["accel_weight"]),
        sigma_level=float(cfg["sigma_level"]),
        obs_decay_rate=float(cfg["obs_decay_rate"]),
        obs_decay_mid=float(cfg["obs_decay_mid"]),
        obs_var_floor_frac=float(cfg["obs_var_floor_frac"]),
        prior_left=float(cfg["prior_left"]),
    )


def observation_variance(cfg: TMazeConfig, py: float) -> float:
    """Smoothly decaying variance of the goal cue as the vehicle advances."""
    decay = 1.0 / (1.0 + np.exp(cfg.obs_decay_rate * (py - cfg.obs_decay_mid)))
    return cfg.sigma_level ** 2 * (decay + cfg.obs_var_floor_frac)


def _wall_profile(cfg: TMazeConfig, px: float):
    """Smooth squared-softplus wall penalty profile in px: (P, P', P'')."""
    s = cfg.wall_sharpness
    hw = cfg.corridor_half_width
    val = 0.0
    d1 = 0.0
    d2 = 0.0
    for sign in (1.0, -1.0):
        a = s * (sign * px - hw)
        f = softplus(a)
        sig = sigmoid(a)
        fp = sign * s * sig
        fpp = s * s * sig * (1.0 - sig)
        val += f * f
        d1 += 2.0 * f * fp
        d2 += 2.0 * (fp * fp + f * fpp)
    return val, d1, d2


def _wall_gate(cfg: TMazeConfig, py: float):
    """Wall activation in py: 1 inside the corridor, fading at the opening."""
    t = (cfg.corridor_open_y - py) / cfg.gate_width
    g = sigmoid(t)
    gp = -g * (1.0 - g) / cfg.gate_width
    gpp = g * (1.0 - g) * (1.0 - 2.0 * g) / cfg.gate_width ** 2
    return g, gp, gpp


def _wall_cost(cfg: TMazeConfig, px: float, py: float):
    p, p1, p2 = _wall_profile(cfg, px)
    g, g1, g2 = _wall_gate(cfg, py)
    w = cfg.wall_weight
    value = w * g * p
    grad = np.array([w * g * p1, w * g1 * p])
    hess = np.array([[w * g * p2, w * g1 * p1], [w * g1 * p1, w * g2 * p]])
    return value, grad, hess


def build(cfg: TMazeConfig) -> ProblemModel:
    dt = cfg.dt
    veh = cfg.vehicle

    def dynamics_mean(x, u, z):
        return bicycle_step(x, u, dt, veh)

    def dynamics_jacobians(x, u, z):
        return bicycle_jacobians(x, u, dt, veh)

    def observation_mean(x, z):
        return np.array([OBS_MEANS[z]])

    def observation_noise(x, z):
        return np.array([observation_variance(cfg, x[PY])])

    def observation_jacobian(x, z):
        return np.zeros((1, 4))

    def running_cost(x, u, z):
        goal = cfg.goal(z)
        d = x[:2] - goal
        wall, _, _ = _wall_cost(cfg, x[PX], x[PY])
        return (
            cfg.goal_weight_running * float(d @ d)
            + wall
            + cfg.speed_weight * (x[V] - cfg.desired_speed) ** 2
            + cfg.steer_weight * u[STEER] ** 2
            + cfg.accel_weight * u[ACCEL] ** 2
        )

    def running_cost_derivatives(x, u, z):
        goal = cfg.goal(z)
        d = x[:2] - goal
        _, wall_g, wall_h = _wall_cost(cfg, x[PX], x[PY])
        l_x = np.zeros(4)
        l_x[:2] = 2.0 * cfg.goal_weight_running * d + wall_g
        l_x[V] = 2.0 * cfg.speed_weight * (x[V] - cfg.desired_speed)
        l_xx = np.zeros((4, 4))
        l_xx[:2, :2] = 2.0 * cfg.goal_weight_running * np.eye(2) + wall_h
        l_xx[V, V] = 2.0 * cfg.speed_weight
        l_u = np.array(
            [2.0 * cfg.steer_weight * u[STEER], 2.0 * cfg.accel_weight * u[ACCEL]]
        )
        l_uu = np.diag([2.0 * cfg.steer_weight, 2.0 * cfg.accel_weight])
        return l_x, l_u, l_xx, np.zeros((4, 2)), l_uu

    def final_cost(x, z):
        d = x[:2] - cfg.goal(z)
        return cfg.goal_weight_final * float(d @ d)

    def final_cost_derivatives(x, z):
        d = x[:2] - cfg.goal(z)
        lf_x = np.zeros(4)
        lf_x[:2] = 2.0 * cfg.goal_weight_final * d
        lf_xx = np.zeros((4, 4))
        lf_xx[:2, :2] = 2.0 * cfg.goal_weight_final * np.eye(2)
        return lf_x, lf_xx

    return ProblemModel(
        state_dim=4,
        control_dim=2,
        obs_dim=1,
        latents=LatentSet(("Left", "Right")),
        dynamics_mean=dynamics_mean,
        observation_mean=observation_mean,
        observation_noise=observation_noise,
        running_cost=running_cost,
        final_cost=final_cost,
        dt=dt,
        dynamics_noise=None,  # deterministic, latent-independent dynamics
        dynamics_jacobians=dynamics_jacobians,
        observation_jacobian=observation_jacobian,
        running_cost_derivatives=running_cost_derivatives,
        final_cost_derivatives=final_cost_derivatives,
    )


def prior(cfg: TMazeConfig) -> Belief:
    return Belief(np.array([cfg.prior_left, 1.0 - cfg.prior_left]))
