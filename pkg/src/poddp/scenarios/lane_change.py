"""Lane change around another driver of unknown disposition.

The planner's vehicle wants to merge into an adjacent lane occupied by
another vehicle. The other vehicle follows an IDM law whose parameters are
set by a binary latent state: a Nice driver yields to the merging vehicle
(and prefers a lower cruise speed), an Aggressive one ignores it. As in the
rough-terrain scenario there is no separate observation channel; evidence
about the latent state comes from the other vehicle's noisy motion.

State layout: the four bicycle coordinates of the planner's vehicle followed
by the other vehicle's longitudinal position and speed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..belief import Belief, LatentSet
from ..model import ProblemModel
from .idm import IDMParams, idm_accel_with_partials
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
)

NICE, AGGRESSIVE = 0, 1
LON_O, V_O = 4, 5  # other-vehicle state indices
STATE_DIM = 6


@dataclass(frozen=True)
class LaneChangeConfig:
    dt: float
    horizon: int
    segments: int
    vehicle: BicycleParams
    start: np.ndarray  # ego (x, y, heading, v)
    other_start_lon: float
    other_start_speed: float
    other_speed_max: float
    lane_y: float  # lateral center of the target lane
    overlap_width: float  # lateral scale of the lane-occupancy fade
    idm_nice: IDMParams
    idm_aggressive: IDMParams
    desired_speed: float  # ego cruise speed
    lane_end: float  # longitude where the starting lane runs out
    lane_end_gain: float  # escalation of the lane cost past lane_end
    lane_end_width: float  # longitudinal scale of the escalation
    lane_weight_running: float
    lane_weight_final: float
    heading_weight: float
    speed_weight: float
    steer_weight: float
    accel_weight: float
    collision_weight: float
    collision_lon_scale: float
    collision_lat_scale: float
    process_std: np.ndarray  # per-state-dimension noise std dev
    prior_nice: float

    def idm_for(self, z: int) -> IDMParams:
        return self.idm_nice if z == NICE else self.idm_aggressive


def config_from_dict(cfg: dict) -> LaneChangeConfig:
    def idm(prefix: str, yielding: float) -> IDMParams:
        return IDMParams(
            desired_speed=float(cfg[f"{prefix}_desired_speed"]),
            time_headway=float(cfg["idm_time_headway"]),
            max_accel=float(cfg["idm_max_accel"]),
            comfort_decel=float(cfg["idm_comfort_decel"]),
            min_gap=float(cfg["idm_min_gap"]),
            yielding=yielding,
            yield_onset=float(cfg["idm_yield_onset"]),
            gap_floor=float(cfg["idm_gap_floor"]),
        )

    return LaneChangeConfig(
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
        other_start_lon=float(cfg["other_start_lon"]),
        other_start_speed=float(cfg["other_start_speed"]),
        other_speed_max=float(cfg["other_speed_max"]),
        lane_y=float(cfg["lane_y"]),
        overlap_width=float(cfg["overlap_width"]),
        idm_nice=idm("nice", 1.0),
        idm_aggressive=idm("aggressive", 0.0),
        desired_speed=float(cfg["desired_speed"]),
        lane_end=float(cfg["lane_end"]),
        lane_end_gain=float(cfg["lane_end_gain"]),
        lane_end_width=float(cfg["lane_end_width"]),
        lane_weight_running=float(cfg["lane_weight_running"]),
        lane_weight_final=float(cfg["lane_weight_final"]),
        heading_weight=float(cfg["heading_weight"]),
        speed_weight=float(cfg["speed_weight"]),
        steer_weight=float(cfg["steer_weight"]),
        accel_weight=float(cfg["accel_weight"]),
        collision_weight=float(cfg["collision_weight"]),
        collision_lon_scale=float(cfg["collision_lon_scale"]),
        collision_lat_scale=float(cfg["collision_lat_scale"]),
        process_std=np.array(
            [
                float(cfg["process_std_x"]),
                float(cfg["process_std_y"]),
                float(cfg["process_std_heading"]),
                float(cfg["process_std_speed"]),
                float(cfg["process_std_other_lon"]),
                float(cfg["process_std_other_speed"]),
            ]
        ),
        prior_nice=float(cfg["prior_nice"]),
    )


def lane_overlap(cfg: LaneChangeConfig, py: float):
    """Occupancy of the target lane as a function of lateral position.

    Returns (overlap, d overlap / d py); 0 in the starting lane, 1 at the
    target lane center.
    """
    t = (py - 0.5 * cfg.lane_y) / cfg.overlap_width
    s = sigmoid(t)
    return float(s), float(s * (1.0 - s) / cfg.overlap_width)


def _other_accel(cfg: LaneChangeConfig, x, z: int):
    ov, dov = lane_overlap(cfg, x[PY])
    a, g = idm_accel_with_partials(
        x[PX], x[V], x[LON_O], x[V_O], ov, cfg.idm_for(z)
    )
    # chain partials into state coordinates (px, py, th, v, lon_o, v_o)
    da = np.array([g[0], g[4] * dov, 0.0, g[1], g[2], g[3]])
    return a, da


def build(cfg: LaneChangeConfig) -> ProblemModel:
    dt = cfg.dt
    veh = cfg.vehicle

    def dynamics_mean(x, u, z):
        a, _ = _other_accel(cfg, x, z)
        ego = bicycle_step(x[:4], u, dt, veh)
        v_o = np.clip(x[V_O] + dt * a, 0.0, cfg.other_speed_max)
        return np.concatenate([ego, [x[LON_O] + dt * x[V_O], v_o]])

    def dynamics_jacobians(x, u, z):
        a, da = _other_accel(cfg, x, z)
        ego_fx, ego_fu = bicycle_jacobians(x[:4], u, dt, veh)
        f_x = np.zeros((STATE_DIM, STATE_DIM))
        f_u = np.zeros((STATE_DIM, 2))
        f_x[:4, :4] = ego_fx
        f_u[:4, :] = ego_fu
        f_x[LON_O, LON_O] = 1.0
        f_x[LON_O, V_O] = dt
        v_o_next = x[V_O] + dt * a
        active = 1.0 if 0.0 < v_o_next < cfg.other_speed_max else 0.0
        f_x[V_O, :] = active * dt * da
        f_x[V_O, V_O] += active
        return f_x, f_u

    def observation_mean(x, z):
        return np.zeros(1)

    def observation_noise(x, z):
        return np.ones(1)

    def observation_jacobian(x, z):
        return np.zeros((1, STATE_DIM))

    def _collision(x):
        """Gaussian-bump proximity penalty; value, gradient, Hessian."""
        dx = x[PX] - x[LON_O]
        dy = x[PY] - cfg.lane_y
        ax = 1.0 / cfg.collision_lon_scale ** 2
        ay = 1.0 / cfg.collision_lat_scale ** 2
        c = cfg.collision_weight * np.exp(-(dx * dx) * ax - (dy * dy) * ay)
        g_exp = np.zeros(STATE_DIM)  # gradient of the exponent
        g_exp[PX] = -2.0 * dx * ax
        g_exp[PY] = -2.0 * dy * ay
        g_exp[LON_O] = 2.0 * dx * ax
        h_exp = np.zeros((STATE_DIM, STATE_DIM))
        h_exp[PX, PX] = h_exp[LON_O, LON_O] = -2.0 * ax
        h_exp[PX, LON_O] = h_exp[LON_O, PX] = 2.0 * ax
        h_exp[PY, PY] = -2.0 * ay
        grad = c * g_exp
        hess = c * (np.outer(g_exp, g_exp) + h_exp)
        return float(c), grad, hess

    def _lane_urgency(px):
        """The starting lane runs out near lane_end: the lane-keeping weight
        escalates smoothly with longitude. Returns (weight, ds/dpx, d2s/dpx2
        scaled by the gain)."""
        s = sigmoid((px - cfg.lane_end) / cfg.lane_end_width)
        w = cfg.lane_weight_running * (1.0 + cfg.lane_end_gain * s)
        g1 = cfg.lane_weight_running * cfg.lane_end_gain * s * (1.0 - s) / cfg.lane_end_width
        g2 = (
            cfg.lane_weight_running
            * cfg.lane_end_gain
            * s
            * (1.0 - s)
            * (1.0 - 2.0 * s)
            / cfg.lane_end_width ** 2
        )
        return w, g1, g2

    def running_cost(x, u, z):
        c, _, _ = _collision(x)
        w, _, _ = _lane_urgency(x[PX])
        return (
            w * (x[PY] - cfg.lane_y) ** 2
            + cfg.heading_weight * x[TH] ** 2
            + cfg.speed_weight * (x[V] - cfg.desired_speed) ** 2
            + cfg.steer_weight * u[STEER] ** 2
            + cfg.accel_weight * u[ACCEL] ** 2
            + c
        )

    def running_cost_derivatives(x, u, z):
        _, c_g, c_h = _collision(x)
        w, w1, w2 = _lane_urgency(x[PX])
        e = x[PY] - cfg.lane_y
        l_x = c_g.copy()
        l_x[PX] += w1 * e * e
        l_x[PY] += 2.0 * w * e
        l_x[TH] += 2.0 * cfg.heading_weight * x[TH]
        l_x[V] += 2.0 * cfg.speed_weight * (x[V] - cfg.desired_speed)
        l_xx = c_h.copy()
        l_xx[PX, PX] += w2 * e * e
        l_xx[PX, PY] += 2.0 * w1 * e
        l_xx[PY, PX] += 2.0 * w1 * e
        l_xx[PY, PY] += 2.0 * w
        l_xx[TH, TH] += 2.0 * cfg.heading_weight
        l_xx[V, V] += 2.0 * cfg.speed_weight
        l_u = np.array(
            [2.0 * cfg.steer_weight * u[STEER], 2.0 * cfg.accel_weight * u[ACCEL]]
        )
        l_uu = np.diag([2.0 * cfg.steer_weight, 2.0 * cfg.accel_weight])
        return l_x, l_u, l_xx, np.zeros((STATE_DIM, 2)), l_uu

    def final_cost(x, z):
        c, _, _ = _collision(x)
        return (
            cfg.lane_weight_final * (x[PY] - cfg.lane_y) ** 2
            + cfg.heading_weight * x[TH] ** 2
            + c
        )

    def final_cost_derivatives(x, z):
        _, c_g, c_h = _collision(x)
        lf_x = c_g.copy()
        lf_x[PY] += 2.0 * cfg.lane_weight_final * (x[PY] - cfg.lane_y)
        lf_x[TH] += 2.0 * cfg.heading_weight * x[TH]
        lf_xx = c_h.copy()
        lf_xx[PY, PY] += 2.0 * cfg.lane_weight_final
        lf_xx[TH, TH] += 2.0 * cfg.heading_weight
        return lf_x, lf_xx

    var = cfg.process_std ** 2
    return ProblemModel(
        state_dim=STATE_DIM,
        control_dim=2,
        obs_dim=1,
        latents=LatentSet(("Nice", "Aggressive")),
        dynamics_mean=dynamics_mean,
        observation_mean=observation_mean,
        observation_noise=observation_noise,
        running_cost=running_cost,
        final_cost=final_cost,
        dt=dt,
        dynamics_noise=[var, var],
        dynamics_jacobians=dynamics_jacobians,
        observation_jacobian=observation_jacobian,
        running_cost_derivatives=running_cost_derivatives,
        final_cost_derivatives=final_cost_derivatives,
    )


def initial_state(cfg: LaneChangeConfig) -> np.ndarray:
    return np.concatenate(
        [cfg.start, [cfg.other_start_lon, cfg.other_start_speed]]
    )


def prior(cfg: LaneChangeConfig) -> Belief:
    return Belief(np.array([cfg.prior_nice, 1.0 - cfg.prior_nice]))
