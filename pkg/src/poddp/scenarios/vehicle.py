"""Kinematic bicycle model and smooth shaping functions shared by scenarios."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# State layout: (px, py, theta, v). Control layout: (steer, accel).
PX, PY, TH, V = 0, 1, 2, 3
STEER, ACCEL = 0, 1


@dataclass(frozen=True)
class BicycleParams:
    wheelbase: float = 2.5  # m
    v_max: float = 30.0  # m/s
    steer_max: float = 0.6  # rad, enforced by clamp at execution
    accel_max: float = 8.0  # m/s^2, enforced by clamp at execution


def bicycle_step(x, u, dt: float, params: BicycleParams) -> np.ndarray:
    """Explicit-Euler kinematic bicycle step.

    Controls saturate at the actuator limits inside the dynamics (matching
    the execution-time clamp) and speed is clamped to [0, v_max].
    """
    px, py, th, v = x[PX], x[PY], x[TH], x[V]
    steer = np.clip(u[STEER], -params.steer_max, params.steer_max)
    accel = np.clip(u[ACCEL], -params.accel_max, params.accel_max)
    return np.array(
        [
            px + v * np.cos(th) * dt,
            py + v * np.sin(th) * dt,
            th + (v / params.wheelbase) * np.tan(steer) * dt,
            np.clip(v + accel * dt, 0.0, params.v_max),
        ]
    )


def bicycle_jacobians(x, u, dt: float, params: BicycleParams):
    """Analytic (f_x, f_u) of `bicycle_step`; clamps use their subgradients."""
    th, v = x[TH], x[V]
    steer = np.clip(u[STEER], -params.steer_max, params.steer_max)
    accel = np.clip(u[ACCEL], -params.accel_max, params.accel_max)
    steer_active = 1.0 if abs(u[STEER]) < params.steer_max else 0.0
    accel_active = 1.0 if abs(u[ACCEL]) < params.accel_max else 0.0
    v_active = 1.0 if 0.0 < v + accel * dt < params.v_max else 0.0
    f_x = np.array(
        [
            [1.0, 0.0, -v * np.sin(th) * dt, np.cos(th) * dt],
            [0.0, 1.0, v * np.cos(th) * dt, np.sin(th) * dt],
            [0.0, 0.0, 1.0, np.tan(steer) * dt / params.wheelbase],
            [0.0, 0.0, 0.0, v_active],
        ]
    )
    f_u = np.array(
        [
            [0.0, 0.0],
            [0.0, 0.0],
            [steer_active * v * dt / (params.wheelbase * np.cos(steer) ** 2), 0.0],
            [0.0, v_active * accel_active * dt],
        ]
    )
    return f_x, f_u


def clamp_control(u, params: BicycleParams) -> np.ndarray:
    """Hard actuator limits, applied at execution time only."""
    return np.array(
        [
            np.clip(u[STEER], -params.steer_max, params.steer_max),
            np.clip(u[ACCEL], -params.accel_max, params.accel_max),
        ]
    )


def sigmoid(x):
    # Clip keeps the unused np.where branch from overflowing; the sigmoid is
    # flat to double precision well inside +-500.
    x = np.clip(x, -500.0, 500.0)
    return np.where(x >= 0, 1.0 / (1.0 + np.exp(-x)), np.exp(x) / (1.0 + np.exp(x)))


def softplus(x):
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)
