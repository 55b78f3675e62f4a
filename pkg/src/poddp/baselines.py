"""Comparison planners: maximum-likelihood DDP and probability-weighted DDP.

Both reuse the contingency solver with a single-latent (chain) schedule.
MLDDP conditions the model on the most likely latent value; PWDDP stacks one
state copy per latent value, shares the control sequence across copies, and
minimizes the belief-weighted sum of their costs with the belief held fixed.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .belief import Belief, LatentSet, logits_from_belief
from .model import ProblemModel, condition_on_latent
from .solver import SolveResult, SolverConfig, solve

ROOT = ()


class PlannerKind(enum.Enum):
    PODDP = "poddp"
    MLDDP = "mlddp"
    PWDDP = "pwddp"


@dataclass
class ExecutablePlan:
    """A solved plan plus the rule for turning it into executed controls.

    `control(t, x, b)` evaluates the planned control at in-segment step t
    with feedback on the realized state x and belief b; t counts from the
    start of this plan. `exec_steps` is how many steps to execute before the
    next observation/replan point.
    """

    kind: PlannerKind
    result: SolveResult
    exec_steps: int
    controls: np.ndarray  # (exec_steps, nu) nominal first-segment controls
    converged: bool
    planned_cost: float
    _control_fn: Callable[[int, np.ndarray, Belief], np.ndarray]

    def control(self, t: int, x: np.ndarray, b: Belief) -> np.ndarray:
        return self._control_fn(t, x, b)


def _chain_config(config: SolverConfig) -> SolverConfig:
    """The same solver settings with a single-segment schedule."""
    return SolverConfig(
        horizon=config.horizon,
        segments=1,
        max_iterations=config.max_iterations,
        cost_tolerance=config.cost_tolerance,
        gradient_tolerance=config.gradient_tolerance,
        alpha_schedule=config.alpha_schedule,
        regularization_init=config.regularization_init,
        regularization_factor=config.regularization_factor,
        regularization_min=config.regularization_min,
        regularization_max=config.regularization_max,
        value_recursion=config.value_recursion,
    )


def poddp_plan(
    model: ProblemModel, x0, b0: Belief, config: SolverConfig, u_init=None
) -> ExecutablePlan:
    result = solve(model, x0, b0, config, u_init=u_init)
    tree = result.tree
    exec_steps = tree.segment_lengths[0]
    x_nom = tree.xs[ROOT]
    beta_nom = tree.betas[ROOT]

    def control_fn(t: int, x: np.ndarray, b: Belief) -> np.ndarray:
        u = tree.controls[ROOT][t]
        gain = tree.gains_feedback.get((ROOT, t))
        if gain is None:
            return u
        ds = np.concatenate(
            [x - x_nom[t], logits_from_belief(b).beta - beta_nom[t]]
        )
        return u + gain @ ds

    return ExecutablePlan(
        kind=PlannerKind.PODDP,
        result=result,
        exec_steps=exec_steps,
        controls=tree.controls[ROOT].copy(),
        converged=result.converged,
        planned_cost=result.cost,
        _control_fn=control_fn,
    )


def mlddp_plan(
    model: ProblemModel, x0, b0: Belief, config: SolverConfig, u_init=None
) -> ExecutablePlan:
    z_star = b0.argmax()  # ties break toward the lowest index
    conditioned = condition_on_latent(model, z_star)
    result = solve(
        conditioned, x0, Belief(np.ones(1)), _chain_config(config), u_init=u_init
    )
    tree = result.tree
    nx = model.state_dim
    x_nom = tree.xs[ROOT]

    def control_fn(t: int, x: np.ndarray, b: Belief) -> np.ndarray:
        u = tree.controls[ROOT][t]
        gain = tree.gains_feedback.get((ROOT, t))
        if gain is None:
            return u
        # the conditioned belief coordinate never deviates
        return u + gain[:, :nx] @ (x - x_nom[t])

    return ExecutablePlan(
        kind=PlannerKind.MLDDP,
        result=result,
        exec_steps=config.segment_lengths()[0],
        controls=tree.controls[ROOT].copy(),
        converged=result.converged,
        planned_cost=result.cost,
        _control_fn=control_fn,
    )


def stacked_model(model: ProblemModel, b: Belief) -> ProblemModel:
    """One state copy per latent value, shared controls, belief-weighted cost."""
    n = model.state_dim
    nz = model.num_latents
    w = b.probs

    def split(xs):
        return [xs[i * n : (i + 1) * n] for i in range(nz)]

    def dynamics_mean(xs, u, _z):
        return np.concatenate(
            [model.dynamics_mean(x, u, z) for z, x in enumerate(split(xs))]
        )

    def dynamics_jacobians(xs, u, _z):
        f_x = np.zeros((n * nz, n * nz))
        f_u = np.zeros((n * nz, model.control_dim))
        for z, x in enumerate(split(xs)):
            jx, ju = model.dynamics_jacobians(x, u, z)
            sl = slice(z * n, (z + 1) * n)
            f_x[sl, sl] = jx
            f_u[sl, :] = ju
        return f_x, f_u

    def running_cost(xs, u, _z):
        return float(
            sum(w[z] * model.running_cost(x, u, z) for z, x in enumerate(split(xs)))
        )

    def running_cost_derivatives(xs, u, _z):
        l_x = np.zeros(n * nz)
        l_u = np.zeros(model.control_dim)
        l_xx = np.zeros((n * nz, n * nz))
        l_xu = np.zeros((n * nz, model.control_dim))
        l_uu = np.zeros((model.control_dim, model.control_dim))
        for z, x in enumerate(split(xs)):
            gx, gu, gxx, gxu, guu = model.running_cost_derivatives(x, u, z)
            sl = slice(z * n, (z + 1) * n)
            l_x[sl] = w[z] * gx
            l_u += w[z] * gu
            l_xx[sl, sl] = w[z] * gxx
            l_xu[sl, :] = w[z] * gxu
            l_uu += w[z] * guu
        return l_x, l_u, l_xx, l_xu, l_uu

    def final_cost(xs, _z):
        return float(
            sum(w[z] * model.final_cost(x, z) for z, x in enumerate(split(xs)))
        )

    def final_cost_derivatives(xs, _z):
        lf_x = np.zeros(n * nz)
        lf_xx = np.zeros((n * nz, n * nz))
        for z, x in enumerate(split(xs)):
            gx, gxx = model.final_cost_derivatives(x, z)
            sl = slice(z * n, (z + 1) * n)
            lf_x[sl] = w[z] * gx
            lf_xx[sl, sl] = w[z] * gxx
        return lf_x, lf_xx

    return ProblemModel(
        state_dim=n * nz,
        control_dim=model.control_dim,
        obs_dim=model.obs_dim,
        latents=LatentSet(("stacked",)),
        dynamics_mean=dynamics_mean,
        observation_mean=lambda xs, z: np.zeros(model.obs_dim),
        observation_noise=lambda xs, z: np.ones(model.obs_dim),
        running_cost=running_cost,
        final_cost=final_cost,
        dt=model.dt,
        dynamics_noise=None,
        dynamics_jacobians=dynamics_jacobians if model.dynamics_jacobians else None,
        observation_jacobian=lambda xs, z: np.zeros((model.obs_dim, n * nz)),
        running_cost_derivatives=(
            running_cost_derivatives if model.running_cost_derivatives else None
        ),
        final_cost_derivatives=(
            final_cost_derivatives if model.final_cost_derivatives else None
        ),
    )


def pwddp_plan(
    model: ProblemModel, x0, b0: Belief, config: SolverConfig, u_init=None
) -> ExecutablePlan:
    n = model.state_dim
    nz = model.num_latents
    stacked = stacked_model(model, b0)
    xs0 = np.tile(np.asarray(x0, dtype=float), nz)
    result = solve(stacked, xs0, Belief(np.ones(1)), _chain_config(config), u_init=u_init)
    tree = result.tree
    x_nom = tree.xs[ROOT]

    def control_fn(t: int, x: np.ndarray, b: Belief) -> np.ndarray:
        u = tree.controls[ROOT][t]
        gain = tree.gains_feedback.get((ROOT, t))
        if gain is None:
            return u
        # every hypothesis copy sees the same realized state
        ds = np.tile(x, nz) - x_nom[t]
        return u + gain[:, : n * nz] @ ds

    return ExecutablePlan(
        kind=PlannerKind.PWDDP,
        result=result,
        exec_steps=config.segment_lengths()[0],
        controls=tree.controls[ROOT].copy(),
        converged=result.converged,
        planned_cost=result.cost,
        _control_fn=control_fn,
    )


_PLANNERS = {
    PlannerKind.PODDP: poddp_plan,
    PlannerKind.MLDDP: mlddp_plan,
    PlannerKind.PWDDP: pwddp_plan,
}


def plan(
    kind: PlannerKind,
    model: ProblemModel,
    x0,
    b0: Belief,
    config: SolverConfig,
    u_init=None,
) -> ExecutablePlan:
    return _PLANNERS[kind](model, x0, b0, config, u_init=u_init)
