"""Closed-loop Monte-Carlo evaluation with replanning at observation points.

Each episode samples a ground-truth latent value, then alternates planning
and execution: the current plan's first segment runs with feedback on the
realized state, process noise is applied at every timestep, and at each
segment boundary an observation is sampled, the belief is updated, and the
planner is invoked again over the remaining horizon. Costs accumulate under
the true latent value.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .baselines import ExecutablePlan, PlannerKind, plan
from .belief import Belief, DegenerateEvidenceError, bayes_update
from .model import ProblemModel
from .solver import SolverConfig


@dataclass
class StepRecord:
    x: np.ndarray
    u: np.ndarray
    cost: float
    observation: Optional[np.ndarray]  # sampled at segment boundaries only
    belief: np.ndarray  # belief in effect after this step's update (if any)


@dataclass
class EpisodeTrace:
    seed: int
    planner: PlannerKind
    true_z: int
    steps: List[StepRecord]
    final_state: np.ndarray
    final_cost: float
    cumulative_cost: float
    replans: int
    converged: bool  # every planning solve converged
    final_belief: np.ndarray = field(default_factory=lambda: np.array([]))


@dataclass
class BatchStats:
    planner: PlannerKind
    n: int
    mean: float
    stderr: float
    stderr_flag: bool  # True when n == 1 and the stderr is reported as 0
    costs: np.ndarray
    traces: List[EpisodeTrace]


def episode_streams(seed: int):
    """(ground truth, process noise, observation noise) generators."""
    gt, proc, obs = np.random.SeedSequence(seed).spawn(3)
    return (
        np.random.default_rng(gt),
        np.random.default_rng(proc),
        np.random.default_rng(obs),
    )


def _sample_transition(model: ProblemModel, x, u, z: int, rng) -> np.ndarray:
    mean = model.dynamics_mean(x, u, z)
    var = model.dynamics_noise_for(z)
    if var is None:
        return mean
    return mean + rng.standard_normal(model.state_dim) * np.sqrt(var)


def _sample_observation(model: ProblemModel, x, z: int, rng) -> np.ndarray:
    mean = np.atleast_1d(model.observation_mean(x, z))
    cov = np.asarray(model.observation_noise(x, z), dtype=float)
    if cov.ndim <= 1:
        std = np.sqrt(np.atleast_1d(cov))
        return mean + rng.standard_normal(mean.shape) * std
    return rng.multivariate_normal(mean, cov)


def _clamp(u, low, high):
    if low is None or high is None:
        return np.asarray(u, dtype=float)
    return np.clip(u, low, high)


def _warm_start(planner: PlannerKind, current: ExecutablePlan, seg_len: int, b: Belief):
    """Initial controls for the next replan, taken from the unexecuted tail.

    For PODDP the subtree under the most likely child becomes the new tree;
    the chain planners just drop the executed prefix.
    """
    tree = current.result.tree
    if planner is PlannerKind.PODDP:
        z = b.argmax()
        return {
            h[1:]: tree.controls[h].copy()
            for h in tree.controls
            if h[:1] == (z,)
        }
    return {(): tree.controls[()][seg_len:].copy()}


def execute_episode(
    planner: PlannerKind,
    model: ProblemModel,
    x0,
    b0: Belief,
    true_z: int,
    seed: int,
    config: SolverConfig,
    control_low=None,
    control_high=None,
    _plan_cache: Optional[dict] = None,
) -> EpisodeTrace:
    if not 0 <= true_z < model.num_latents:
        raise ValueError("true_z outside the latent set")
    _, proc_rng, obs_rng = episode_streams(seed)

    x = np.asarray(x0, dtype=float).copy()
    b = b0
    steps: List[StepRecord] = []
    cumulative = 0.0
    replans = 0
    converged = True
    warm = None  # next plan is seeded from the current plan's unexecuted tail
    remaining_segments = list(config.segment_lengths())

    while remaining_segments:
        horizon_left = int(sum(remaining_segments))
        seg_cfg = SolverConfig(
            horizon=horizon_left,
            boundaries=tuple(np.cumsum(remaining_segments[:-1]).tolist()) or None,
            segments=len(remaining_segments),
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
        # Plans are pure functions of (x, b, schedule); share them across
        # episodes so identical prefixes (always the initial solve) are
        # planned once per batch.
        cache_key = None
        if _plan_cache is not None:
            cache_key = (x.tobytes(), b.probs.tobytes(), len(remaining_segments))
            current = _plan_cache.get(cache_key)
            if current is None:
                current = plan(planner, model, x, b, seg_cfg, u_init=warm)
                _plan_cache[cache_key] = current
        else:
            current = plan(planner, model, x, b, seg_cfg, u_init=warm)
        converged = converged and current.converged
        seg_len = remaining_segments.pop(0)
        x_prev = None
        u_prev = None
        for t in range(seg_len):
            u = _clamp(current.control(t, x, b), control_low, control_high)
            step_cost = float(model.running_cost(x, u, true_z))
            cumulative += step_cost
            x_prev, u_prev = x, u
            x = _sample_transition(model, x, u, true_z, proc_rng)
            steps.append(StepRecord(x_prev, u, step_cost, None, b.probs.copy()))
        if remaining_segments:
            o = _sample_observation(model, x, true_z, obs_rng)
            try:
                b = bayes_update(o, x, u_prev, x_prev, b, model)
            except DegenerateEvidenceError:
                pass  # keep the prior belief when no hypothesis explains the data
            steps[-1].observation = np.atleast_1d(o)
            steps[-1].belief = b.probs.copy()
            replans += 1
            warm = _warm_start(planner, current, seg_len, b)

    final_cost = float(model.final_cost(x, true_z))
    cumulative += final_cost
    return EpisodeTrace(
        seed=seed,
        planner=planner,
        true_z=true_z,
        steps=steps,
        final_state=x,
        final_cost=final_cost,
        cumulative_cost=cumulative,
        replans=replans,
        converged=converged,
        final_belief=b.probs.copy(),
    )


def run_batch(
    planner: PlannerKind,
    model: ProblemModel,
    x0,
    prior: Belief,
    n: int,
    base_seed: int,
    config: SolverConfig,
    control_low=None,
    control_high=None,
) -> BatchStats:
    if n < 1:
        raise ValueError("n must be at least 1")
    traces = []
    cache: dict = {}
    for seed in range(base_seed, base_seed + n):
        gt_rng, _, _ = episode_streams(seed)
        true_z = int(gt_rng.choice(model.num_latents, p=prior.probs))
        traces.append(
            execute_episode(
                planner,
                model,
                x0,
                prior,
                true_z,
                seed,
                config,
                control_low,
                control_high,
                _plan_cache=cache,
            )
        )
    costs = np.array([tr.cumulative_cost for tr in traces])
    mean = float(np.mean(costs))
    if n == 1:
        stderr, flag = 0.0, True
    else:
        stderr, flag = float(np.std(costs, ddof=1) / math.sqrt(n)), False
    return BatchStats(
        planner=planner,
        n=n,
        mean=mean,
        stderr=stderr,
        stderr_flag=flag,
        costs=costs,
        traces=traces,
    )


def welch_t(a: Sequence[float], b: Sequence[float]) -> Tuple[float, float]:
    """Welch's two-sample t statistic and two-sided p value."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if len(a) < 2 or len(b) < 2:
        raise ValueError("each sample needs at least two observations")
    va, vb = np.var(a, ddof=1), np.var(b, ddof=1)
    se2 = va / len(a) + vb / len(b)
    diff = float(np.mean(a) - np.mean(b))
    if se2 == 0.0:
        return (0.0, 1.0) if diff == 0.0 else (math.copysign(math.inf, diff), 0.0)
    t = diff / math.sqrt(se2)
    df = se2 ** 2 / (
        (va / len(a)) ** 2 / (len(a) - 1) + (vb / len(b)) ** 2 / (len(b) - 1)
    )
    p = 2.0 * float(stats.t.sf(abs(t), df))
    return float(t), p


def write_episodes_csv(traces: Sequence[EpisodeTrace], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["seed", "planner", "true_z", "cumulative_cost", "replans", "converged"]
        )
        for tr in sorted(traces, key=lambda t: (t.planner.value, t.seed)):
            writer.writerow(
                [
                    tr.seed,
                    tr.planner.value,
                    tr.true_z,
                    repr(tr.cumulative_cost),
                    tr.replans,
                    tr.converged,
                ]
            )


def write_summary_json(stats: Sequence[BatchStats], config_hash: str, path, extra=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "config_hash": config_hash,
        "summaries": [
            {
                "planner": s.planner.value,
                "n": s.n,
                "mean": s.mean,
                "stderr": s.stderr,
                "stderr_flag": s.stderr_flag,
            }
            for s in stats
        ],
    }
    if extra:
        payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def trace_to_dict(tr: EpisodeTrace) -> dict:
    return {
        "seed": tr.seed,
        "planner": tr.planner.value,
        "true_z": tr.true_z,
        "cumulative_cost": tr.cumulative_cost,
        "final_cost": tr.final_cost,
        "replans": tr.replans,
        "converged": tr.converged,
        "final_state": tr.final_state.tolist(),
        "final_belief": tr.final_belief.tolist(),
        "steps": [
            {
                "x": s.x.tolist(),
                "u": s.u.tolist(),
                "cost": s.cost,
                "observation": None if s.observation is None else s.observation.tolist(),
                "belief": s.belief.tolist(),
            }
            for s in tr.steps
        ],
    }
