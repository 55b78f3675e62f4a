"""Discrete-latent belief representation and Bayesian updating.

Beliefs over the latent set are carried in two forms: a probability vector
(`Belief`) and an unconstrained logit vector (`BeliefLogits`) related by a
softmax. The solver differentiates through the logit parameterization, so
perturbations never leave the probability simplex.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Probability floor applied before taking logs and after every Bayes update.
# Keeps logits finite and belief derivatives bounded near the simplex boundary.
BELIEF_FLOOR = 1e-9


class DegenerateEvidenceError(ValueError):
    """Raised when an observation has (numerically) zero likelihood under
    every latent hypothesis."""


@dataclass(frozen=True)
class LatentSet:
    """Ordered, immutable set of latent-state labels. Indices are stable."""

    labels: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        if len(labels) < 1:
            raise ValueError("latent set must contain at least one label")
        if len(set(labels)) != len(labels):
            raise ValueError("latent labels must be distinct")
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return len(self.labels)

    def index(self, label) -> int:
        return self.labels.index(label)


@dataclass(frozen=True)
class Belief:
    """Probability vector over the latent set."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.ndim != 1 or p.size < 1:
            raise ValueError("belief must be a non-empty vector")
        if np.any(p < 0) or not np.isfinite(p).all():
            raise ValueError("belief entries must be finite and non-negative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"belief must sum to 1, got {p.sum()!r}")
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return self.probs.size

    def argmax(self) -> int:
        # Ties break toward the lowest index (np.argmax convention).
        return int(np.argmax(self.probs))


@dataclass(frozen=True)
class BeliefLogits:
    """Unconstrained logit parameterization of a belief (softmax inverse)."""

    beta: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.beta, dtype=float)
        if b.ndim != 1 or b.size < 1:
            raise ValueError("logits must be a non-empty vector")
        if not np.isfinite(b).all():
            raise ValueError("logits must be finite")
        object.__setattr__(self, "beta", b)

    def __len__(self):
        return self.beta.size


@dataclass(frozen=True)
class BeliefState:
    """Continuous state paired with belief logits: the planner's point."""

    x: np.ndarray
    beta: BeliefLogits

    def __post_init__(self):
        object.__setattr__(self, "x", np.asarray(self.x, dtype=float))

    @property
    def belief(self) -> Belief:
        return belief_from_logits(self.beta)

    def as_vector(self) -> np.ndarray:
        """Concatenated (x, beta) vector, state first."""
        return np.concatenate([self.x, self.beta.beta])


def softmax(beta: np.ndarray) -> np.ndarray:
    """Numerically stable softmax (max-subtraction)."""
    b = np.asarray(beta, dtype=float)
    e = np.exp(b - b.max())
    return e / e.sum()


def belief_from_logits(beta: BeliefLogits | np.ndarray) -> Belief:
    """Softmax map from logits to the probability simplex."""
    raw = beta.beta if isinstance(beta, BeliefLogits) else np.asarray(beta, dtype=float)
    if not np.isfinite(raw).all():
        raise ValueError("logits must be finite")
    return Belief(softmax(raw))


def logits_from_belief(b: Belief) -> BeliefLogits:
    """Elementwise log of the (floored, renormalized) belief.

    The floor keeps zero-probability entries representable; the round trip
    through `belief_from_logits` is exact to floating precision away from
    the floor.
    """
    p = floor_probs(b.probs)
    return BeliefLogits(np.log(p))


def floor_probs(probs: np.ndarray, floor: float = BELIEF_FLOOR) -> np.ndarray:
    """Clamp probabilities below by `floor` and renormalize."""
    p = np.maximum(np.asarray(probs, dtype=float), floor)
    return p / p.sum()


def softmax_jacobian(beta: np.ndarray) -> np.ndarray:
    """d softmax / d beta: diag(p) - p p^T."""
    p = softmax(beta)
    return np.diag(p) - np.outer(p, p)


def softmax_hessian(beta: np.ndarray, z: int) -> np.ndarray:
    """Second derivative of the z-th softmax output w.r.t. the logits."""
    p = softmax(beta)
    e = np.zeros_like(p)
    e[z] = 1.0
    d = e - p
    return p[z] * (np.outer(d, d) - np.diag(p) + np.outer(p, p))


def gaussian_log_density(value: np.ndarray, mean: np.ndarray, cov) -> float:
    """Log density of a (possibly diagonal) Gaussian.

    `cov` may be a scalar variance, a vector of per-dimension variances, or
    a full covariance matrix.
    """
    v = np.atleast_1d(np.asarray(value, dtype=float))
    m = np.atleast_1d(np.asarray(mean, dtype=float))
    r = v - m
    c = np.asarray(cov, dtype=float)
    if c.ndim <= 1:
        var = np.broadcast_to(np.atleast_1d(c), r.shape)
        if np.any(var <= 0):
            raise ValueError("variances must be positive")
        return float(-0.5 * np.sum(r * r / var + np.log(2.0 * np.pi * var)))
    sign, logdet = np.linalg.slogdet(c)
    if sign <= 0:
        raise ValueError("covariance must be positive definite")
    sol = np.linalg.solve(c, r)
    return float(-0.5 * (r @ sol + logdet + r.size * np.log(2.0 * np.pi)))


def log_posterior_update(log_prior: np.ndarray, log_likelihood: np.ndarray) -> np.ndarray:
    """Normalized posterior from log prior and per-hypothesis log likelihood."""
    joint = np.asarray(log_prior, dtype=float) + np.asarray(log_likelihood, dtype=float)
    finite = np.isfinite(joint)
    if not finite.any():
        raise DegenerateEvidenceError(
            "evidence has zero likelihood under every latent hypothesis"
        )
    m = joint[finite].max()
    w = np.where(finite, np.exp(np.where(finite, joint, m) - m), 0.0)
    total = w.sum()
    if total < 1e-300:
        raise DegenerateEvidenceError(
            "total unnormalized posterior mass underflowed"
        )
    return floor_probs(w / total)


def bayes_update(o, x_next, u, x, b: Belief, model) -> Belief:
    """One recursive Bayes step over the latent hypotheses.

    posterior(z) is proportional to
    p(o | x_next, z) * p(x_next | x, u, z) * b(z), with Gaussian likelihoods
    taken from the model's observation and dynamics noise. A dynamics noise
    of ``None`` (deterministic dynamics) contributes no evidence.
    """
    loglik = np.zeros(len(b))
    for z in range(len(b)):
        obs_mean = model.observation_mean(x_next, z)
        obs_cov = model.observation_noise(x_next, z)
        loglik[z] = gaussian_log_density(o, obs_mean, obs_cov)
        dyn_cov = model.dynamics_noise_for(z)
        if dyn_cov is not None:
            dyn_mean = model.dynamics_mean(x, u, z)
            loglik[z] += gaussian_log_density(x_next, dyn_mean, dyn_cov)
    with np.errstate(divide="ignore"):
        log_prior = np.log(b.probs)
    return Belief(log_posterior_update(log_prior, loglik))
