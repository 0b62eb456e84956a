"""Closed-form rectified-flow velocity fields and the flow-matching loss.

Convention used everywhere: ``x_t = (1 - t) * x_data + t * eps`` with
``eps ~ N(0, I)``, so ``t = 1`` is pure noise and the marginal velocity is
``v(x, t) = E[eps - x_data | x_t = x]``. Sampling integrates from t=1 to t=0.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np
from scipy.special import logsumexp

from .core import (
    DTYPE,
    NULL_CONDITION,
    STREAM_LOSS,
    Condition,
    DegeneratePosterior,
    InvalidArgument,
    NotFound,
    SeedSpec,
    SingularityError,
    check_same_shape,
    rng,
)

VelocityField = Callable[[np.ndarray, float, Condition], np.ndarray]


@dataclass(frozen=True)
class Delta:
    center: np.ndarray


@dataclass(frozen=True)
class IsotropicGaussian:
    center: np.ndarray
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise InvalidArgument(f"sigma must be positive, got {self.sigma}")


@dataclass(frozen=True)
class Mixture:
    components: tuple  # of (weight, center, sigma)

    def __post_init__(self):
        if not self.components:
            raise InvalidArgument("mixture needs at least one component")
        weights = np.array([c[0] for c in self.components], dtype=DTYPE)
        if np.any(weights <= 0):
            raise InvalidArgument("mixture weights must be positive")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidArgument(f"mixture weights must sum to 1, got {weights.sum()!r}")
        check_same_shape(*(np.asarray(c[1]) for c in self.components), what="mixture centers")
        for _, _, sigma in self.components:
            if not sigma > 0:
                raise InvalidArgument(f"mixture sigmas must be positive, got {sigma}")


DataDistribution = Union[Delta, IsotropicGaussian, Mixture]


def _check_time(t: float) -> None:
    if t == 0:
        raise SingularityError("velocity field evaluated at t=0")
    if not 0 < t <= 1:
        raise InvalidArgument(f"t must lie in (0, 1], got {t}")


def delta_velocity(x, t: float, mu) -> np.ndarray:
    """Velocity of a point mass at ``mu``: ``(x - mu) / t``."""
    _check_time(t)
    x = np.asarray(x, dtype=DTYPE)
    mu = np.asarray(mu, dtype=DTYPE)
    check_same_shape(x, mu, what="state and center")
    return (x - mu) / t


def gaussian_velocity(x, t: float, center, sigma: float) -> np.ndarray:
    """Velocity of ``N(center, sigma^2 I)`` data.

    The posterior mean of the noise and data given ``x_t`` are both affine in
    ``x``, which gives ``((t - (1-t) sigma^2) / s^2) (x - m) - center`` with
    ``m = (1-t) center`` and ``s^2 = (1-t)^2 sigma^2 + t^2``.
    """
    _check_time(t)
    if not sigma > 0:
        raise InvalidArgument(f"sigma must be positive, got {sigma}")
    x = np.asarray(x, dtype=DTYPE)
    center = np.asarray(center, dtype=DTYPE)
    check_same_shape(x, center, what="state and center")
    s2 = (1 - t) ** 2 * sigma**2 + t**2
    slope = (t - (1 - t) * sigma**2) / s2
    return slope * (x - (1 - t) * center) - center


def mixture_weights(x, t: float, mix: Mixture) -> np.ndarray:
    """Posterior component probabilities given the whole state ``x``."""
    _check_time(t)
    x = np.asarray(x, dtype=DTYPE)
    d = x.size
    logs = []
    for weight, center, sigma in mix.components:
        s2 = (1 - t) ** 2 * sigma**2 + t**2
        r = x - (1 - t) * np.asarray(center, dtype=DTYPE)
        logs.append(np.log(weight) - 0.5 * np.sum(r * r) / s2 - 0.5 * d * np.log(2 * np.pi * s2))
    logs = np.array(logs, dtype=DTYPE)
    norm = logsumexp(logs)
    if not np.isfinite(norm):
        raise DegeneratePosterior(f"mixture posterior is degenerate at t={t}")
    w = np.exp(logs - norm)
    if not np.any(w > 0):
        raise DegeneratePosterior(f"all mixture posterior weights underflow at t={t}")
    return w


def mixture_velocity(x, t: float, mix: Mixture) -> np.ndarray:
    x = np.asarray(x, dtype=DTYPE)
    w = mixture_weights(x, t, mix)
    if len(mix.components) == 1:
        _, center, sigma = mix.components[0]
        return gaussian_velocity(x, t, center, sigma)
    out = np.zeros_like(x)
    for wk, (_, center, sigma) in zip(w, mix.components):
        out += wk * gaussian_velocity(x, t, center, sigma)
    return out


def distribution_velocity(x, t: float, dist: DataDistribution) -> np.ndarray:
    if isinstance(dist, Delta):
        return delta_velocity(x, t, dist.center)
    if isinstance(dist, IsotropicGaussian):
        return gaussian_velocity(x, t, dist.center, dist.sigma)
    if isinstance(dist, Mixture):
        return mixture_velocity(x, t, dist)
    raise InvalidArgument(f"unknown distribution type {type(dist).__name__}")


def sample_distribution(dist: DataDistribution, gen: np.random.Generator) -> np.ndarray:
    if isinstance(dist, Delta):
        return np.array(dist.center, dtype=DTYPE)
    if isinstance(dist, IsotropicGaussian):
        center = np.asarray(dist.center, dtype=DTYPE)
        return center + dist.sigma * gen.standard_normal(center.shape)
    if isinstance(dist, Mixture):
        weights = np.array([c[0] for c in dist.components], dtype=DTYPE)
        k = gen.choice(len(weights), p=weights / weights.sum())
        _, center, sigma = dist.components[k]
        center = np.asarray(center, dtype=DTYPE)
        return center + sigma * gen.standard_normal(center.shape)
    raise InvalidArgument(f"unknown distribution type {type(dist).__name__}")


class AnalyticField:
    """Velocity field backed by a registry of closed-form data distributions.

    ``field(x, t, condition)`` resolves ``condition.distribution`` in the
    registry. The null condition resolves to the reserved ``"∅"`` entry.
    """

    def __init__(self, registry: Mapping[str, DataDistribution]):
        self.registry = dict(registry)

    def resolve(self, condition: Condition) -> DataDistribution:
        try:
            return self.registry[condition.distribution]
        except KeyError:
            raise NotFound(f"no distribution registered for condition {condition.id!r}") from None

    def __call__(self, x, t: float, condition: Condition) -> np.ndarray:
        return distribution_velocity(x, t, self.resolve(condition))


def cfg_combine(v_uncond, v_cond, scale: float) -> np.ndarray:
    """Classifier-free guidance: ``v_uncond + scale * (v_cond - v_uncond)``."""
    v_uncond = np.asarray(v_uncond, dtype=DTYPE)
    v_cond = np.asarray(v_cond, dtype=DTYPE)
    check_same_shape(v_uncond, v_cond, what="guidance branches")
    if scale == 1:
        return v_cond.copy()
    if scale == 0:
        return v_uncond.copy()
    return v_uncond + scale * (v_cond - v_uncond)


def guided_velocity(field: VelocityField, x, t: float, condition: Condition, scale: float) -> np.ndarray:
    """Evaluate ``field`` under guidance, skipping the null branch at scale 1."""
    v_cond = field(x, t, condition)
    if scale == 1:
        return np.asarray(v_cond, dtype=DTYPE)
    return cfg_combine(field(x, t, NULL_CONDITION), v_cond, scale)


def fm_loss(field: VelocityField, dist: DataDistribution, condition: Condition, n_samples: int, seed: SeedSpec) -> float:
    """Monte-Carlo flow-matching loss ``E || v(x_t, t) - (eps - x_data) ||^2``.

    Squared norms are summed over the whole tensor and averaged over samples.
    """
    if n_samples < 1:
        raise InvalidArgument(f"n_samples must be >= 1, got {n_samples}")
    gen = rng(seed.at(stream=STREAM_LOSS))
    total = 0.0
    for _ in range(n_samples):
        t = 1.0 - gen.random()  # (0, 1]
        x_data = sample_distribution(dist, gen)
        eps = gen.standard_normal(x_data.shape)
        x_t = (1 - t) * x_data + t * eps
        r = np.asarray(field(x_t, t, condition), dtype=DTYPE) - (eps - x_data)
        total += float(np.sum(r * r))
    return total / n_samples
