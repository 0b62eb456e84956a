"""Shared primitives: video arrays, conditions, the edit schedule and seeded noise.

Videos are plain ``numpy`` arrays of shape ``(T, H, W, C)``. All arithmetic runs
in float64; files store float32.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

DTYPE = np.float64

# Reserved id of the unconditional branch used by classifier-free guidance.
NULL_ID = "∅"

# Stream domains keep unrelated random draws from colliding on (step, sample).
STREAM_NOISE = 0
STREAM_SUBSETS = 1
STREAM_LOSS = 2
STREAM_SCENE = 3
STREAM_ATTENTION = 4


class DirectEditError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(DirectEditError, ValueError):
    pass


class NotFound(DirectEditError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else "not found"


class SingularityError(DirectEditError, ZeroDivisionError):
    pass


class DegeneratePosterior(DirectEditError, FloatingPointError):
    pass


def as_video(data, name: str = "video") -> np.ndarray:
    """Validate and convert ``data`` to a float64 ``(T, H, W, C)`` array."""
    arr = np.asarray(data, dtype=DTYPE)
    if arr.ndim != 4:
        raise InvalidArgument(f"{name} must have 4 dims (T, H, W, C), got shape {arr.shape}")
    if min(arr.shape) < 1:
        raise InvalidArgument(f"{name} has a zero-sized dim: {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgument(f"{name} contains non-finite values")
    return arr


def check_same_shape(*arrays: np.ndarray, what: str = "tensors") -> None:
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise InvalidArgument(f"shape mismatch between {what}: {sorted(shapes)}")


@dataclass(frozen=True)
class Condition:
    """Abstract editing condition standing in for a text prompt.

    ``distribution`` names an entry of the field's registry; ``keyword`` is the
    attention target used by the masking stage.
    """

    id: str
    distribution: str = ""
    keyword: str = ""

    def __post_init__(self):
        if not self.id:
            raise InvalidArgument("condition id must be nonempty")
        if not self.distribution:
            object.__setattr__(self, "distribution", self.id)

    @property
    def is_null(self) -> bool:
        return self.id == NULL_ID


NULL_CONDITION = Condition(NULL_ID, NULL_ID, "")


@dataclass(frozen=True)
class EditSchedule:
    n_total: int
    n_skip: int
    grid: tuple

    @property
    def t_start(self) -> float:
        return self.grid[0]

    def steps(self):
        """Yield ``(step_index, t, t_next)`` for every Euler step."""
        for i in range(len(self.grid) - 1):
            yield i, self.grid[i], self.grid[i + 1]


def make_schedule(n_total: int, n_skip: int = 0) -> EditSchedule:
    """Uniform time grid from ``1 - n_skip/n_total`` down to 0."""
    n_total, n_skip = int(n_total), int(n_skip)
    if n_total < 1:
        raise InvalidArgument(f"n_total must be >= 1, got {n_total}")
    if not 0 <= n_skip < n_total:
        raise InvalidArgument(f"n_skip must satisfy 0 <= n_skip < n_total, got {n_skip} (n_total={n_total})")
    grid = tuple((n_total - i) / n_total for i in range(n_skip, n_total + 1))
    return EditSchedule(n_total, n_skip, grid)


@dataclass(frozen=True)
class SeedSpec:
    """Coordinates of one counter-based random stream."""

    master_seed: int
    step: int = 0
    sample: int = 0
    stream: int = STREAM_NOISE

    def at(self, step: int | None = None, sample: int | None = None, stream: int | None = None) -> "SeedSpec":
        return SeedSpec(
            self.master_seed,
            self.step if step is None else step,
            self.sample if sample is None else sample,
            self.stream if stream is None else stream,
        )


def rng(spec: SeedSpec) -> np.random.Generator:
    """Philox generator keyed by the full stream coordinate.

    The key depends only on ``spec`` so any evaluation order of (step, sample)
    pairs reproduces the same draws.
    """
    if spec.master_seed < 0 or spec.master_seed >= 2**64:
        raise InvalidArgument(f"master_seed must be a 64-bit unsigned integer, got {spec.master_seed}")
    seq = np.random.SeedSequence(spec.master_seed, spawn_key=(spec.stream, spec.step, spec.sample))
    return np.random.Generator(np.random.Philox(seq))


def seed_noise(spec: SeedSpec, shape: Sequence[int]) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if not shape or min(shape) < 1:
        raise InvalidArgument(f"noise shape must be nonempty with positive dims, got {shape}")
    return rng(spec).standard_normal(shape, dtype=DTYPE)


def pairwise_sum(arrays: Sequence[np.ndarray]) -> np.ndarray:
    """Sum in a fixed balanced-tree order, independent of how items were produced."""
    if len(arrays) == 0:
        raise InvalidArgument("cannot sum an empty list")
    if len(arrays) == 1:
        return np.array(arrays[0], dtype=DTYPE, copy=True)
    mid = len(arrays) // 2
    return pairwise_sum(arrays[:mid]) + pairwise_sum(arrays[mid:])


def pairwise_mean(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return pairwise_sum(arrays) / len(arrays)
