"""Differential averaging guidance over a batch of per-noise editing flows."""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb
from typing import Optional, Sequence

import numpy as np

from .core import STREAM_SUBSETS, InvalidArgument, SeedSpec, check_same_shape, pairwise_mean, rng

SUBSET_MODES = ("exhaustive", "random")


@dataclass(frozen=True)
class FlowSample:
    index: int
    flow: np.ndarray


@dataclass(frozen=True)
class DagConfig:
    l_hq: int = 4
    l_bl: int = 2
    subset_mode: str = "exhaustive"
    k_subsets: Optional[int] = None
    w: float = 2.75
    seed: Optional[int] = None

    def __post_init__(self):
        if not 1 <= self.l_bl < self.l_hq:
            raise InvalidArgument(f"need 1 <= l_bl < l_hq, got l_bl={self.l_bl}, l_hq={self.l_hq}")
        if self.subset_mode not in SUBSET_MODES:
            raise InvalidArgument(f"subset_mode must be one of {SUBSET_MODES}, got {self.subset_mode!r}")
        if self.subset_mode == "random":
            if self.k_subsets is None or not 1 <= self.k_subsets <= self.n_combinations:
                raise InvalidArgument(
                    f"random mode needs 1 <= k_subsets <= {self.n_combinations}, got {self.k_subsets}")

    @property
    def n_combinations(self) -> int:
        return comb(self.l_hq, self.l_bl)


def select_subsets(cfg: DagConfig, step: int = 0) -> list:
    """Index subsets used for the baseline estimates at ``step``.

    Exhaustive mode lists every size-``l_bl`` subset in lexicographic order.
    Random mode draws ``k_subsets`` distinct ones from a stream keyed by
    ``(cfg.seed, step)`` and returns them in lexicographic order.
    """
    every = list(combinations(range(cfg.l_hq), cfg.l_bl))
    if cfg.subset_mode == "exhaustive":
        return every
    if cfg.seed is None:
        raise InvalidArgument("random subset mode needs a seed")
    picked = rng(SeedSpec(cfg.seed, step, 0, STREAM_SUBSETS)).choice(len(every), size=cfg.k_subsets, replace=False)
    return [every[i] for i in sorted(picked)]


def _flows(samples: Sequence[FlowSample]) -> list:
    flows = [np.asarray(s.flow) for s in samples]
    check_same_shape(*flows, what="flow samples")
    return flows


def hq_estimate(samples: Sequence[FlowSample]) -> np.ndarray:
    if not samples:
        raise InvalidArgument("need at least one flow sample")
    return pairwise_mean(_flows(samples))


def baseline_estimates(samples: Sequence[FlowSample], cfg: DagConfig, step: int = 0) -> list:
    if len(samples) != cfg.l_hq:
        raise InvalidArgument(f"expected {cfg.l_hq} samples, got {len(samples)}")
    flows = _flows(samples)
    return [pairwise_mean([flows[i] for i in subset]) for subset in select_subsets(cfg, step)]


def mean_differential(v_hq, baselines: Sequence[np.ndarray]) -> np.ndarray:
    """Mean of ``v_hq - baseline_i`` over all baselines."""
    if not baselines:
        raise InvalidArgument("need at least one baseline estimate")
    v_hq = np.asarray(v_hq)
    return pairwise_mean([v_hq - np.asarray(b) for b in baselines])


def dag_velocity(v_hq, d_bar, w: float) -> np.ndarray:
    v_hq = np.asarray(v_hq)
    d_bar = np.asarray(d_bar)
    check_same_shape(v_hq, d_bar, what="v_hq and d_bar")
    if w == 0:
        return v_hq.copy()
    return v_hq + w * d_bar
