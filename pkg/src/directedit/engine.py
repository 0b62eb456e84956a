"""Inversion-free editing: branch construction, editing velocity and the Euler loop."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from . import dag as dag_ops
from . import safc as safc_ops
from .core import (
    DTYPE,
    Condition,
    DirectEditError,
    EditSchedule,
    InvalidArgument,
    SeedSpec,
    as_video,
    check_same_shape,
    pairwise_mean,
    seed_noise,
)
from .fields import VelocityField, guided_velocity


class EditRuntimeError(DirectEditError):
    """A sub-operation failed inside the editing loop."""

    def __init__(self, step_index: int, t: float, cause: BaseException):
        super().__init__(f"step {step_index} (t={t:g}): {type(cause).__name__}: {cause}")
        self.step_index = step_index
        self.t = t


@dataclass(frozen=True)
class EditState:
    z_edit: np.ndarray
    t: float
    step_index: int = 0


@dataclass(frozen=True)
class BranchStates:
    z_src: np.ndarray
    z_tar: np.ndarray
    noise: np.ndarray


@dataclass(frozen=True)
class StepDiagnostics:
    step_index: int
    t: float
    n_samples: int
    v_norm: float
    mask_coverage: float
    d_bar_norm: float


@dataclass
class EditResult:
    video: np.ndarray
    diagnostics: list = dc_field(default_factory=list)


def perturb_source(x_src, t: float, noise) -> np.ndarray:
    """Point on the straight path from the source (t=0) to the noise (t=1)."""
    if not 0 <= t <= 1:
        raise InvalidArgument(f"t must lie in [0, 1], got {t}")
    x_src = np.asarray(x_src, dtype=DTYPE)
    noise = np.asarray(noise, dtype=DTYPE)
    check_same_shape(x_src, noise, what="source and noise")
    if t == 0:
        return x_src.copy()
    if t == 1:
        return noise.copy()
    return (1 - t) * x_src + t * noise


def reconstruct_target(z_edit, z_src, x_src) -> np.ndarray:
    """Target branch sharing the source branch's noise: ``z_edit + z_src - x_src``."""
    z_edit, z_src, x_src = (np.asarray(a, dtype=DTYPE) for a in (z_edit, z_src, x_src))
    check_same_shape(z_edit, z_src, x_src, what="edit state, source branch and source video")
    return z_edit + z_src - x_src


def make_branches(z_edit, x_src, t: float, noise) -> BranchStates:
    z_src = perturb_source(x_src, t, noise)
    return BranchStates(z_src, reconstruct_target(z_edit, z_src, x_src), noise)


def edit_velocity(field: VelocityField, branches: BranchStates, t: float, c_src: Condition, c_tar: Condition,
                  cfg: tuple = (1.0, 1.0)) -> np.ndarray:
    """Guided target velocity minus guided source velocity on the shared-noise branches."""
    if not 0 < t <= 1:
        raise InvalidArgument(f"t must lie in (0, 1], got {t}")
    s_src, s_tar = cfg
    v_tar = guided_velocity(field, branches.z_tar, t, c_tar, s_tar)
    v_src = guided_velocity(field, branches.z_src, t, c_src, s_src)
    return v_tar - v_src


def euler_step(state: EditState, velocity, t_next: float) -> EditState:
    if not t_next < state.t:
        raise InvalidArgument(f"t_next must be below the current time {state.t}, got {t_next}")
    velocity = np.asarray(velocity, dtype=DTYPE)
    check_same_shape(state.z_edit, velocity, what="state and velocity")
    return EditState(state.z_edit + (t_next - state.t) * velocity, t_next, state.step_index + 1)


def _thread_count() -> int:
    try:
        return max(1, int(os.environ.get("FD_THREADS", "1")))
    except ValueError:
        return 1


def run_edit(
    x_src,
    c_src: Condition,
    c_tar: Condition,
    schedule: EditSchedule,
    field: VelocityField,
    safc: Optional[safc_ops.MaskConfig] = None,
    dag: Optional[dag_ops.DagConfig] = None,
    seed: SeedSpec = SeedSpec(0),
    *,
    cfg: tuple = (1.0, 1.0),
    n_samples: int = 1,
    attention=None,
    on_step: Optional[Callable] = None,
) -> EditResult:
    """Integrate the editing ODE from ``schedule.t_start`` down to 0.

    Each step draws one noise tensor per sample, builds both branches from it,
    takes the (optionally masked) editing velocity per sample and aggregates:
    DAG when ``dag`` is given, else a plain mean of ``n_samples`` flows.
    ``on_step(step_index, t, z_edit, branches, masks)`` is called before every
    Euler update.
    """
    x_src = as_video(x_src, "source video")
    if n_samples < 1:
        raise InvalidArgument(f"n_samples must be >= 1, got {n_samples}")
    n = dag.l_hq if dag is not None else n_samples
    if dag is not None and dag.subset_mode == "random" and dag.seed is None:
        dag = dag_ops.DagConfig(dag.l_hq, dag.l_bl, dag.subset_mode, dag.k_subsets, dag.w, seed.master_seed)
    if safc is not None and attention is None:
        if safc.provider != "velocity":
            raise InvalidArgument(f"provider {safc.provider!r} needs an attention object")
        attention = safc_ops.VelocitySaliency()

    state = EditState(x_src.copy(), schedule.t_start, schedule.n_skip)
    frozen_masks = None
    diagnostics = []
    pool = ThreadPoolExecutor(_thread_count()) if _thread_count() > 1 else None

    def one_sample(k, step_index, t, z_edit):
        noise = seed_noise(seed.at(step=step_index, sample=k), x_src.shape)
        br = make_branches(z_edit, x_src, t, noise)
        v = edit_velocity(field, br, t, c_src, c_tar, cfg)
        attn = None
        if safc is not None:
            attn = (attention(field, br.z_src, t, c_src, step=step_index, sample=k),
                    attention(field, br.z_tar, t, c_tar, step=step_index, sample=k))
        return br, v, attn

    try:
        for _, t, t_next in schedule.steps():
            step_index = state.step_index
            try:
                args = [(k, step_index, t, state.z_edit) for k in range(n)]
                results = list(pool.map(lambda a: one_sample(*a), args)) if pool else [one_sample(*a) for a in args]
                branches = [r[0] for r in results]
                raw = [r[1] for r in results]
                attn = [r[2] for r in results]
                mask_cache = frozen_masks if frozen_masks is not None else {}
                estimate = _Estimator(raw, attn, safc, mask_cache)
                d_bar_norm = 0.0
                if dag is not None:
                    v_hq = estimate(tuple(range(n)))
                    subsets = dag_ops.select_subsets(dag, step_index)
                    d_bar = dag_ops.mean_differential(v_hq, [estimate(s) for s in subsets])
                    velocity = dag_ops.dag_velocity(v_hq, d_bar, dag.w)
                    d_bar_norm = float(np.linalg.norm(d_bar))
                else:
                    velocity = estimate(tuple(range(n)))
                masks = estimate.masks_used()
                if safc is not None and safc.freeze_step0 and frozen_masks is None:
                    frozen_masks = mask_cache
                coverage = 1.0 if masks is None else float(np.mean([np.mean(m) for m in masks]))
                if on_step is not None:
                    on_step(step_index, t, state.z_edit, branches, masks)
                diagnostics.append(StepDiagnostics(
                    step_index, t, n, float(np.linalg.norm(velocity)), coverage, d_bar_norm))
                state = euler_step(state, velocity, t_next)
            except DirectEditError as exc:
                if isinstance(exc, EditRuntimeError):
                    raise
                raise EditRuntimeError(step_index, t, exc) from exc
            except (ArithmeticError, ValueError) as exc:
                raise EditRuntimeError(step_index, t, exc) from exc
    finally:
        if pool is not None:
            pool.shutdown()
    return EditResult(state.z_edit, diagnostics)


class _Estimator:
    """Mean editing flow over a subset of samples, masked per the configured scope.

    ``sample``: every flow carries its own mask. ``shared``: one mask from the
    attention averaged over all samples. ``estimate``: each subset builds its
    mask from its own averaged attention and masks its mean flow. Masks are
    memoised in ``cache`` keyed by sample index or subset.
    """

    def __init__(self, flows, attention, cfg, cache):
        self.flows = flows
        self.attention = attention
        self.cfg = cfg
        self.cache = cache

    def _mask_for(self, key, members):
        if key not in self.cache:
            a_src = pairwise_mean([self.attention[k][0] for k in members])
            a_tar = pairwise_mean([self.attention[k][1] for k in members])
            self.cache[key] = safc_ops.build_mask(a_src, a_tar, self.cfg)
        return self.cache[key]

    def masks_used(self):
        """Masks behind the full-batch estimate, for diagnostics."""
        if self.cfg is None:
            return None
        n = len(self.flows)
        keys = {
            "sample": [("sample", k) for k in range(n)],
            "shared": [("shared",)],
            "estimate": [("estimate", tuple(range(n)))],
        }[self.cfg.mask_scope]
        return [self.cache[k] for k in keys if k in self.cache] or None

    def __call__(self, subset: tuple) -> np.ndarray:
        if self.cfg is None:
            return pairwise_mean([self.flows[k] for k in subset])
        scope = self.cfg.mask_scope
        if scope == "estimate":
            m = self._mask_for(("estimate", subset), subset)
            return safc_ops.apply_mask(pairwise_mean([self.flows[k] for k in subset]), m)
        out = []
        for k in subset:
            if scope == "sample":
                m = self._mask_for(("sample", k), (k,))
            else:
                m = self._mask_for(("shared",), tuple(range(len(self.flows))))
            out.append(safc_ops.apply_mask(self.flows[k], m))
        return pairwise_mean(out)
