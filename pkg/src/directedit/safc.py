"""Attention-guided masking of the editing flow.

Attention maps and masks are ``(T, H, W)`` arrays; masks broadcast over the
channel axis of a video when applied.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numba
import numpy as np

from .core import (
    DTYPE,
    NULL_CONDITION,
    STREAM_ATTENTION,
    Condition,
    InvalidArgument,
    SeedSpec,
    check_same_shape,
    rng,
)

PROVIDERS = ("velocity", "scripted")
MASK_SCOPES = ("sample", "shared", "estimate")


@dataclass(frozen=True)
class MaskConfig:
    """Mask pipeline settings.

    ``mask_scope`` picks which attention a mask is built from: each sample's
    own (``sample``), the batch average (``shared``), or the average over the
    samples behind each flow estimate (``estimate``). Only ``estimate`` makes a
    larger sample set yield a sharper mask, which is what the DAG differential
    picks up.
    """

    kernel: int = 11
    delta: float = 0.25
    apply_softening: bool = True
    provider: str = "velocity"
    mask_scope: str = "estimate"
    freeze_step0: bool = False

    def __post_init__(self):
        if int(self.kernel) != self.kernel or self.kernel < 1 or self.kernel % 2 == 0:
            raise InvalidArgument(f"kernel must be an odd integer >= 1, got {self.kernel}")
        if not self.delta > 0:
            raise InvalidArgument(f"delta must be positive, got {self.delta}")
        if self.provider not in PROVIDERS:
            raise InvalidArgument(f"provider must be one of {PROVIDERS}, got {self.provider!r}")
        if self.mask_scope not in MASK_SCOPES:
            raise InvalidArgument(f"mask_scope must be one of {MASK_SCOPES}, got {self.mask_scope!r}")


def _attention_map(a, name="attention map") -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    if a.ndim != 3:
        raise InvalidArgument(f"{name} must be (T, H, W), got shape {a.shape}")
    return a


def _binary(m, name="mask") -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 3:
        raise InvalidArgument(f"{name} must be (T, H, W), got shape {m.shape}")
    if not np.all((m == 0) | (m == 1)):
        raise InvalidArgument(f"{name} must be binary")
    return m.astype(bool)


# -- attention sources --------------------------------------------------------

def attention_saliency(field, state, t: float, condition: Condition) -> np.ndarray:
    """Stand-in for cross-attention: where the condition changes the velocity.

    Returns the channel-wise Euclidean norm of ``v(state, c) - v(state, ∅)``,
    scaled so the maximum is 1. An all-zero difference gives an all-zero map.
    """
    if condition.is_null:
        state = np.asarray(state, dtype=DTYPE)
        return np.zeros(state.shape[:3], dtype=DTYPE)
    diff = np.asarray(field(state, t, condition), dtype=DTYPE) - np.asarray(field(state, t, NULL_CONDITION), dtype=DTYPE)
    mag = np.sqrt(np.sum(diff * diff, axis=-1))
    peak = mag.max()
    return mag / peak if peak > 0 else mag


class VelocitySaliency:
    """Attention provider built on :func:`attention_saliency`."""

    def __call__(self, field, state, t, condition, *, step=0, sample=0):
        return attention_saliency(field, state, t, condition)


class ScriptedAttention:
    """Attention provider returning fixed relevance maps per condition id.

    Optional half-normal noise (``noise_std``) is drawn from a stream keyed by
    ``(seed, step, sample)`` and a per-condition offset, so repeated runs agree.
    """

    def __init__(self, maps: Mapping[str, np.ndarray], noise_std: float = 0.0, seed: int = 0):
        self.maps = {k: _attention_map(v) for k, v in maps.items()}
        self.noise_std = float(noise_std)
        self.seed = int(seed)
        self._order = {k: i for i, k in enumerate(sorted(self.maps))}

    def __call__(self, field, state, t, condition, *, step=0, sample=0):
        if condition.is_null:
            return np.zeros(np.shape(state)[:3], dtype=DTYPE)
        try:
            base = self.maps[condition.id]
        except KeyError:
            raise InvalidArgument(f"no scripted attention for condition {condition.id!r}") from None
        if self.noise_std == 0:
            return base.copy()
        spec = SeedSpec(self.seed, step, sample * len(self._order) + self._order[condition.id], STREAM_ATTENTION)
        return base + self.noise_std * np.abs(rng(spec).standard_normal(base.shape))


# -- Algorithm stages ---------------------------------------------------------

def spatial_smooth(a, n: int) -> np.ndarray:
    """Per-frame ``n x n`` box mean; windows are clipped to the frame and
    averaged over the pixels they actually cover."""
    a = _attention_map(a)
    if n < 1 or n % 2 == 0:
        raise InvalidArgument(f"kernel must be odd and >= 1, got {n}")
    if n == 1:
        return a.copy()
    T, H, W = a.shape
    r = n // 2
    sat = np.zeros((T, H + 1, W + 1), dtype=DTYPE)
    sat[:, 1:, 1:] = a.cumsum(axis=1).cumsum(axis=2)
    y0 = np.clip(np.arange(H) - r, 0, H)
    y1 = np.clip(np.arange(H) + r + 1, 0, H)
    x0 = np.clip(np.arange(W) - r, 0, W)
    x1 = np.clip(np.arange(W) + r + 1, 0, W)
    total = (
        sat[:, y1[:, None], x1[None, :]]
        - sat[:, y0[:, None], x1[None, :]]
        - sat[:, y1[:, None], x0[None, :]]
        + sat[:, y0[:, None], x0[None, :]]
    )
    count = (y1 - y0)[:, None] * (x1 - x0)[None, :]
    return total / count


def binarize_global_mean(a) -> np.ndarray:
    """1 where the map reaches its global mean over all frames, else 0."""
    a = _attention_map(a)
    tau = a.mean(dtype=DTYPE)
    return (a >= tau).astype(DTYPE)


def union_masks(m1, m2) -> np.ndarray:
    b1, b2 = _binary(m1, "first mask"), _binary(m2, "second mask")
    check_same_shape(b1, b2, what="masks")
    return (b1 | b2).astype(DTYPE)


@numba.njit(cache=True)
def _envelope_1d(f, out, big):
    # Exact lower envelope of parabolas y = f[q] + (x - q)^2 (two-pass EDT row kernel).
    n = f.shape[0]
    v = np.zeros(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        while s <= z[k]:
            k -= 1
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k])
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        d = q - v[k]
        out[q] = min(d * d + f[v[k]], big)


@numba.njit(cache=True)
def _squared_edt_2d(fg, big):
    h, w = fg.shape
    g = np.empty((h, w), dtype=np.float64)
    col = np.empty(h, dtype=np.float64)
    res_col = np.empty(h, dtype=np.float64)
    for x in range(w):
        for y in range(h):
            col[y] = 0.0 if fg[y, x] else big
        _envelope_1d(col, res_col, big)
        for y in range(h):
            g[y, x] = res_col[y]
    out = np.empty((h, w), dtype=np.float64)
    row = np.empty(w, dtype=np.float64)
    res_row = np.empty(w, dtype=np.float64)
    for y in range(h):
        for x in range(w):
            row[x] = g[y, x]
        _envelope_1d(row, res_row, big)
        for x in range(w):
            out[y, x] = res_row[x]
    return out


def squared_distance_transform(m) -> np.ndarray:
    """Exact squared Euclidean distance to the nearest foreground voxel, per frame.

    Frames without foreground are ``+inf`` everywhere.
    """
    fg = _binary(m)
    T, H, W = fg.shape
    # Larger than any in-frame squared distance; real distances never reach it.
    big = float((H + 1) ** 2 + (W + 1) ** 2)
    out = np.empty(fg.shape, dtype=DTYPE)
    for i in range(T):
        if not fg[i].any():
            out[i] = np.inf
        else:
            out[i] = _squared_edt_2d(np.ascontiguousarray(fg[i]), big)
    return out


def distance_transform(m) -> np.ndarray:
    return np.sqrt(squared_distance_transform(m))


def soften_edges(m, delta: float) -> np.ndarray:
    """Feather a binary mask: 1 on foreground, ``exp(-delta * D)`` elsewhere.

    A frame with no foreground has ``D = inf`` and therefore softens to 0.
    """
    if not delta > 0:
        raise InvalidArgument(f"delta must be positive, got {delta}")
    fg = _binary(m)
    d = distance_transform(fg)
    return np.where(fg, 1.0, np.exp(-delta * d))


def build_mask(a_src, a_tar, cfg: MaskConfig) -> np.ndarray:
    a_src = _attention_map(a_src, "source attention")
    a_tar = _attention_map(a_tar, "target attention")
    check_same_shape(a_src, a_tar, what="attention maps")
    m_src = binarize_global_mean(spatial_smooth(a_src, cfg.kernel))
    m_tar = binarize_global_mean(spatial_smooth(a_tar, cfg.kernel))
    combined = union_masks(m_src, m_tar)
    if cfg.apply_softening:
        return soften_edges(combined, cfg.delta)
    return combined


def apply_mask(v_edit, m) -> np.ndarray:
    """Scale the editing flow voxel-wise; zero-mask voxels become exactly 0."""
    v_edit = np.asarray(v_edit, dtype=DTYPE)
    m = np.asarray(m, dtype=DTYPE)
    if m.ndim == 3:
        m = m[..., None]
    if m.shape[:3] != v_edit.shape[:3] or m.shape[3] not in (1, v_edit.shape[3]):
        raise InvalidArgument(f"mask shape {m.shape} does not match flow shape {v_edit.shape}")
    return v_edit * m
