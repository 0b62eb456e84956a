"""Structure and temporal-consistency metrics for desk-scale videos."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import DTYPE, InvalidArgument, check_same_shape

SSIM_WINDOW = 7
SSIM_K1 = 0.01
SSIM_K2 = 0.03
SSIM_RANGE = 1.0
PAIRINGS = ("consecutive", "source")


@dataclass(frozen=True)
class MetricReport:
    ssim_mean: float
    warp_ssim: float
    warp_l1: float
    warp_l2: float
    bg_preservation: float

    def as_dict(self) -> dict:
        return asdict(self)


def _frame(a) -> np.ndarray:
    a = np.asarray(a, dtype=DTYPE)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise InvalidArgument(f"frame must be (H, W) or (H, W, C), got shape {a.shape}")
    return a


def ssim_window(h: int, w: int) -> int:
    """7, or the largest odd size that fits a smaller frame."""
    win = min(SSIM_WINDOW, h, w)
    return win if win % 2 == 1 else win - 1


def ssim(a, b) -> float:
    """Mean SSIM over all fully-inside uniform windows and channels.

    Statistics use population (1/N) moments, ``C1 = (K1 L)^2`` and
    ``C2 = (K2 L)^2`` with ``L = 1``.
    """
    a, b = _frame(a), _frame(b)
    check_same_shape(a, b, what="frames")
    win = ssim_window(*a.shape[:2])
    c1 = (SSIM_K1 * SSIM_RANGE) ** 2
    c2 = (SSIM_K2 * SSIM_RANGE) ** 2
    wa = sliding_window_view(a, (win, win), axis=(0, 1))
    wb = sliding_window_view(b, (win, win), axis=(0, 1))
    mu_a = wa.mean(axis=(-2, -1))
    mu_b = wb.mean(axis=(-2, -1))
    var_a = ((wa - mu_a[..., None, None]) ** 2).mean(axis=(-2, -1))
    var_b = ((wb - mu_b[..., None, None]) ** 2).mean(axis=(-2, -1))
    cov = ((wa - mu_a[..., None, None]) * (wb - mu_b[..., None, None])).mean(axis=(-2, -1))
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def warp_frame(frame, flow) -> np.ndarray:
    """Backward bilinear warp: ``out(p) = frame(p + flow(p))``.

    ``flow[..., 0]`` is dy and ``flow[..., 1]`` is dx, in pixels. Sample
    positions are clamped to the frame border.
    """
    squeeze = np.ndim(frame) == 2
    f = _frame(frame)
    flow = np.asarray(flow, dtype=DTYPE)
    h, w = f.shape[:2]
    if flow.shape != (h, w, 2):
        raise InvalidArgument(f"flow shape {flow.shape} does not match frame {(h, w)}")
    yy, xx = np.meshgrid(np.arange(h, dtype=DTYPE), np.arange(w, dtype=DTYPE), indexing="ij")
    sy = np.clip(yy + flow[..., 0], 0, h - 1)
    sx = np.clip(xx + flow[..., 1], 0, w - 1)
    y0 = np.floor(sy).astype(np.intp)
    x0 = np.floor(sx).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (sy - y0)[..., None]
    fx = (sx - x0)[..., None]
    top = (1 - fx) * f[y0, x0] + fx * f[y0, x1]
    bottom = (1 - fx) * f[y1, x0] + fx * f[y1, x1]
    out = (1 - fy) * top + fy * bottom
    return out[:, :, 0] if squeeze else out


def warp_pairs(edited, flow, source=None, pairing: str = "consecutive") -> list:
    """Per frame pair ``(ssim, l1, l2)`` after warping.

    ``consecutive`` warps edited frame t by ``flow[t]`` and compares with
    edited frame t+1. ``source`` warps the source frame t instead.
    """
    edited = np.asarray(edited, dtype=DTYPE)
    flow = np.asarray(flow, dtype=DTYPE)
    if pairing not in PAIRINGS:
        raise InvalidArgument(f"pairing must be one of {PAIRINGS}, got {pairing!r}")
    T = edited.shape[0]
    if T < 2:
        raise InvalidArgument("warp metrics need at least two frames")
    if flow.shape != (T - 1,) + edited.shape[1:3] + (2,):
        raise InvalidArgument(f"flow shape {flow.shape} does not fit a video of shape {edited.shape}")
    base = edited
    if pairing == "source":
        if source is None:
            raise InvalidArgument("source pairing needs the source video")
        base = np.asarray(source, dtype=DTYPE)
        check_same_shape(base, edited, what="source and edited videos")
    out = []
    for t in range(T - 1):
        warped = warp_frame(base[t], flow[t])
        diff = warped - edited[t + 1]
        out.append((ssim(warped, edited[t + 1]), float(np.mean(np.abs(diff))), float(np.mean(diff * diff))))
    return out


def warp_metrics(edited, flow, source=None, pairing: str = "consecutive") -> tuple:
    pairs = np.array(warp_pairs(edited, flow, source, pairing), dtype=DTYPE)
    return float(pairs[:, 0].mean()), float(pairs[:, 1].mean()), float(pairs[:, 2].mean())


def background_preservation(edited, source, edit_region=None) -> float:
    """Fraction of voxels outside ``edit_region`` left bit-for-bit unchanged.

    Without a region every voxel counts; with nothing outside the region the
    result is 1.0.
    """
    edited = np.asarray(edited, dtype=DTYPE)
    source = np.asarray(source, dtype=DTYPE)
    check_same_shape(edited, source, what="edited and source videos")
    same = edited == source
    if edit_region is None:
        return float(same.mean())
    region = np.asarray(edit_region)
    if region.shape != edited.shape[:3]:
        raise InvalidArgument(f"edit region shape {region.shape} does not match video {edited.shape}")
    outside = np.broadcast_to((region == 0)[..., None], same.shape)
    n = int(outside.sum())
    if n == 0:
        return 1.0
    return float(same[outside].sum() / n)


def evaluate(edited, source, flow, edit_region=None, pairing: str = "consecutive") -> MetricReport:
    edited = np.asarray(edited, dtype=DTYPE)
    source = np.asarray(source, dtype=DTYPE)
    check_same_shape(edited, source, what="edited and source videos")
    ssim_mean = float(np.mean([ssim(e, s) for e, s in zip(edited, source)]))
    w_ssim, w_l1, w_l2 = warp_metrics(edited, flow, source, pairing)
    return MetricReport(ssim_mean, w_ssim, w_l1, w_l2, background_preservation(edited, source, edit_region))
