"""Slow, obviously-correct reference implementations used as test oracles."""
import itertools

import numpy as np


def box_mean(a, n):
    """Per-frame clipped box mean by explicit loops."""
    T, H, W = a.shape
    r = n // 2
    out = np.empty_like(a, dtype=np.float64)
    for t in range(T):
        for y in range(H):
            for x in range(W):
                win = a[t, max(0, y - r):min(H, y + r + 1), max(0, x - r):min(W, x + r + 1)]
                out[t, y, x] = sum(float(v) for v in win.ravel()) / win.size
    return out


def threshold_mean(a):
    tau = sum(float(v) for v in a.ravel()) / a.size
    return np.array([[[1.0 if v >= tau else 0.0 for v in row] for row in frame] for frame in a])


def union(m1, m2):
    return np.array([1.0 if (p or q) else 0.0 for p, q in zip(m1.ravel(), m2.ravel())]).reshape(m1.shape)


def squared_edt(m):
    """O(N^2) per frame: min squared distance to every foreground pixel."""
    T, H, W = m.shape
    out = np.full(m.shape, np.inf)
    for t in range(T):
        fy, fx = np.nonzero(m[t])
        if fy.size == 0:
            continue
        for y, x in itertools.product(range(H), range(W)):
            out[t, y, x] = float(np.min((fy - y) ** 2 + (fx - x) ** 2))
    return out


def ssim(a, b, win=7, k1=0.01, k2=0.03):
    """Window-by-window SSIM with population moments, averaged over windows and channels."""
    a = np.atleast_3d(np.asarray(a, dtype=np.float64))
    b = np.atleast_3d(np.asarray(b, dtype=np.float64))
    c1, c2 = k1**2, k2**2
    vals = []
    H, W, C = a.shape
    for c in range(C):
        for y in range(H - win + 1):
            for x in range(W - win + 1):
                pa = a[y:y + win, x:x + win, c].ravel()
                pb = b[y:y + win, x:x + win, c].ravel()
                ma, mb = pa.mean(), pb.mean()
                va = ((pa - ma) ** 2).mean()
                vb = ((pb - mb) ** 2).mean()
                cov = ((pa - ma) * (pb - mb)).mean()
                vals.append((2 * ma * mb + c1) * (2 * cov + c2) / ((ma**2 + mb**2 + c1) * (va + vb + c2)))
    return float(np.mean(vals))


def posterior_velocity_1d(x, t, log_density, grid):
    """Velocity ``(x - E[x0 | x_t = x]) / t`` by quadrature over ``grid``.

    Independent of any closed form: the data prior is only given pointwise.
    """
    # x_t | x0 ~ N((1 - t) x0, t^2)
    logp = log_density(grid) - 0.5 * ((x - (1 - t) * grid) / t) ** 2
    w = np.exp(logp - logp.max())
    mean = np.sum(w * grid) / np.sum(w)
    return (x - mean) / t


def euler(v, z, grid):
    for t, t_next in zip(grid[:-1], grid[1:]):
        z = z + (t_next - t) * v(z, t)
    return z
