"""Pure numpy implementations of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def matmul(a, b):
    return a @ b


def conv2d(x, w, stride, pad):
    cin, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((cout, ho, wo), dtype=np.float64)
    for ky in range(k):
        for kx in range(k):
            patch = xp[:, ky:ky + stride * (ho - 1) + 1:stride,
                       kx:kx + stride * (wo - 1) + 1:stride]
            out += np.tensordot(w[:, :, ky, kx], patch, axes=(1, 0))
    return out


def quantize_uniform(x, lo, hi, n_steps):
    step = (hi - lo) / n_steps
    v = np.clip(x, lo, hi)
    t = (v - lo) / step
    f = np.floor(t)
    frac = t - f
    tie = frac == 0.5
    down = lo + f * step
    up = lo + (f + 1.0) * step
    bump = (frac > 0.5) | (tie & (np.abs(up) >= np.abs(down)))
    f = np.minimum(f + bump, n_steps)
    return lo + f * step


def quantize_midrise(x, step, half_levels):
    j = np.minimum(np.floor(np.abs(x) / step), half_levels - 1.0)
    mag = (j + 0.5) * step
    return np.where(x >= 0.0, mag, -mag)
