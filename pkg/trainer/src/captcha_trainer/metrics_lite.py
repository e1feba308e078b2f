"""Compact image-distance metrics for synthesizer checkpoint ranking.

These are scoring functions for picking the best generator checkpoint,
not a reference implementation: values only need to rank candidates
consistently. SSIM uses uniform 8x8 windows, entropy/MI use 256-level
luma histograms, and the perceptual distance compares oriented-edge
energy maps from a small fixed Gabor bank.
"""

from __future__ import annotations

import math

import numpy as np

_WINDOW = 8
_C1 = (0.01 * 255.0) ** 2
_C2 = (0.03 * 255.0) ** 2


def luma(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim == 2:
        return arr
    return arr[..., 0] * 0.299 + arr[..., 1] * 0.587 + arr[..., 2] * 0.114


def _windows(img: np.ndarray, w: int) -> np.ndarray:
    s = np.cumsum(np.cumsum(img, axis=0), axis=1)
    s = np.pad(s, ((1, 0), (1, 0)))
    return s[w:, w:] - s[:-w, w:] - s[w:, :-w] + s[:-w, :-w]


def ssim(a, b) -> float:
    ga, gb = luma(a), luma(b)
    n = _WINDOW * _WINDOW
    mx = _windows(ga, _WINDOW) / n
    my = _windows(gb, _WINDOW) / n
    vx = _windows(ga * ga, _WINDOW) / n - mx * mx
    vy = _windows(gb * gb, _WINDOW) / n - my * my
    cov = _windows(ga * gb, _WINDOW) / n - mx * my
    score = ((2 * mx * my + _C1) * (2 * cov + _C2)) / (
        (mx * mx + my * my + _C1) * (vx + vy + _C2)
    )
    return float(score.mean())


def psnr(a, b) -> float:
    mse = float(np.mean((luma(a) - luma(b)) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(255.0**2 / mse)


def nrmse(a, ref) -> float:
    ga, gr = luma(a), luma(ref)
    spread = float(gr.max() - gr.min()) or 1.0
    return math.sqrt(float(np.mean((ga - gr) ** 2))) / spread


def _hist_levels(img) -> np.ndarray:
    return np.clip(np.rint(luma(img)), 0, 255).astype(np.int64).ravel()


def mutual_information(a, b) -> float:
    ia, ib = _hist_levels(a), _hist_levels(b)
    joint = np.zeros((256, 256))
    np.add.at(joint, (ia, ib), 1.0)
    joint /= joint.sum()
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    return float(np.sum(joint[nz] * np.log2(joint[nz] / (px @ py)[nz])))


def _gabor(theta: float, half: int = 4, wavelength: float = 4.0) -> np.ndarray:
    ys, xs = np.mgrid[-half : half + 1, -half : half + 1].astype(np.float64)
    xr = xs * math.cos(theta) + ys * math.sin(theta)
    yr = -xs * math.sin(theta) + ys * math.cos(theta)
    k = np.exp(-(xr**2 + yr**2) / (2 * 2.0**2)) * np.cos(2 * math.pi * xr / wavelength)
    return k - k.mean()


_BANK = [_gabor(t) for t in (0.0, math.pi / 4, math.pi / 2, 3 * math.pi / 4)]


def _energy(img: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    from numpy.lib.stride_tricks import sliding_window_view

    g = luma(img)
    half = kernel.shape[0] // 2
    padded = np.pad(g, half, mode="edge")
    view = sliding_window_view(padded, kernel.shape)
    return np.abs(np.einsum("ijkl,kl->ij", view, kernel))


def perceptual(a, b) -> float:
    """Mean L1 distance between oriented-edge energy maps, in [0, inf)."""
    total = 0.0
    for kernel in _BANK:
        total += float(np.mean(np.abs(_energy(a, kernel) - _energy(b, kernel))))
    return total / len(_BANK)
