"""PSNR and SSIM on [0, 1] intensities."""

from __future__ import annotations

import math
from typing import List, Tuple

import numpy as np
from scipy.ndimage import correlate1d

from .image_core import Image, crop
from .types import MetricReport
from .validate import InvalidArgumentError, require, require_same_shape

# returned by psnr for images that agree exactly
IDENTICAL = math.inf

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
DYNAMIC_RANGE = 1.0


def _cropped(a: Image, b: Image, border_crop: int) -> Tuple[Image, Image]:
    require_same_shape(a, b)
    require(border_crop >= 0, f"border_crop must be >= 0, got {border_crop}")
    if border_crop == 0:
        return a, b
    return crop(a, border_crop, border_crop, border_crop, border_crop), crop(
        b, border_crop, border_crop, border_crop, border_crop
    )


def _psnr_from_mse(mse: float) -> float:
    if mse == 0:
        return IDENTICAL
    return 10.0 * math.log10(DYNAMIC_RANGE**2 / mse)


def psnr(a: Image, b: Image, border_crop: int = 0) -> float:
    """10 log10(1/MSE) over all channels jointly; IDENTICAL when MSE is zero."""

    a, b = _cropped(a, b, border_crop)
    diff = a.data - b.data
    return _psnr_from_mse(float(np.mean(diff * diff)))


def psnr_per_channel(a: Image, b: Image, border_crop: int = 0) -> List[float]:
    a, b = _cropped(a, b, border_crop)
    diff = a.data - b.data
    return [_psnr_from_mse(float(np.mean(d * d))) for d in diff]


def _gaussian_window() -> np.ndarray:
    half = SSIM_WINDOW // 2
    t = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(t * t) / (2.0 * SSIM_SIGMA**2))
    return g / g.sum()


def _filter_valid(plane: np.ndarray, window: np.ndarray) -> np.ndarray:
    out = correlate1d(plane, window, axis=0, mode="constant")
    out = correlate1d(out, window, axis=1, mode="constant")
    half = window.size // 2
    return out[half:-half, half:-half]


def _ssim_plane(x: np.ndarray, y: np.ndarray, window: np.ndarray) -> float:
    c1 = (SSIM_K1 * DYNAMIC_RANGE) ** 2
    c2 = (SSIM_K2 * DYNAMIC_RANGE) ** 2
    mu_x = _filter_valid(x, window)
    mu_y = _filter_valid(y, window)
    mu_xx = mu_x * mu_x
    mu_yy = mu_y * mu_y
    mu_xy = mu_x * mu_y
    var_x = _filter_valid(x * x, window) - mu_xx
    var_y = _filter_valid(y * y, window) - mu_yy
    cov = _filter_valid(x * y, window) - mu_xy
    ssim_map = ((2 * mu_xy + c1) * (2 * cov + c2)) / ((mu_xx + mu_yy + c1) * (var_x + var_y + c2))
    return float(np.mean(ssim_map))


def ssim_per_channel(a: Image, b: Image) -> List[float]:
    require_same_shape(a, b)
    if a.width < SSIM_WINDOW or a.height < SSIM_WINDOW:
        raise InvalidArgumentError(
            f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels, got {a.width}x{a.height}"
        )
    window = _gaussian_window()
    return [_ssim_plane(x, y, window) for x, y in zip(a.data, b.data)]


def ssim(a: Image, b: Image) -> float:
    """Mean structural similarity (11x11 Gaussian window, sigma 1.5), averaged over channels."""

    values = ssim_per_channel(a, b)
    return float(sum(values) / len(values))


def evaluate(a: Image, b: Image, border_crop: int = 0) -> MetricReport:
    a, b = _cropped(a, b, border_crop)
    per_channel = tuple(zip(psnr_per_channel(a, b), ssim_per_channel(a, b)))
    return MetricReport(psnr=psnr(a, b), ssim=ssim(a, b), per_channel=per_channel)
