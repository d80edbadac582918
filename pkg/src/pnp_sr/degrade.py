"""LR synthesis: bicubic downsample, then circular blur, then seeded AWGN."""

from __future__ import annotations

import numpy as np

from . import image_core, kernels
from .image_core import Image
from .types import DegradationSpec
from .validate import InvalidArgumentError, require

EIGHT_BIT = 255.0


def derive_seed(global_seed: int, image_index: int) -> int:
    """Per-image seed used by dataset runs."""

    return int(global_seed) ^ int(image_index)


def awgn(img: Image, sigma: float, seed: int) -> Image:
    """Add N(0, (sigma/255)^2) noise to every sample; sigma is in 8-bit units."""

    require(sigma >= 0, f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return img
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(img.data.shape) * (sigma / EIGHT_BIT)
    return Image(img.data + noise)


def degrade(hr: Image, spec: DegradationSpec) -> Image:
    s = int(spec.scale)
    if hr.width % s or hr.height % s:
        raise InvalidArgumentError(
            f"HR size {hr.width}x{hr.height} is not divisible by scale {s}; crop first"
        )
    lr_w, lr_h = hr.width // s, hr.height // s
    if spec.kernel.size_x > lr_w or spec.kernel.size_y > lr_h:
        raise InvalidArgumentError(
            f"kernel {spec.kernel.size_y}x{spec.kernel.size_x} is larger than the LR field {lr_h}x{lr_w}"
        )
    down = image_core.resize_bicubic(hr, lr_w, lr_h, antialias=True)
    blurred = kernels.circular_convolve(down, spec.kernel)
    return awgn(blurred, spec.sigma, spec.seed)
