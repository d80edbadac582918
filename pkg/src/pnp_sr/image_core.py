"""Planar floating-point images: resampling, padding, tapering and file I/O.

Intensities live in [0, 1] nominally but are never clipped until export;
HQS iterates legitimately leave the display range.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import TYPE_CHECKING, Tuple

import numpy as np
import scipy.sparse as sp
from PIL import Image as PILImage

from .validate import InvalidArgumentError, ensure_finite, require

if TYPE_CHECKING:  # pragma: no cover
    from .kernels import Kernel


@dataclass(frozen=True, eq=False)
class Image:
    """Immutable ``(channels, height, width)`` float64 raster with 1 or 3 channels."""

    data: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[None, :, :]
        require(arr.ndim == 3, f"image data must be 2-D or 3-D, got {arr.ndim}-D")
        require(arr.shape[0] in (1, 3), f"image must have 1 or 3 channels, got {arr.shape[0]}")
        require(arr.shape[1] >= 1 and arr.shape[2] >= 1, "image dimensions must be >= 1")
        ensure_finite(arr, "image data")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @classmethod
    def from_hwc(cls, arr: np.ndarray) -> "Image":
        arr = np.asarray(arr, dtype=np.float64)
        if arr.ndim == 2:
            return cls(arr)
        return cls(np.moveaxis(arr, -1, 0))

    @classmethod
    def constant(cls, width: int, height: int, value: float, channels: int = 1) -> "Image":
        return cls(np.full((channels, height, width), float(value)))

    @property
    def channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def height(self) -> int:
        return int(self.data.shape[1])

    @property
    def width(self) -> int:
        return int(self.data.shape[2])

    def to_hwc(self) -> np.ndarray:
        if self.channels == 1:
            return np.array(self.data[0])
        return np.moveaxis(self.data, 0, -1).copy()

    def norm(self) -> float:
        return float(np.linalg.norm(self.data.ravel()))

    def clipped(self) -> "Image":
        return Image(np.clip(self.data, 0.0, 1.0))

    def __add__(self, other: "Image | float") -> "Image":
        return Image(self.data + _operand(other))

    def __sub__(self, other: "Image | float") -> "Image":
        return Image(self.data - _operand(other))

    def __mul__(self, factor: float) -> "Image":
        return Image(self.data * float(factor))

    __rmul__ = __mul__


def _operand(other: "Image | float") -> np.ndarray | float:
    if isinstance(other, Image):
        return other.data
    return float(other)


# --------------------------------------------------------------------------
# bicubic resampling (imresize semantics)
# --------------------------------------------------------------------------

CUBIC_A = -0.5


def cubic(x: np.ndarray) -> np.ndarray:
    """Keys cubic-convolution kernel with a = -0.5."""

    absx = np.abs(x)
    absx2 = absx * absx
    absx3 = absx2 * absx
    a = CUBIC_A
    inner = ((a + 2) * absx3 - (a + 3) * absx2 + 1) * (absx <= 1)
    outer = (a * absx3 - 5 * a * absx2 + 8 * a * absx - 4 * a) * ((absx > 1) & (absx <= 2))
    return inner + outer


def resize_weights(in_len: int, out_len: int, antialias: bool) -> Tuple[np.ndarray, np.ndarray]:
    """Per-output-sample tap weights and (0-based) source indices along one axis.

    Source indices past either border are mirrored with the edge sample
    repeated, the boundary rule of the reference ``imresize``.
    """

    scale = out_len / in_len
    shrink = antialias and scale < 1
    kernel_width = 4.0 / scale if shrink else 4.0
    x = np.arange(1, out_len + 1, dtype=np.float64)
    u = x / scale + 0.5 * (1 - 1 / scale)
    left = np.floor(u - kernel_width / 2)
    taps = int(math.ceil(kernel_width)) + 2
    indices = left[:, None] + np.arange(taps, dtype=np.float64)[None, :]
    dist = u[:, None] - indices
    if shrink:
        weights = scale * cubic(dist * scale)
    else:
        weights = cubic(dist)
    weights = weights / weights.sum(axis=1, keepdims=True)
    mirror = np.concatenate([np.arange(in_len), np.arange(in_len - 1, -1, -1)])
    source = mirror[np.mod(indices.astype(np.int64) - 1, 2 * in_len)]
    keep = np.any(weights != 0, axis=0)
    return weights[:, keep], source[:, keep]


RESAMPLE_OPERATOR_CACHE = 64


@lru_cache(maxsize=RESAMPLE_OPERATOR_CACHE)
def resize_operator(in_len: int, out_len: int, antialias: bool) -> sp.csr_matrix:
    """Sparse ``(out_len, in_len)`` matrix applying :func:`resize_weights` along one axis."""

    weights, source = resize_weights(in_len, out_len, antialias)
    rows = np.repeat(np.arange(out_len), weights.shape[1])
    # duplicate (row, source) pairs from the mirrored border are summed
    return sp.csr_matrix((weights.ravel(), (rows, source.ravel())), shape=(out_len, in_len))


@lru_cache(maxsize=RESAMPLE_OPERATOR_CACHE)
def _column_operator(in_len: int, out_len: int, antialias: bool) -> np.ndarray:
    matrix = resize_operator(in_len, out_len, antialias).T.toarray()
    matrix.setflags(write=False)
    return matrix


def _resample_rows(data: np.ndarray, out_len: int, antialias: bool) -> np.ndarray:
    op = resize_operator(data.shape[1], out_len, antialias)
    out = np.empty((data.shape[0], out_len, data.shape[2]))
    for c, plane in enumerate(data):
        out[c] = op @ plane
    return out


def _resample_columns(data: np.ndarray, out_len: int, antialias: bool) -> np.ndarray:
    return data @ _column_operator(data.shape[2], out_len, antialias)


def resize_bicubic(img: Image, out_width: int, out_height: int, antialias: bool = True) -> Image:
    """Cubic-convolution resize; the kernel is widened when shrinking with *antialias*."""

    if out_width < 1 or out_height < 1:
        raise InvalidArgumentError(f"output size must be positive, got {out_width}x{out_height}")
    data = img.data
    scale_h = out_height / img.height
    scale_w = out_width / img.width
    # smaller scale first; on ties the column pass runs on the smaller field
    if scale_w < scale_h or (scale_w == scale_h and scale_w > 1):
        data = _resample_columns(data, out_width, antialias)
        data = _resample_rows(data, out_height, antialias)
    else:
        data = _resample_rows(data, out_height, antialias)
        data = _resample_columns(data, out_width, antialias)
    return Image(data)


# --------------------------------------------------------------------------
# padding / cropping
# --------------------------------------------------------------------------


def pad_circular(img: Image, top: int, bottom: int, left: int, right: int) -> Image:
    require(min(top, bottom, left, right) >= 0, "padding margins must be >= 0")
    return Image(np.pad(img.data, ((0, 0), (top, bottom), (left, right)), mode="wrap"))


def crop(img: Image, top: int, bottom: int, left: int, right: int) -> Image:
    """Remove the given margins."""

    require(min(top, bottom, left, right) >= 0, "crop margins must be >= 0")
    if top + bottom >= img.height or left + right >= img.width:
        raise InvalidArgumentError(
            f"crop ({top},{bottom},{left},{right}) leaves nothing of a {img.width}x{img.height} image"
        )
    return Image(img.data[:, top : img.height - bottom, left : img.width - right])


def crop_to_multiple(img: Image, scale: int) -> Image:
    """Crop bottom/right so both dimensions are divisible by *scale*."""

    require(scale >= 1, f"scale must be >= 1, got {scale}")
    h = img.height - img.height % scale
    w = img.width - img.width % scale
    require(h >= 1 and w >= 1, f"image {img.width}x{img.height} is smaller than scale {scale}")
    return Image(img.data[:, :h, :w])


def circular_convolve_array(data: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Circular convolution of ``(..., H, W)`` data with a 2-D tap grid.

    The tap at ``(size_y // 2, size_x // 2)`` is the origin. Zero taps are
    skipped, so a delta kernel reproduces the input bit for bit.
    """

    cy, cx = weights.shape[0] // 2, weights.shape[1] // 2
    out = np.zeros_like(data, dtype=np.float64)
    for a, b in zip(*np.nonzero(weights)):
        out = out + weights[a, b] * np.roll(data, (a - cy, b - cx), axis=(-2, -1))
    return out


def _taper_profile(projection: np.ndarray, n: int) -> np.ndarray:
    m = projection.size
    auto = np.correlate(projection, projection, mode="full")
    z = np.zeros(n - 1)
    for lag in range(-(m - 1), m):
        z[lag % (n - 1)] += auto[lag + m - 1]
    z = np.append(z, z[0])
    return z / z.max()


def edge_taper(img: Image, kernel: "Kernel") -> Image:
    """Blend borders toward their blurred version to hide wrap-around seams.

    Pixels at least one kernel size away from every border are returned unchanged.
    """

    weights = kernel.weights
    if kernel.size_y >= img.height or kernel.size_x >= img.width:
        raise InvalidArgumentError(
            f"kernel {kernel.size_y}x{kernel.size_x} must be smaller than image {img.height}x{img.width}"
        )
    beta_rows = _taper_profile(weights.sum(axis=1), img.height)
    beta_cols = _taper_profile(weights.sum(axis=0), img.width)
    alpha = np.outer(1.0 - beta_rows, 1.0 - beta_cols)
    blurred = circular_convolve_array(img.data, weights)
    return Image(alpha * img.data + (1.0 - alpha) * blurred)


# --------------------------------------------------------------------------
# file I/O
# --------------------------------------------------------------------------


def read_png(path: str | Path) -> Image:
    """Read an 8-bit PNG as 1 or 3 channels scaled to [0, 1]."""

    with PILImage.open(path) as pil:
        if pil.mode not in ("L", "RGB"):
            if pil.mode in ("I;16", "I;16B", "I", "F"):
                raise InvalidArgumentError(f"{path}: only 8-bit images are supported, got mode {pil.mode}")
            pil = pil.convert("L" if pil.mode in ("LA", "1") else "RGB")
        arr = np.asarray(pil, dtype=np.float64) / 255.0
    return Image.from_hwc(arr)


def to_uint8(img: Image) -> np.ndarray:
    return np.round(np.clip(img.to_hwc(), 0.0, 1.0) * 255.0).astype(np.uint8)


def write_png(img: Image, path: str | Path) -> Path:
    path = Path(path)
    PILImage.fromarray(to_uint8(img)).save(path, format="PNG")
    return path


def write_pfm(img: Image, path: str | Path) -> Path:
    """Write a little-endian portable float map (float32 samples, bottom row first)."""

    path = Path(path)
    tag = b"PF" if img.channels == 3 else b"Pf"
    hwc = img.to_hwc().astype("<f4")
    body = np.ascontiguousarray(hwc[::-1]).tobytes()
    header = tag + b"\n" + f"{img.width} {img.height}\n".encode("ascii") + b"-1.0\n"
    path.write_bytes(header + body)
    return path


def read_pfm(path: str | Path) -> Image:
    path = Path(path)
    with path.open("rb") as fh:
        tag = fh.readline().strip()
        if tag not in (b"PF", b"Pf"):
            raise InvalidArgumentError(f"{path}: not a PFM file")
        try:
            width, height = (int(v) for v in fh.readline().split())
            scale = float(fh.readline().strip())
        except ValueError as exc:
            raise InvalidArgumentError(f"{path}: malformed PFM header") from exc
        channels = 3 if tag == b"PF" else 1
        dtype = "<f4" if scale < 0 else ">f4"
        raw = np.frombuffer(fh.read(), dtype=dtype)
    if raw.size != width * height * channels:
        raise InvalidArgumentError(f"{path}: expected {width * height * channels} samples, found {raw.size}")
    arr = raw.reshape(height, width, channels)[::-1].astype(np.float64)
    if channels == 1:
        arr = arr[:, :, 0]
    return Image.from_hwc(arr)
