"""Blur-kernel synthesis, serialization and PSF-to-OTF conversion.

Three families are generated: Gaussian (isotropic or rotated anisotropic,
sampled at tap centers), disk (area-integrated) and camera-shake motion
(random-walk trajectories splatted onto the tap grid).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Mapping

import numpy as np

from . import image_core
from .image_core import Image
from .types import ComplexField
from .validate import InvalidArgumentError, KernelFormatError, require

SUM_TOLERANCE = 1e-8
FILE_SUM_TOLERANCE = 1e-3
FILE_MAGIC = "PPSRK 1"


@dataclass(frozen=True, eq=False)
class Kernel:
    """Nonnegative PSF whose taps sum to one; ``weights`` is ``(size_y, size_x)``."""

    weights: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.weights, dtype=np.float64)
        require(arr.ndim == 2, f"kernel must be two-dimensional, got {arr.ndim}-D")
        require(arr.shape[0] >= 1 and arr.shape[1] >= 1, "kernel dimensions must be >= 1")
        require(bool(np.all(np.isfinite(arr))), "kernel taps must be finite")
        require(bool(np.all(arr >= 0)), "kernel taps must be nonnegative")
        total = float(arr.sum())
        require(abs(total - 1.0) <= SUM_TOLERANCE, f"kernel taps must sum to 1, got {total!r}")
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)

    @classmethod
    def normalized(cls, arr: np.ndarray) -> "Kernel":
        arr = np.asarray(arr, dtype=np.float64)
        total = arr.sum()
        require(total > 0, "kernel has no mass")
        return cls(arr / total)

    @property
    def size_x(self) -> int:
        return int(self.weights.shape[1])

    @property
    def size_y(self) -> int:
        return int(self.weights.shape[0])


def delta_kernel() -> Kernel:
    return Kernel(np.ones((1, 1)))


# --------------------------------------------------------------------------
# Gaussian
# --------------------------------------------------------------------------


def gaussian_kernel(size: int, sigma_x: float, sigma_y: float | None = None, theta: float = 0.0) -> Kernel:
    """Bivariate Gaussian with covariance R(theta) diag(sx^2, sy^2) R(theta)^T."""

    if size < 3 or size % 2 == 0:
        raise InvalidArgumentError(f"Gaussian kernel size must be odd and >= 3, got {size}")
    if sigma_y is None:
        sigma_y = sigma_x
    require(sigma_x > 0 and sigma_y > 0, "Gaussian sigmas must be > 0")
    half = size // 2
    coords = np.arange(-half, half + 1, dtype=np.float64)
    xx, yy = np.meshgrid(coords, coords)
    if sigma_x == sigma_y:
        # rotation has no effect; skip it so the grid is exactly theta-independent
        quad = (xx * xx + yy * yy) / (sigma_x * sigma_x)
    else:
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        inv = np.linalg.inv(rot @ np.diag([sigma_x**2, sigma_y**2]) @ rot.T)
        quad = inv[0, 0] * xx * xx + 2.0 * inv[0, 1] * xx * yy + inv[1, 1] * yy * yy
    return Kernel.normalized(np.exp(-0.5 * quad))


# --------------------------------------------------------------------------
# disk
# --------------------------------------------------------------------------


def _arc_integral(r: float, a: float, b: float) -> float:
    """Integral of sqrt(r^2 - x^2) over [a, b] within [-r, r]."""

    def antiderivative(x: float) -> float:
        x = min(max(x, -r), r)
        return 0.5 * (x * math.sqrt(max(r * r - x * x, 0.0)) + r * r * math.asin(x / r))

    return antiderivative(b) - antiderivative(a)


def _disk_coverage(x0: float, x1: float, y0: float, y1: float, r: float) -> float:
    """Exact area of the rectangle [x0, x1] x [y0, y1] inside the disk of radius r."""

    cuts = {x0, x1, -r, r}
    for v in (y0, y1):
        if abs(v) < r:
            t = math.sqrt(r * r - v * v)
            cuts.update((t, -t))
    points = sorted(p for p in cuts if x0 <= p <= x1)
    area = 0.0
    for a, b in zip(points, points[1:]):
        mid = 0.5 * (a + b)
        if b <= a or abs(mid) >= r:
            continue
        s = math.sqrt(r * r - mid * mid)
        top_on_arc = s < y1
        bottom_on_arc = -s > y0
        top = s if top_on_arc else y1
        bottom = -s if bottom_on_arc else y0
        if top <= bottom:
            continue
        arc = _arc_integral(r, a, b)
        upper = arc if top_on_arc else y1 * (b - a)
        lower = -arc if bottom_on_arc else y0 * (b - a)
        area += upper - lower
    return area


def disk_kernel(radius: float) -> Kernel:
    """Uniform disk; each tap holds the fraction of the disk area it covers."""

    if radius < 0.5:
        raise InvalidArgumentError(f"disk radius must be >= 0.5, got {radius}")
    half = int(math.ceil(radius))
    size = 2 * half + 1
    taps = np.zeros((size, size))
    for i in range(size):
        for j in range(size):
            lo, hi = sorted((abs(j - half), abs(i - half)))
            taps[i, j] = _disk_coverage(lo - 0.5, lo + 0.5, hi - 0.5, hi + 0.5, radius)
    return Kernel.normalized(taps)


# --------------------------------------------------------------------------
# motion
# --------------------------------------------------------------------------

_SPLAT_SPACING = 0.25


def _random_walk(rng: np.random.Generator, steps: int, anxiety: float, length: float) -> np.ndarray:
    """Camera-shake path as complex positions: inertia, centripetal pull, rare big shakes."""

    centripetal = 0.7 * rng.random()
    gaussian_term = 10.0 * rng.random()
    big_shake_freq = 0.2 * rng.random()
    step_length = length / (steps - 1)
    v = step_length * np.exp(1j * 2.0 * math.pi * rng.random())
    x = np.zeros(steps, dtype=np.complex128)
    for t in range(steps - 1):
        if rng.random() < big_shake_freq * anxiety:
            next_direction = 2.0 * v * np.exp(1j * (math.pi + (rng.random() - 0.5)))
        else:
            next_direction = 0.0
        noise = complex(rng.standard_normal(), rng.standard_normal())
        dv = next_direction + anxiety * (gaussian_term * noise - centripetal * x[t]) * step_length
        v = v + dv
        if abs(v) == 0:
            v = step_length * np.exp(1j * 2.0 * math.pi * rng.random())
        v = v / abs(v) * step_length
        x[t + 1] = x[t] + v
    return x


def _densify(vertices: np.ndarray) -> np.ndarray:
    points = []
    for p, q in zip(vertices[:-1], vertices[1:]):
        n = max(1, int(math.ceil(abs(q - p) / _SPLAT_SPACING)))
        points.append(p + (q - p) * (np.arange(n) / n))
    points.append(vertices[-1:])
    return np.concatenate(points)


def _place_on_grid(vertices: np.ndarray, size: int) -> tuple[np.ndarray, np.ndarray]:
    """Center the densified path's mean on the middle tap and shrink it to fit."""

    dense = _densify(vertices)
    mean = dense.mean()
    offsets = dense - mean
    extent = float(max(np.abs(offsets.real).max(), np.abs(offsets.imag).max()))
    limit = (size - 1) / 2.0 - 1.0
    factor = limit / extent if extent > limit else 1.0
    center = complex((size - 1) / 2.0, (size - 1) / 2.0)
    return center + (vertices - mean) * factor, center + offsets * factor


def motion_trajectory(seed: int, size: int, trajectory_steps: int = 64, anxiety: float = 0.1) -> np.ndarray:
    """Trajectory vertices in tap coordinates as an ``(steps, 2)`` array of (x, y)."""

    vertices, _ = _motion_path(seed, size, trajectory_steps, anxiety)
    return np.stack([vertices.real, vertices.imag], axis=1)


def _motion_path(seed: int, size: int, steps: int, anxiety: float) -> tuple[np.ndarray, np.ndarray]:
    if size < 5 or size % 2 == 0:
        raise InvalidArgumentError(f"motion kernel size must be odd and >= 5, got {size}")
    require(steps >= 2, f"trajectory_steps must be >= 2, got {steps}")
    require(anxiety >= 0, f"anxiety must be >= 0, got {anxiety}")
    rng = np.random.default_rng(seed)
    raw = _random_walk(rng, steps, anxiety, float(size - 1))
    return _place_on_grid(raw, size)


def motion_kernel(seed: int, size: int, trajectory_steps: int = 64, anxiety: float = 0.1) -> Kernel:
    """Rasterize a seeded camera-shake trajectory with bilinear splatting.

    A path sample only feeds the taps closer than one tap width to it.
    """

    _, dense = _motion_path(seed, size, trajectory_steps, anxiety)
    xs, ys = dense.real, dense.imag
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    taps = np.zeros((size, size))
    for dy in (0, 1):
        for dx in (0, 1):
            wx = fx if dx else 1 - fx
            wy = fy if dy else 1 - fy
            near = (fx - dx) ** 2 + (fy - dy) ** 2 < 1.0
            np.add.at(taps, (y0 + dy, x0 + dx), np.where(near, wx * wy, 0.0))
    return Kernel.normalized(taps)


def augment_kernel(kernel: Kernel, seed: int) -> Kernel:
    """Random rotation by a multiple of 90 degrees, then an optional horizontal flip."""

    rng = np.random.default_rng(seed)
    taps = np.rot90(kernel.weights, int(rng.integers(4)))
    if rng.random() < 0.5:
        taps = np.fliplr(taps)
    return Kernel(np.ascontiguousarray(taps))


def kernel_suite(seed: int = 0) -> Dict[str, Kernel]:
    """Gaussian, motion and disk kernels shaped like the standard three-family benchmark."""

    rng = np.random.default_rng(seed)
    suite: Dict[str, Kernel] = {}
    for i in range(8):
        suite[f"g{i + 1:02d}"] = gaussian_kernel(15, float(rng.uniform(0.6, 2.0)))
    for i in range(8, 16):
        sx, sy = sorted(rng.uniform(0.6, 3.0, size=2), reverse=True)
        suite[f"g{i + 1:02d}"] = gaussian_kernel(15, float(sx), float(sy), float(rng.uniform(0, math.pi)))
    base = []
    for i in range(8):
        size = int(rng.choice(np.arange(11, 36, 2)))
        k = motion_kernel(int(rng.integers(2**31)), size, 64, float(rng.uniform(0.005, 0.1)))
        base.append(k)
        suite[f"m{i + 1:02d}"] = k
    for i, k in enumerate(base):
        suite[f"m{i + 9:02d}"] = augment_kernel(k, int(rng.integers(2**31)))
    for i in range(16, 32):
        size = int(rng.choice(np.arange(11, 36, 2)))
        suite[f"m{i + 1:02d}"] = motion_kernel(int(rng.integers(2**31)), size, 64, float(rng.uniform(0.005, 0.1)))
    for i in range(8):
        suite[f"d{i + 1:02d}"] = disk_kernel(float(rng.uniform(1.8, 6.0)))
    return suite


def kernel_from_spec(spec: Mapping[str, Any]) -> Kernel:
    """Build a kernel from a config mapping keyed by ``family``."""

    family = str(spec.get("family", "")).lower()
    try:
        if family == "gaussian":
            sigma = spec.get("sigma")
            sigma_x = float(spec.get("sigma_x", sigma if sigma is not None else 1.0))
            sigma_y = float(spec.get("sigma_y", sigma_x))
            return gaussian_kernel(int(spec.get("size", 15)), sigma_x, sigma_y, float(spec.get("theta", 0.0)))
        if family == "disk":
            return disk_kernel(float(spec["radius"]))
        if family == "motion":
            return motion_kernel(
                int(spec.get("seed", 0)),
                int(spec.get("size", 25)),
                int(spec.get("steps", 64)),
                float(spec.get("anxiety", 0.1)),
            )
        if family == "file":
            return read_kernel(spec["path"])
        if family == "delta":
            return delta_kernel()
    except KeyError as exc:
        raise InvalidArgumentError(f"kernel spec {dict(spec)!r} is missing {exc}") from exc
    raise InvalidArgumentError(f"unknown kernel family {family!r}")


# --------------------------------------------------------------------------
# convolution / OTF
# --------------------------------------------------------------------------


def circular_convolve(img: Image, kernel: Kernel) -> Image:
    return Image(image_core.circular_convolve_array(img.data, kernel.weights))


def psf_to_otf(kernel: Kernel, field_w: int, field_h: int) -> ComplexField:
    """Embed the PSF in a zero field, move its center tap to (0, 0), then FFT."""

    if kernel.size_x > field_w or kernel.size_y > field_h:
        raise InvalidArgumentError(
            f"kernel {kernel.size_y}x{kernel.size_x} does not fit a {field_h}x{field_w} field"
        )
    padded = np.zeros((field_h, field_w))
    padded[: kernel.size_y, : kernel.size_x] = kernel.weights
    padded = np.roll(padded, (-(kernel.size_y // 2), -(kernel.size_x // 2)), axis=(0, 1))
    return ComplexField(np.fft.fft2(padded))


# --------------------------------------------------------------------------
# KernelFile I/O
# --------------------------------------------------------------------------


def format_kernel(kernel: Kernel) -> str:
    lines = [FILE_MAGIC, f"{kernel.size_y} {kernel.size_x}"]
    for row in kernel.weights:
        lines.append(" ".join(f"{v:.17g}" for v in row))
    return "\n".join(lines) + "\n"


def write_kernel(kernel: Kernel, path: str | Path) -> Path:
    path = Path(path)
    path.write_text(format_kernel(kernel))
    return path


def parse_kernel(text: str, source: str = "<kernel>") -> Kernel:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines or lines[0].strip() != FILE_MAGIC:
        raise KernelFormatError(f"{source}: missing '{FILE_MAGIC}' header")
    try:
        size_y, size_x = (int(v) for v in lines[1].split())
        rows = [[float(v) for v in line.split()] for line in lines[2:]]
    except (IndexError, ValueError) as exc:
        raise KernelFormatError(f"{source}: malformed kernel file ({exc})") from exc
    if size_y < 1 or size_x < 1 or len(rows) != size_y or any(len(r) != size_x for r in rows):
        raise KernelFormatError(f"{source}: expected {size_y} rows of {size_x} values")
    taps = np.array(rows)
    if not np.all(np.isfinite(taps)) or np.any(taps < 0):
        raise KernelFormatError(f"{source}: taps must be finite and nonnegative")
    total = float(taps.sum())
    if abs(total - 1.0) > FILE_SUM_TOLERANCE:
        raise KernelFormatError(f"{source}: taps sum to {total!r}, expected 1")
    return Kernel(taps / total)


def read_kernel(path: str | Path) -> Kernel:
    path = Path(path)
    return parse_kernel(path.read_text(), str(path))


def kernel_to_png(kernel: Kernel, path: str | Path, zoom: int = 1) -> Path:
    """Max-normalized grayscale preview, optionally enlarged by pixel replication."""

    preview = kernel.weights / kernel.weights.max()
    if zoom > 1:
        preview = np.kron(preview, np.ones((zoom, zoom)))
    return image_core.write_png(Image(preview), path)
