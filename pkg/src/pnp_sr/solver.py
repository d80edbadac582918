"""Closed-form data step of the splitting scheme, plus a dense reference solve."""

from __future__ import annotations

import numpy as np
import scipy.linalg

from .image_core import Image
from .kernels import Kernel
from .types import ComplexField
from .validate import IllConditionedError, InvalidArgumentError, require, require_same_shape

SINGULAR_SPECTRUM = 1e-12
IMAG_TOLERANCE = 1e-8
DENSE_MAX_PIXELS = 4096


def data_step(y: Image, k_otf: ComplexField, x_down: Image, rho: float) -> Image:
    """Minimize ||y - z*k||^2 + rho ||z - x_down||^2 over z, per channel, in the Fourier domain."""

    require_same_shape(y, x_down, "y and x_down")
    if (k_otf.height, k_otf.width) != (y.height, y.width):
        raise InvalidArgumentError(
            f"OTF is {k_otf.height}x{k_otf.width} but the LR field is {y.height}x{y.width}"
        )
    require(rho >= 0, f"rho must be >= 0, got {rho}")
    otf = k_otf.values
    power = (otf * otf.conj()).real
    if rho == 0 and float(power.min()) <= SINGULAR_SPECTRUM:
        raise IllConditionedError(
            f"rho = 0 with a near-singular spectrum (min |F(k)|^2 = {float(power.min()):.3e})"
        )
    numerator = otf.conj() * np.fft.fft2(y.data) + rho * np.fft.fft2(x_down.data)
    z = np.fft.ifft2(numerator / (power + rho))
    residue = float(np.abs(z.imag).max())
    if residue > IMAG_TOLERANCE * max(1.0, float(np.abs(z.real).max())):
        raise IllConditionedError(f"imaginary residue {residue:.3e} after inverse FFT")
    return Image(z.real)


def data_objective(z: Image, y: Image, k_otf: ComplexField, x_down: Image, rho: float) -> float:
    """||y - z*k||^2 + rho ||z - x_down||^2 under circular convolution."""

    blurred = np.fft.ifft2(np.fft.fft2(z.data) * k_otf.values).real
    return float(np.sum((y.data - blurred) ** 2) + rho * np.sum((z.data - x_down.data) ** 2))


def convolution_matrix(kernel: Kernel, width: int, height: int) -> np.ndarray:
    """Dense circulant matrix K with K @ vec(x) = vec(x circularly convolved with kernel)."""

    n = width * height
    rows, cols = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
    out_index = (rows * width + cols).ravel()
    matrix = np.zeros((n, n))
    cy, cx = kernel.size_y // 2, kernel.size_x // 2
    for a, b in zip(*np.nonzero(kernel.weights)):
        src = (((rows - (a - cy)) % height) * width + (cols - (b - cx)) % width).ravel()
        np.add.at(matrix, (out_index, src), kernel.weights[a, b])
    return matrix


def dense_oracle_solve(y: Image, kernel: Kernel, x_down: Image, rho: float) -> Image:
    """Solve (K^T K + rho I) z = K^T y + rho x_down with dense linear algebra."""

    require_same_shape(y, x_down, "y and x_down")
    if y.width * y.height > DENSE_MAX_PIXELS:
        raise InvalidArgumentError(
            f"dense solve limited to {DENSE_MAX_PIXELS} pixels, got {y.width * y.height}"
        )
    require(rho >= 0, f"rho must be >= 0, got {rho}")
    K = convolution_matrix(kernel, y.width, y.height)
    system = K.T @ K + rho * np.eye(K.shape[0])
    if rho == 0 and np.linalg.matrix_rank(K) < K.shape[0]:
        raise IllConditionedError("rho = 0 with a singular convolution matrix")
    rhs = y.data.reshape(y.channels, -1) @ K + rho * x_down.data.reshape(y.channels, -1)
    try:
        z = scipy.linalg.solve(system, rhs.T, assume_a="sym" if rho == 0 else "pos")
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError(f"dense system is singular: {exc}") from exc
    return Image(z.T.reshape(y.data.shape))


def blur_residual(z: Image, y: Image, k_otf: ComplexField) -> float:
    """||y - z*k||_2 over all channels."""

    blurred = np.fft.ifft2(np.fft.fft2(z.data) * k_otf.values).real
    return float(np.linalg.norm((y.data - blurred).ravel()))


__all__ = [
    "blur_residual",
    "convolution_matrix",
    "data_objective",
    "data_step",
    "dense_oracle_solve",
]
