"""Error hierarchy and argument checks shared by the numeric modules."""

from __future__ import annotations

from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:  # pragma: no cover
    from .image_core import Image


class PnpSrError(RuntimeError):
    """Root of every error raised by pnp_sr."""


class InvalidArgumentError(PnpSrError, ValueError):
    """Raised when an operation's precondition is violated."""


class KernelFormatError(InvalidArgumentError):
    """Raised when a kernel file cannot be parsed or fails the sum check."""


class IllConditionedError(PnpSrError):
    """Raised when the closed-form data step has no stable solution."""

    def __init__(self, message: str, *, iteration: int | None = None):
        if iteration is not None:
            message = f"iteration {iteration}: {message}"
        super().__init__(message)
        self.iteration = iteration


class CapabilityError(PnpSrError):
    """Raised when a prior is asked for a scale or noise level it does not support."""


class ExternalPriorError(PnpSrError):
    """Raised when an external super-resolver process fails."""

    def __init__(self, message: str, *, returncode: int | None = None, stderr: str = ""):
        detail = message
        if returncode is not None:
            detail += f" (exit code {returncode})"
        if stderr.strip():
            detail += f": {stderr.strip()}"
        super().__init__(detail)
        self.returncode = returncode
        self.stderr = stderr


def require(condition: bool, message: str) -> None:
    if not condition:
        raise InvalidArgumentError(message)


def require_same_shape(a: "Image", b: "Image", what: str = "images") -> None:
    if a.data.shape != b.data.shape:
        raise InvalidArgumentError(
            f"{what} differ in shape: {a.channels}x{a.height}x{a.width} vs {b.channels}x{b.height}x{b.width}"
        )


def ensure_finite(data: np.ndarray, what: str = "result") -> np.ndarray:
    """Return *data* unchanged, raising if any value is NaN or infinite."""

    if not np.all(np.isfinite(data)):
        raise PnpSrError(f"{what} contains non-finite values")
    return data


__all__ = [
    "CapabilityError",
    "ExternalPriorError",
    "IllConditionedError",
    "InvalidArgumentError",
    "KernelFormatError",
    "PnpSrError",
    "ensure_finite",
    "require",
    "require_same_shape",
]
