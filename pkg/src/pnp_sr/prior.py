"""Super-resolver priors: the SR(z, s, noise_level) step of the alternating scheme.

A prior maps a noisy, bicubicly-downsampled LR image to an HR estimate.
The built-in one denoises by transform-domain hard thresholding and then
interpolates; external ones run as child processes speaking PFM.
"""

from __future__ import annotations

import os
import shlex
import shutil
import subprocess
import tempfile
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Protocol

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.fft import dctn, idctn

from . import image_core
from .config import PriorConfig
from .image_core import Image
from .types import PriorCapabilities
from .validate import CapabilityError, ExternalPriorError, InvalidArgumentError, PnpSrError, require

DEFAULT_SCALES = frozenset({1, 2, 3, 4})
DEFAULT_NOISE_RANGE = (0.0, 50.0)
PROTOCOL_ARGS = "--in {in} --out {out} --scale {scale} --sigma {sigma}"
_PLACEHOLDERS = ("{in}", "{out}", "{scale}", "{sigma}")


class SuperResolver(Protocol):
    capabilities: PriorCapabilities

    def super_resolve(self, z: Image, scale: int, noise_level: float) -> Image:  # pragma: no cover - protocol
        ...


def super_resolve(prior: SuperResolver, z: Image, scale: int, noise_level: float) -> Image:
    """Call *prior* after a capability check and enforce its output contract."""

    if not prior.capabilities.supports(scale, noise_level):
        lo, hi = prior.capabilities.noise_range
        raise CapabilityError(
            f"prior supports scales {sorted(prior.capabilities.scales)} and noise levels "
            f"[{lo}, {hi}]; got scale={scale} noise_level={noise_level}"
        )
    out = prior.super_resolve(z, scale, noise_level)
    if (out.width, out.height, out.channels) != (scale * z.width, scale * z.height, z.channels):
        raise PnpSrError(
            f"prior returned {out.channels}x{out.height}x{out.width}, expected "
            f"{z.channels}x{scale * z.height}x{scale * z.width}"
        )
    return out


# --------------------------------------------------------------------------
# built-in prior
# --------------------------------------------------------------------------


def _window_positions(length: int, window: int, stride: int) -> np.ndarray:
    positions = list(range(0, length - window + 1, stride))
    if positions[-1] != length - window:
        positions.append(length - window)
    return np.asarray(positions)


def shrinkage_denoise(
    img: Image,
    noise_level: float,
    *,
    threshold_factor: float = 2.7,
    window: int = 8,
    stride: int = 4,
) -> Image:
    """Sliding-window DCT hard thresholding with uniform aggregation; DC is always kept."""

    require(noise_level >= 0, f"noise_level must be >= 0, got {noise_level}")
    require(window >= 1 and stride >= 1, "window and stride must be >= 1")
    if noise_level == 0:
        return img
    threshold = threshold_factor * noise_level / 255.0
    wh, ww = min(window, img.height), min(window, img.width)
    rows = _window_positions(img.height, wh, stride)
    cols = _window_positions(img.width, ww, stride)

    patches = sliding_window_view(img.data, (wh, ww), axis=(1, 2))[:, rows][:, :, cols]
    coeffs = dctn(patches, axes=(-2, -1), norm="ortho")
    keep = np.abs(coeffs) >= threshold
    keep[..., 0, 0] = True
    estimates = idctn(np.where(keep, coeffs, 0.0), axes=(-2, -1), norm="ortho")

    acc = np.zeros_like(img.data)
    hits = np.zeros(img.data.shape[1:])
    for di in range(wh):
        r = (rows + di)[:, None]
        for dj in range(ww):
            c = (cols + dj)[None, :]
            acc[:, r, c] += estimates[:, :, :, di, dj]
            hits[r, c] += 1.0
    return Image(acc / hits)


@dataclass(frozen=True)
class BicubicShrinkagePrior:
    """Denoise in the LR domain, then bicubic-interpolate by the scale factor."""

    threshold_factor: float = 2.7
    window: int = 8
    stride: int = 4
    capabilities: PriorCapabilities = field(
        default_factory=lambda: PriorCapabilities(DEFAULT_SCALES, DEFAULT_NOISE_RANGE)
    )

    def super_resolve(self, z: Image, scale: int, noise_level: float) -> Image:
        clean = shrinkage_denoise(
            z,
            noise_level,
            threshold_factor=self.threshold_factor,
            window=self.window,
            stride=self.stride,
        )
        if scale == 1:
            return clean
        return image_core.resize_bicubic(clean, scale * z.width, scale * z.height)


def builtin_bicubic_shrinkage_prior(
    threshold_factor: float = 2.7, window: int = 8, stride: int = 4
) -> BicubicShrinkagePrior:
    return BicubicShrinkagePrior(threshold_factor=threshold_factor, window=window, stride=stride)


# --------------------------------------------------------------------------
# external prior
# --------------------------------------------------------------------------


class ExternalPrior:
    """Runs ``<command> --in in.pfm --out out.pfm --scale s --sigma nu`` once per call.

    Calls on one instance are serialized; the input file is made read-only
    before the child starts.
    """

    def __init__(
        self,
        command_template: str,
        *,
        capabilities: PriorCapabilities | None = None,
        timeout_sec: float | None = None,
    ):
        if not any(p in command_template for p in _PLACEHOLDERS):
            command_template = f"{command_template} {PROTOCOL_ARGS}"
        tokens = shlex.split(command_template)
        if not tokens:
            raise InvalidArgumentError("external prior command is empty")
        if shutil.which(tokens[0]) is None:
            raise ExternalPriorError(f"external prior command {tokens[0]!r} is not executable")
        self.command_template = command_template
        self.capabilities = capabilities or PriorCapabilities(DEFAULT_SCALES, DEFAULT_NOISE_RANGE)
        self.timeout_sec = timeout_sec
        self._lock = threading.Lock()

    def command_for(self, in_path: Path, out_path: Path, scale: int, noise_level: float) -> List[str]:
        values = {
            "{in}": str(in_path),
            "{out}": str(out_path),
            "{scale}": str(int(scale)),
            "{sigma}": repr(float(noise_level)),
        }
        args = []
        for token in shlex.split(self.command_template):
            for key, value in values.items():
                token = token.replace(key, value)
            args.append(token)
        return args

    def super_resolve(self, z: Image, scale: int, noise_level: float) -> Image:
        with self._lock, tempfile.TemporaryDirectory(prefix="pnp_sr_prior_") as tmp:
            in_path = Path(tmp) / "in.pfm"
            out_path = Path(tmp) / "out.pfm"
            image_core.write_pfm(z, in_path)
            os.chmod(in_path, 0o444)
            cmd = self.command_for(in_path, out_path, scale, noise_level)
            try:
                proc = subprocess.run(cmd, capture_output=True, text=True, timeout=self.timeout_sec)
            except subprocess.TimeoutExpired as exc:
                raise ExternalPriorError(f"external prior timed out after {self.timeout_sec}s") from exc
            except OSError as exc:
                raise ExternalPriorError(f"could not start external prior: {exc}") from exc
            if proc.returncode != 0:
                raise ExternalPriorError("external prior failed", returncode=proc.returncode, stderr=proc.stderr)
            if not out_path.exists():
                raise ExternalPriorError("external prior wrote no output", stderr=proc.stderr)
            try:
                out = image_core.read_pfm(out_path)
            except (InvalidArgumentError, ValueError) as exc:
                raise ExternalPriorError(f"unreadable external prior output: {exc}", stderr=proc.stderr) from exc
        expected = (scale * z.width, scale * z.height, z.channels)
        if (out.width, out.height, out.channels) != expected:
            raise ExternalPriorError(
                f"external prior returned {out.width}x{out.height}x{out.channels}, expected "
                f"{expected[0]}x{expected[1]}x{expected[2]}"
            )
        return out


def external_prior(command_template: str, *, timeout_sec: float | None = None) -> ExternalPrior:
    return ExternalPrior(command_template, timeout_sec=timeout_sec)


def prior_from_config(cfg: PriorConfig) -> SuperResolver:
    if cfg.kind == "builtin":
        return builtin_bicubic_shrinkage_prior(cfg.threshold_factor, cfg.window, cfg.stride)
    if cfg.kind == "exec":
        if not cfg.command:
            raise InvalidArgumentError("prior kind 'exec' needs a command")
        return external_prior(cfg.command, timeout_sec=cfg.timeout_sec)
    raise InvalidArgumentError(f"unknown prior kind {cfg.kind!r}")


def parse_prior_selector(selector: str, base: PriorConfig) -> PriorConfig:
    """``builtin`` or ``exec:<command>`` as accepted by the CLI."""

    if selector == "builtin":
        return PriorConfig(
            kind="builtin",
            threshold_factor=base.threshold_factor,
            window=base.window,
            stride=base.stride,
            timeout_sec=base.timeout_sec,
        )
    if selector.startswith("exec:") and selector[5:].strip():
        return PriorConfig(kind="exec", command=selector[5:].strip(), timeout_sec=base.timeout_sec)
    raise InvalidArgumentError(f"--prior must be 'builtin' or 'exec:<cmd>', got {selector!r}")
