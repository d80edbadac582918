"""Half-quadratic splitting driver: alternate the closed-form data step with the SR prior."""

from __future__ import annotations

import math
from typing import List, Optional, Tuple

import numpy as np

from . import image_core, kernels, metrics, solver
from .image_core import Image
from .kernels import Kernel
from .logging import RunLogger
from .prior import SuperResolver, super_resolve
from .types import FidelityReport, SolverParams, Trace, TraceRecord
from .validate import IllConditionedError, InvalidArgumentError, require

# floor (8-bit units) on the sigma entering rho, so sigma = 0 never means rho = 0
NU_FLOOR_NUM = 1e-2
EIGHT_BIT = 255.0


def schedule_nus(sigma: float, params: SolverParams) -> List[float]:
    """Geometric decay from nu_start to max(nu_floor_min, sigma), both ends included."""

    require(sigma >= 0, f"sigma must be >= 0, got {sigma}")
    params.check_for(sigma)
    end = params.nu_end(sigma)
    n = params.iterations
    if n == 1:
        return [end]
    ratio = end / params.nu_start
    nus = [params.nu_start * ratio ** (k / (n - 1)) for k in range(n)]
    nus[-1] = end
    return nus


def rho_for(nu: float, sigma: float, params: SolverParams) -> float:
    """mu * sigma_eff^2 with mu = 1/nu^2 and lambda absorbed as sigma_eff = sqrt(lambda) * sigma."""

    sigma_eff = math.sqrt(params.lam) * sigma
    return max(sigma_eff, NU_FLOOR_NUM) ** 2 / (nu * nu)


def run_dpsr(
    y: Image,
    kernel: Kernel,
    s: int,
    sigma: float,
    params: SolverParams,
    prior: SuperResolver,
    ground_truth: Optional[Image] = None,
    *,
    logger: Optional[RunLogger] = None,
) -> Tuple[Image, Trace]:
    """Super-resolve *y* blurred by *kernel* with AWGN level *sigma* (8-bit units)."""

    nus = schedule_nus(sigma, params)
    if ground_truth is not None and (ground_truth.width, ground_truth.height) != (s * y.width, s * y.height):
        raise InvalidArgumentError(
            f"ground truth is {ground_truth.width}x{ground_truth.height}, expected {s * y.width}x{s * y.height}"
        )
    if params.edge_taper:
        y = image_core.edge_taper(y, kernel)
    otf = kernels.psf_to_otf(kernel, y.width, y.height)
    if logger is not None:
        logger.log_event(
            "dpsr.start",
            width=y.width,
            height=y.height,
            scale=s,
            sigma=sigma,
            kernel=f"{kernel.size_y}x{kernel.size_x}",
            iterations=params.iterations,
            lam=params.lam,
        )

    x = super_resolve(prior, y, s, max(sigma, params.nu_floor_min))
    x_down = image_core.resize_bicubic(x, y.width, y.height)
    trace = Trace()
    for k, nu in enumerate(nus, start=1):
        rho = rho_for(nu, sigma, params)
        try:
            z = solver.data_step(y, otf, x_down, rho)
        except IllConditionedError as exc:
            raise IllConditionedError(str(exc), iteration=k) from exc
        x_next = super_resolve(prior, z, s, nu)
        # the residual of the new estimate; x_next_down feeds the next data step
        x_next_down = image_core.resize_bicubic(x_next, y.width, y.height)
        record = TraceRecord(
            k=k,
            nu=nu,
            rho=rho,
            data_residual=solver.blur_residual(x_next_down, y, otf),
            delta_x=float(np.linalg.norm((x_next.data - x.data).ravel())),
            psnr=None if ground_truth is None else metrics.psnr(x_next, ground_truth, border_crop=s),
        )
        trace.append(record)
        if logger is not None:
            logger.log_event(
                "dpsr.iteration",
                k=k,
                nu=nu,
                rho=rho,
                data_residual=record.data_residual,
                z_residual=solver.blur_residual(z, y, otf),
                delta_x=record.delta_x,
                psnr=record.psnr,
            )
        x, x_down = x_next, x_next_down

    if logger is not None:
        logger.log_event("dpsr.finish", iterations=len(trace), psnr=trace.records[-1].psnr)
    return x, trace


def deblur_then_sr(
    y: Image,
    kernel: Kernel,
    s: int,
    sigma: float,
    params: SolverParams,
    prior: SuperResolver,
) -> Image:
    """One regularized deconvolution toward y, then a single prior call."""

    nu_end = params.nu_end(sigma)
    otf = kernels.psf_to_otf(kernel, y.width, y.height)
    z = solver.data_step(y, otf, y, rho_for(nu_end, sigma, params))
    return super_resolve(prior, z, s, nu_end)


def objective_value(x: Image, y: Image, kernel: Kernel, s: int, sigma: float, lam: float) -> FidelityReport:
    """Fidelity term ||y - (x downsampled) * k||^2 / (2 sigma^2) on [0, 1] intensities.

    ``absorbed_value`` divides additionally by lambda, the weighting the
    solver works with once lambda is folded into sigma.
    """

    require(lam > 0, f"lambda must be > 0, got {lam}")
    if (x.width, x.height) != (s * y.width, s * y.height):
        raise InvalidArgumentError(
            f"x is {x.width}x{x.height}, expected {s * y.width}x{s * y.height}"
        )
    floored = sigma <= 0
    sigma_used = NU_FLOOR_NUM if floored else float(sigma)
    x_down = image_core.resize_bicubic(x, y.width, y.height)
    residual = (y - kernels.circular_convolve(x_down, kernel)).norm()
    var = (sigma_used / EIGHT_BIT) ** 2
    value = residual * residual / (2.0 * var)
    return FidelityReport(
        value=value,
        absorbed_value=value / lam,
        residual_norm=residual,
        sigma_used=sigma_used,
        sigma_floored=floored,
    )
