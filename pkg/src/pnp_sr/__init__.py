"""pnp-sr package."""

from . import (
    bench,
    config,
    degrade,
    dpsr,
    image_core,
    kernels,
    logging,
    main,
    metrics,
    plotting,
    prior,
    solver,
    types,
    validate,
)  # noqa: F401

__all__ = [
    "bench",
    "config",
    "degrade",
    "dpsr",
    "image_core",
    "kernels",
    "logging",
    "main",
    "metrics",
    "plotting",
    "prior",
    "solver",
    "types",
    "validate",
]
