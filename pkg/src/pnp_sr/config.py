"""Configuration loading helpers for pnp-sr."""

from __future__ import annotations

import tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Tuple

import yaml

from . import types


def _filter_kwargs(data: Dict[str, Any], *, allowed: set[str]) -> Dict[str, Any]:
    return {key: value for key, value in data.items() if key in allowed}


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 1.0 / 3.0
    iterations: int = 15
    nu_start: float = 49.0
    nu_floor_min: float = 2.55
    edge_taper: bool = False

    def to_params(self) -> types.SolverParams:
        return types.SolverParams(
            lam=float(self.lam),
            iterations=int(self.iterations),
            nu_start=float(self.nu_start),
            nu_floor_min=float(self.nu_floor_min),
            edge_taper=bool(self.edge_taper),
        )


@dataclass(frozen=True)
class PriorConfig:
    kind: str = "builtin"
    command: str | None = None
    threshold_factor: float = 2.7
    window: int = 8
    stride: int = 4
    timeout_sec: float | None = None


@dataclass(frozen=True)
class MetricsConfig:
    border_crop: int | None = None
    per_channel: bool = False


@dataclass(frozen=True)
class BenchConfig:
    """Degradation grid of one benchmark run."""

    dataset: str | None = None
    scales: Tuple[int, ...] = (2, 3, 4)
    kernels: Tuple[Dict[str, Any], ...] = ()
    sigmas: Tuple[float, ...] = (0.0,)
    seed: int = 0
    methods: Tuple[str, ...] = ("dpsr", "bicubic")
    output_dir: str = "bench_out"
    jobs: int = 1


@dataclass(frozen=True)
class LoggingConfig:
    dir: str = ".pnp_sr_runs"
    stream: bool = False


@dataclass(frozen=True)
class Config:
    """Aggregated configuration."""

    solver: SolverConfig = field(default_factory=SolverConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)
    bench: BenchConfig = field(default_factory=BenchConfig)
    logging: LoggingConfig = field(default_factory=LoggingConfig)

    @classmethod
    def default(cls) -> "Config":
        return cls()

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Config":
        solver_raw = dict(data.get("solver", {}))
        if "lambda" in solver_raw:
            solver_raw["lam"] = solver_raw.pop("lambda")
        solver = SolverConfig(**_filter_kwargs(solver_raw, allowed=set(SolverConfig.__annotations__.keys())))
        prior = PriorConfig(**_filter_kwargs(data.get("prior", {}), allowed=set(PriorConfig.__annotations__.keys())))
        metrics = MetricsConfig(
            **_filter_kwargs(data.get("metrics", {}), allowed=set(MetricsConfig.__annotations__.keys()))
        )
        bench_raw = _filter_kwargs(data.get("bench", {}), allowed=set(BenchConfig.__annotations__.keys()))
        for key in ("scales", "kernels", "sigmas", "methods"):
            if key in bench_raw:
                bench_raw[key] = tuple(bench_raw[key])
        bench = BenchConfig(**bench_raw)
        logging_cfg = LoggingConfig(
            **_filter_kwargs(data.get("logging", {}), allowed=set(LoggingConfig.__annotations__.keys()))
        )
        return cls(solver=solver, prior=prior, metrics=metrics, bench=bench, logging=logging_cfg)

    @classmethod
    def load(cls, path: str | Path | None = None) -> "Config":
        """Load configuration from *path* if it exists, otherwise defaults.

        Files ending in ``.toml`` are parsed as TOML, anything else as YAML.
        """

        if path is None:
            path = Path("config.yaml")
        else:
            path = Path(path)
        if not path.exists():
            return cls.default()
        if path.suffix == ".toml":
            raw = tomllib.loads(path.read_text())
        else:
            raw = yaml.safe_load(path.read_text()) or {}
        if not isinstance(raw, dict):
            raise ValueError("Config file must contain a mapping at the top level.")
        return cls.from_dict(raw)


__all__ = [
    "BenchConfig",
    "Config",
    "LoggingConfig",
    "MetricsConfig",
    "PriorConfig",
    "SolverConfig",
]
