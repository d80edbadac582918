"""Core datatypes for pnp-sr."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING, FrozenSet, List, Optional, Tuple

import numpy as np

from .validate import InvalidArgumentError, require

if TYPE_CHECKING:  # pragma: no cover
    from .kernels import Kernel


@dataclass(frozen=True, eq=False)
class ComplexField:
    """Spectrum of one LR field; shared by every channel of that field."""

    values: np.ndarray

    def __post_init__(self) -> None:
        arr = np.array(self.values, dtype=np.complex128)
        require(arr.ndim == 2, "ComplexField must be two-dimensional")
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return int(self.values.shape[0])

    @property
    def width(self) -> int:
        return int(self.values.shape[1])


@dataclass(frozen=True)
class DegradationSpec:
    """Kernel, scale, noise level (8-bit units) and seed of one synthesis."""

    kernel: "Kernel"
    scale: int
    sigma: float
    seed: int = 0

    def __post_init__(self) -> None:
        require(int(self.scale) == self.scale and self.scale >= 1, f"scale must be a positive integer, got {self.scale}")
        require(self.sigma >= 0, f"sigma must be >= 0, got {self.sigma}")

    def describe(self) -> str:
        return (
            f"kernel={self.kernel.size_y}x{self.kernel.size_x} scale={self.scale} "
            f"sigma={self.sigma!r} seed={self.seed}"
        )


@dataclass(frozen=True)
class SolverParams:
    """Parameters of the alternating solver; noise levels in 8-bit units."""

    lam: float = 1.0 / 3.0
    iterations: int = 15
    nu_start: float = 49.0
    nu_floor_min: float = 2.55
    edge_taper: bool = False

    def __post_init__(self) -> None:
        require(self.iterations >= 1, f"iterations must be >= 1, got {self.iterations}")
        require(self.lam > 0, f"lambda must be > 0, got {self.lam}")
        require(self.nu_floor_min > 0, f"nu_floor_min must be > 0, got {self.nu_floor_min}")

    def nu_end(self, sigma: float) -> float:
        return max(self.nu_floor_min, sigma)

    def check_for(self, sigma: float) -> None:
        if self.nu_start < self.nu_end(sigma):
            raise InvalidArgumentError(
                f"nu_start {self.nu_start} is below the final noise level {self.nu_end(sigma)}"
            )


TRACE_COLUMNS = ("iter", "nu", "rho", "data_residual", "delta_x", "psnr")


@dataclass(frozen=True)
class TraceRecord:
    """One iteration; ``data_residual`` is ||y - (x_k downsampled) * k|| for the new estimate x_k."""

    k: int
    nu: float
    rho: float
    data_residual: float
    delta_x: float
    psnr: Optional[float] = None


@dataclass
class Trace:
    """Per-iteration records of one solver run."""

    records: List[TraceRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: TraceRecord) -> None:
        self.records.append(record)

    @property
    def has_psnr(self) -> bool:
        return any(r.psnr is not None for r in self.records)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in self.records:
            writer.writerow(
                [r.k, repr(r.nu), repr(r.rho), repr(r.data_residual), repr(r.delta_x), "" if r.psnr is None else repr(r.psnr)]
            )
        return buf.getvalue()

    def write_csv(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_csv())
        return path

    @classmethod
    def from_csv(cls, text: str) -> "Trace":
        """Parse a trace CSV; the psnr column may be missing or empty."""

        reader = csv.DictReader(io.StringIO(text))
        required = set(TRACE_COLUMNS) - {"psnr"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise InvalidArgumentError(f"trace CSV must have columns {','.join(TRACE_COLUMNS)}")
        records: List[TraceRecord] = []
        try:
            for row in reader:
                psnr_raw = (row.get("psnr") or "").strip()
                records.append(
                    TraceRecord(
                        k=int(row["iter"]),
                        nu=float(row["nu"]),
                        rho=float(row["rho"]),
                        data_residual=float(row["data_residual"]),
                        delta_x=float(row["delta_x"]),
                        psnr=float(psnr_raw) if psnr_raw else None,
                    )
                )
        except (TypeError, ValueError) as exc:
            raise InvalidArgumentError(f"malformed trace CSV: {exc}") from exc
        return cls(records)

    @classmethod
    def read_csv(cls, path: str | Path) -> "Trace":
        return cls.from_csv(Path(path).read_text())


@dataclass(frozen=True)
class PriorCapabilities:
    """Scales and noise range (8-bit units) a super-resolver accepts."""

    scales: FrozenSet[int]
    noise_range: Tuple[float, float] = (0.0, 50.0)

    def supports(self, scale: int, noise_level: float) -> bool:
        lo, hi = self.noise_range
        return scale in self.scales and lo <= noise_level <= hi


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    per_channel: Tuple[Tuple[float, float], ...] = ()

    @property
    def identical(self) -> bool:
        return math.isinf(self.psnr)


@dataclass(frozen=True)
class FidelityReport:
    """Data-fidelity part of the MAP energy."""

    value: float
    absorbed_value: float
    residual_norm: float
    sigma_used: float
    sigma_floored: bool
