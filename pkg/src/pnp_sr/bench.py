"""Benchmark harness: degrade every (image, scale, kernel, sigma) cell and score each method."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from . import config as config_module, degrade, dpsr, image_core, kernels, metrics
from .image_core import Image
from .kernels import Kernel
from .logging import RunLogger
from .prior import SuperResolver, prior_from_config
from .types import DegradationSpec
from .validate import InvalidArgumentError

CELL_COLUMNS = ("image", "scale", "kernel_id", "sigma", "method", "psnr", "ssim", "status")
SUMMARY_COLUMNS = ("scale", "kernel_id", "sigma", "method", "psnr", "ssim")
METHODS = ("dpsr", "bicubic", "deblur_sr")


@dataclass(frozen=True)
class Cell:
    index: int
    image_index: int
    image: str
    scale: int
    kernel_id: str
    sigma: float


@dataclass
class BenchResult:
    cells_path: Path
    summary_path: Path
    rows: List[Dict[str, Any]] = field(default_factory=list)
    summary: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(1 for row in self.rows if row["status"] != "ok")


def expand_kernel_specs(specs: Iterable[Mapping[str, Any]]) -> List[Tuple[str, Kernel]]:
    """Resolve config kernel entries; ``family: suite`` expands to the whole three-family suite."""

    resolved: List[Tuple[str, Kernel]] = []
    for i, spec in enumerate(specs, start=1):
        family = str(spec.get("family", "")).lower()
        if family == "suite":
            prefixes = tuple(spec.get("families", ("g", "m", "d")))
            for kid, kernel in kernels.kernel_suite(int(spec.get("seed", 0))).items():
                if kid.startswith(prefixes):
                    resolved.append((kid, kernel))
            continue
        resolved.append((str(spec.get("id", f"{family}{i:02d}")), kernels.kernel_from_spec(spec)))
    ids = [kid for kid, _ in resolved]
    if len(set(ids)) != len(ids):
        raise InvalidArgumentError(f"duplicate kernel ids in bench config: {ids}")
    return resolved


def list_dataset(dataset: str | None) -> List[Path]:
    if not dataset:
        raise InvalidArgumentError("bench config needs a dataset directory")
    root = Path(dataset)
    if not root.is_dir():
        raise InvalidArgumentError(f"dataset directory {root} does not exist")
    images = sorted(p for p in root.iterdir() if p.suffix.lower() == ".png")
    if not images:
        raise InvalidArgumentError(f"dataset directory {root} holds no PNG images")
    return images


def plan_cells(images: Sequence[str], scales: Sequence[int], kernel_ids: Sequence[str], sigmas: Sequence[float]) -> List[Cell]:
    cells: List[Cell] = []
    for image_index, name in enumerate(images):
        for scale in scales:
            for kid in kernel_ids:
                for sigma in sigmas:
                    cells.append(Cell(len(cells), image_index, name, int(scale), kid, float(sigma)))
    return cells


def _restore(method: str, y: Image, kernel: Kernel, cell: Cell, cfg: config_module.Config, prior: SuperResolver) -> Image:
    params = cfg.solver.to_params()
    if method == "dpsr":
        x, _ = dpsr.run_dpsr(y, kernel, cell.scale, cell.sigma, params, prior)
        return x
    if method == "bicubic":
        return image_core.resize_bicubic(y, cell.scale * y.width, cell.scale * y.height)
    if method == "deblur_sr":
        return dpsr.deblur_then_sr(y, kernel, cell.scale, cell.sigma, params, prior)
    raise InvalidArgumentError(f"unknown bench method {method!r}")


def run_cell(
    cell: Cell,
    hr: Image,
    kernel: Kernel,
    cfg: config_module.Config,
    prior: SuperResolver,
    *,
    logger: Optional[RunLogger] = None,
) -> List[Dict[str, Any]]:
    """Degrade one HR image and score every configured method; failures become rows too."""

    base = {"image": cell.image, "scale": cell.scale, "kernel_id": cell.kernel_id, "sigma": cell.sigma}
    crop = cfg.metrics.border_crop if cfg.metrics.border_crop is not None else cell.scale
    try:
        hr = image_core.crop_to_multiple(hr, cell.scale)
        seed = degrade.derive_seed(cfg.bench.seed, cell.image_index)
        y = degrade.degrade(hr, DegradationSpec(kernel, cell.scale, cell.sigma, seed))
    except Exception as exc:  # one bad cell must not stop the grid
        if logger is not None:
            logger.log_event(
                "bench.cell_failed", cell=cell.index, stage="degrade", error_type=type(exc).__name__, error=str(exc)
            )
        return [dict(base, method=m, psnr=None, ssim=None, status="failed") for m in cfg.bench.methods]

    rows = []
    for method in cfg.bench.methods:
        try:
            x = _restore(method, y, kernel, cell, cfg, prior)
            report = metrics.evaluate(x, hr, border_crop=crop)
            row = dict(base, method=method, psnr=report.psnr, ssim=report.ssim, status="ok")
        except Exception as exc:
            if logger is not None:
                logger.log_event(
                    "bench.cell_failed", cell=cell.index, method=method, error_type=type(exc).__name__, error=str(exc)
                )
            row = dict(base, method=method, psnr=None, ssim=None, status="failed")
        rows.append(row)
        if logger is not None:
            logger.log_event("bench.cell", cell=cell.index, method=method, psnr=row["psnr"], status=row["status"])
    return rows


def _format_row(columns: Sequence[str], row: Mapping[str, Any]) -> str:
    buf = io.StringIO()
    values = []
    for col in columns:
        value = row.get(col)
        values.append("" if value is None else repr(value) if isinstance(value, float) else value)
    csv.writer(buf, lineterminator="\n").writerow(values)
    return buf.getvalue()


def summarize(rows: Iterable[Mapping[str, Any]]) -> List[Dict[str, Any]]:
    """Arithmetic mean of psnr/ssim over images for each (scale, kernel, sigma, method)."""

    groups: Dict[Tuple[int, str, float, str], List[Mapping[str, Any]]] = {}
    for row in rows:
        if row["status"] != "ok":
            continue
        key = (row["scale"], row["kernel_id"], row["sigma"], row["method"])
        groups.setdefault(key, []).append(row)
    summary = []
    for (scale, kid, sigma, method), members in groups.items():
        summary.append(
            {
                "scale": scale,
                "kernel_id": kid,
                "sigma": sigma,
                "method": method,
                "psnr": sum(r["psnr"] for r in members) / len(members),
                "ssim": sum(r["ssim"] for r in members) / len(members),
            }
        )
    return summary


def run_bench(
    cfg: config_module.Config,
    *,
    jobs: int | None = None,
    output_dir: str | Path | None = None,
    logger: Optional[RunLogger] = None,
    prior: Optional[SuperResolver] = None,
) -> BenchResult:
    bench_cfg = cfg.bench
    for method in bench_cfg.methods:
        if method not in METHODS:
            raise InvalidArgumentError(f"unknown bench method {method!r}; choose from {METHODS}")
    images = list_dataset(bench_cfg.dataset)
    kernel_list = expand_kernel_specs(bench_cfg.kernels)
    if not bench_cfg.scales or not kernel_list or not bench_cfg.sigmas:
        raise InvalidArgumentError("bench config needs at least one scale, kernel and noise level")
    kernel_map = dict(kernel_list)
    hr_images = {p.name: image_core.read_png(p) for p in images}
    cells = plan_cells([p.name for p in images], bench_cfg.scales, [kid for kid, _ in kernel_list], bench_cfg.sigmas)
    prior = prior or prior_from_config(cfg.prior)

    out_dir = Path(output_dir or bench_cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    cells_path = out_dir / "cells.csv"
    summary_path = out_dir / "summary.csv"
    workers = max(1, jobs if jobs is not None else bench_cfg.jobs)
    if logger is not None:
        logger.log_event("bench.start", cells=len(cells), images=len(images), jobs=workers)

    def work(cell: Cell) -> List[Dict[str, Any]]:
        return run_cell(cell, hr_images[cell.image], kernel_map[cell.kernel_id], cfg, prior, logger=logger)

    result = BenchResult(cells_path=cells_path, summary_path=summary_path)
    with cells_path.open("w", encoding="utf-8") as fh:
        fh.write(_format_row(CELL_COLUMNS, {c: c for c in CELL_COLUMNS}))
        fh.flush()
        # map yields in submission order, so rows land sorted whatever finishes first
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for rows in pool.map(work, cells):
                for row in rows:
                    fh.write(_format_row(CELL_COLUMNS, row))
                    fh.flush()
                result.rows.extend(rows)

    result.summary = summarize(result.rows)
    with summary_path.open("w", encoding="utf-8") as fh:
        fh.write(_format_row(SUMMARY_COLUMNS, {c: c for c in SUMMARY_COLUMNS}))
        for row in result.summary:
            fh.write(_format_row(SUMMARY_COLUMNS, row))
    if logger is not None:
        logger.log_event("bench.finish", rows=len(result.rows), failures=result.failures)
    return result
