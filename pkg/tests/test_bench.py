import csv
import json
from pathlib import Path

import numpy as np
import pytest

from pnp_sr import bench, config as config_module, image_core, kernels, metrics
from pnp_sr.image_core import Image
from pnp_sr.logging import RunLogger
from pnp_sr.types import PriorCapabilities
from pnp_sr.validate import ExternalPriorError, InvalidArgumentError


def _dataset(root: Path, count: int = 2, size: int = 24) -> Path:
    root.mkdir(parents=True, exist_ok=True)
    yy, xx = np.mgrid[0:size, 0:size]
    for i in range(count):
        data = 0.5 + 0.3 * np.sin((xx + 3 * i) / 3.0) * np.cos(yy / 4.0)
        image_core.write_png(Image(data), root / f"img{i}.png")
    return root


def _config(dataset: Path, **bench_overrides) -> config_module.Config:
    bench_raw = {
        "dataset": str(dataset),
        "scales": [2],
        "kernels": [{"family": "gaussian", "id": "g1", "size": 5, "sigma": 1.0}],
        "sigmas": [0.0],
        "seed": 3,
    }
    bench_raw.update(bench_overrides)
    return config_module.Config.from_dict({"solver": {"iterations": 3}, "bench": bench_raw})


def _read(path: Path):
    with path.open() as fh:
        return list(csv.DictReader(fh))


def test_single_image_single_cell_gives_two_method_rows(tmp_path: Path):
    cfg = _config(_dataset(tmp_path / "data", count=1))
    result = bench.run_bench(cfg, output_dir=tmp_path / "out")
    rows = _read(result.cells_path)
    assert [r["method"] for r in rows] == ["dpsr", "bicubic"]
    assert all(r["status"] == "ok" for r in rows)
    assert list(rows[0]) == list(bench.CELL_COLUMNS)


def test_summary_is_mean_over_images(tmp_path: Path):
    cfg = _config(_dataset(tmp_path / "data", count=3), sigmas=[0.0, 2.55])
    result = bench.run_bench(cfg, output_dir=tmp_path / "out")
    summary = _read(result.summary_path)
    assert list(summary[0]) == list(bench.SUMMARY_COLUMNS)
    assert len(summary) == 4
    for row in summary:
        members = [
            r
            for r in result.rows
            if r["method"] == row["method"] and r["sigma"] == float(row["sigma"]) and r["kernel_id"] == row["kernel_id"]
        ]
        assert len(members) == 3
        assert float(row["psnr"]) == pytest.approx(sum(m["psnr"] for m in members) / 3, abs=1e-9)
        assert float(row["ssim"]) == pytest.approx(sum(m["ssim"] for m in members) / 3, abs=1e-9)


def test_parallel_run_writes_identical_rows(tmp_path: Path):
    data = _dataset(tmp_path / "data", count=2)
    cfg = _config(data, kernels=[{"family": "gaussian", "id": "g1", "size": 5, "sigma": 1.0}, {"family": "disk", "id": "d1", "radius": 1.5}])
    serial = bench.run_bench(cfg, jobs=1, output_dir=tmp_path / "serial")
    parallel = bench.run_bench(cfg, jobs=4, output_dir=tmp_path / "parallel")
    assert serial.cells_path.read_bytes() == parallel.cells_path.read_bytes()
    assert [(r["image"], r["kernel_id"]) for r in _read(serial.cells_path)][::2] == [
        ("img0.png", "g1"),
        ("img0.png", "d1"),
        ("img1.png", "g1"),
        ("img1.png", "d1"),
    ]


class _BrokenPrior:
    capabilities = PriorCapabilities(frozenset({2}))

    def super_resolve(self, z, scale, noise_level):
        raise ExternalPriorError("external prior failed", returncode=1, stderr="no GPU")


def test_failed_cells_are_marked_and_run_continues(tmp_path: Path):
    cfg = _config(_dataset(tmp_path / "data", count=2))
    logger = RunLogger(base_dir=tmp_path / "runs", run_id="bench", stream=False)
    result = bench.run_bench(cfg, output_dir=tmp_path / "out", prior=_BrokenPrior(), logger=logger)
    rows = _read(result.cells_path)
    assert [r["status"] for r in rows] == ["failed", "ok", "failed", "ok"]
    assert rows[0]["psnr"] == ""
    assert result.failures == 2
    kinds = [json.loads(line)["kind"] for line in (tmp_path / "runs" / "bench" / "events.ndjson").read_text().splitlines()]
    assert kinds.count("bench.cell_failed") == 2
    assert kinds[0] == "bench.start" and kinds[-1] == "bench.finish"


class _CrashingPrior:
    capabilities = PriorCapabilities(frozenset({2}))

    def super_resolve(self, z, scale, noise_level):
        raise ValueError("shape mismatch inside the model")


def test_unexpected_prior_errors_fail_only_their_cells(tmp_path: Path):
    cfg = _config(_dataset(tmp_path / "data", count=2))
    logger = RunLogger(base_dir=tmp_path / "runs", run_id="bench", stream=False)
    result = bench.run_bench(cfg, output_dir=tmp_path / "out", prior=_CrashingPrior(), logger=logger)
    assert [r["status"] for r in result.rows] == ["failed", "ok", "failed", "ok"]
    events = [json.loads(line) for line in (tmp_path / "runs" / "bench" / "events.ndjson").read_text().splitlines()]
    failed = [e for e in events if e["kind"] == "bench.cell_failed"]
    assert len(failed) == 2
    assert all(e["error_type"] == "ValueError" for e in failed)
    assert events[-1]["kind"] == "bench.finish"


def test_cell_scores_crop_the_border_for_both_metrics(tmp_path: Path, monkeypatch: pytest.MonkeyPatch):
    cfg = _config(_dataset(tmp_path / "data", count=1), methods=["bicubic"])
    yy, xx = np.mgrid[0:24, 0:24]
    hr = Image(0.5 + 0.3 * np.sin(xx / 3.0) * np.cos(yy / 4.0))
    damaged = hr.data.copy()
    damaged[:, :2, :] = 0.0
    damaged[:, :, -2:] = 1.0
    monkeypatch.setattr(bench, "_restore", lambda *args: Image(damaged))
    cell = bench.Cell(0, 0, "img0.png", 2, "g1", 0.0)
    [row] = bench.run_cell(cell, hr, kernels.gaussian_kernel(5, 1.0), cfg, _BrokenPrior())
    assert row["status"] == "ok"
    assert row["psnr"] == float("inf")
    assert row["ssim"] == pytest.approx(1.0, abs=1e-12)
    uncropped = metrics.evaluate(Image(damaged), hr, border_crop=0)
    assert uncropped.ssim < 0.99


def test_degradation_failure_marks_every_method(tmp_path: Path):
    cfg = _config(_dataset(tmp_path / "data", count=1, size=12), kernels=[{"family": "gaussian", "id": "big", "size": 9, "sigma": 2.0}])
    result = bench.run_bench(cfg, output_dir=tmp_path / "out")
    assert [r["status"] for r in result.rows] == ["failed", "failed"]
    assert result.summary == []


def test_optional_deblur_method(tmp_path: Path):
    cfg = _config(_dataset(tmp_path / "data", count=1), methods=["dpsr", "bicubic", "deblur_sr"])
    result = bench.run_bench(cfg, output_dir=tmp_path / "out")
    assert [r["method"] for r in result.rows] == ["dpsr", "bicubic", "deblur_sr"]
    assert all(r["status"] == "ok" for r in result.rows)


def test_expand_kernel_specs_suite_filter():
    expanded = bench.expand_kernel_specs([{"family": "suite", "families": ["d"], "seed": 1}])
    assert [kid for kid, _ in expanded] == [f"d{i:02d}" for i in range(1, 9)]


def test_expand_kernel_specs_default_ids_and_duplicates():
    expanded = bench.expand_kernel_specs([{"family": "delta"}, {"family": "disk", "radius": 2.0}])
    assert [kid for kid, _ in expanded] == ["delta01", "disk02"]
    with pytest.raises(InvalidArgumentError):
        bench.expand_kernel_specs([{"family": "delta", "id": "k"}, {"family": "delta", "id": "k"}])


def test_run_bench_validates_inputs(tmp_path: Path):
    with pytest.raises(InvalidArgumentError):
        bench.run_bench(_config(tmp_path / "missing"))
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(InvalidArgumentError):
        bench.run_bench(_config(empty))
    data = _dataset(tmp_path / "data", count=1)
    with pytest.raises(InvalidArgumentError):
        bench.run_bench(_config(data, methods=["dpsr", "srcnn"]))
    with pytest.raises(InvalidArgumentError):
        bench.run_bench(_config(data, kernels=[]))


def test_plan_cells_order():
    cells = bench.plan_cells(["a.png", "b.png"], [2, 3], ["k1"], [0.0, 2.55])
    assert len(cells) == 8
    assert [c.index for c in cells] == list(range(8))
    assert (cells[0].image, cells[0].scale, cells[0].sigma) == ("a.png", 2, 0.0)
    assert (cells[-1].image, cells[-1].scale, cells[-1].sigma) == ("b.png", 3, 2.55)
    assert cells[-1].image_index == 1


@pytest.mark.slow
def test_motion_cells_favor_restoration(tmp_path: Path):
    data = _dataset(tmp_path / "data", count=2, size=64)
    cfg = config_module.Config.from_dict(
        {
            "bench": {
                "dataset": str(data),
                "scales": [2],
                "kernels": [{"family": "motion", "id": "m1", "seed": 7, "size": 15}],
                "sigmas": [0.0],
            }
        }
    )
    result = bench.run_bench(cfg, output_dir=tmp_path / "out")
    means = {row["method"]: row["psnr"] for row in result.summary}
    assert means["dpsr"] > means["bicubic"]
