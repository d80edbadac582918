import json
import math
from pathlib import Path

import numpy as np
import pytest

from pnp_sr import degrade, dpsr, image_core, kernels, metrics, solver
from pnp_sr.image_core import Image
from pnp_sr.logging import RunLogger
from pnp_sr.prior import builtin_bicubic_shrinkage_prior, super_resolve
from pnp_sr.types import DegradationSpec, SolverParams
from pnp_sr.validate import IllConditionedError, InvalidArgumentError


def _gentle_ramp(width: int = 16, height: int = 16) -> Image:
    return Image(0.3 + 0.0005 * np.add.outer(np.arange(height), np.arange(width)))


def _textured_hr(size: int = 64) -> Image:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    pattern = 0.5 + 0.2 * np.sin(2 * math.pi * xx / 16) * np.cos(2 * math.pi * yy / 12)
    pattern[:, size // 2 :] += 0.2
    pattern[size // 3 : 2 * size // 3, size // 4 : size // 2] -= 0.25
    return Image(pattern)


def test_schedule_decays_geometrically_between_endpoints():
    nus = dpsr.schedule_nus(0.0, SolverParams())
    assert len(nus) == 15
    assert nus[0] == 49.0
    assert nus[-1] == 2.55
    ratios = [b / a for a, b in zip(nus, nus[1:])]
    assert all(r < 1 for r in ratios)
    assert max(ratios) == pytest.approx(min(ratios), rel=1e-12)


def test_schedule_floor_follows_noise_level():
    assert dpsr.schedule_nus(7.65, SolverParams())[-1] == 7.65
    assert dpsr.schedule_nus(1.0, SolverParams())[-1] == 2.55


def test_single_iteration_schedule_is_final_level():
    assert dpsr.schedule_nus(10.0, SolverParams(iterations=1)) == [10.0]


def test_schedule_rejects_start_below_end():
    with pytest.raises(InvalidArgumentError):
        dpsr.schedule_nus(10.0, SolverParams(nu_start=5.0))


def test_rho_uses_floored_effective_noise():
    params = SolverParams(lam=0.25)
    assert dpsr.rho_for(10.0, 0.0, params) == pytest.approx(1e-4 / 100.0)
    assert dpsr.rho_for(10.0, 8.0, params) == pytest.approx(16.0 / 100.0)


def test_run_dpsr_produces_full_trace():
    y = _gentle_ramp()
    x, trace = dpsr.run_dpsr(y, kernels.gaussian_kernel(5, 1.0), 2, 0.0, SolverParams(), builtin_bicubic_shrinkage_prior())
    assert (x.width, x.height) == (32, 32)
    assert len(trace) == 15
    assert [r.k for r in trace.records] == list(range(1, 16))
    assert not trace.has_psnr
    assert all(r.rho > 0 for r in trace.records)


def test_data_residual_measures_the_returned_estimate():
    y = _gentle_ramp()
    k = kernels.gaussian_kernel(5, 1.0)
    x, trace = dpsr.run_dpsr(y, k, 2, 2.55, SolverParams(iterations=2), builtin_bicubic_shrinkage_prior())
    x_down = image_core.resize_bicubic(x, y.width, y.height)
    expected = solver.blur_residual(x_down, y, kernels.psf_to_otf(k, y.width, y.height))
    assert trace.records[-1].data_residual == pytest.approx(expected, rel=1e-12)


def test_run_dpsr_reports_psnr_against_ground_truth():
    hr = _textured_hr(32)
    k = kernels.gaussian_kernel(5, 1.0)
    y = degrade.degrade(hr, DegradationSpec(k, 2, 0.0))
    x, trace = dpsr.run_dpsr(y, k, 2, 0.0, SolverParams(iterations=3), builtin_bicubic_shrinkage_prior(), hr)
    assert trace.has_psnr
    assert trace.records[-1].psnr == pytest.approx(metrics.psnr(x, hr, border_crop=2))


def test_single_iteration_with_delta_kernel_matches_one_prior_call():
    y = _gentle_ramp()
    p = builtin_bicubic_shrinkage_prior()
    params = SolverParams(iterations=1)
    x, trace = dpsr.run_dpsr(y, kernels.delta_kernel(), 2, 0.0, params, p)
    direct = super_resolve(p, y, 2, params.nu_end(0.0))
    assert len(trace) == 1
    assert np.allclose(x.data, direct.data, atol=1e-6)


def test_ground_truth_size_is_checked():
    with pytest.raises(InvalidArgumentError):
        dpsr.run_dpsr(
            _gentle_ramp(),
            kernels.delta_kernel(),
            2,
            0.0,
            SolverParams(iterations=1),
            builtin_bicubic_shrinkage_prior(),
            _gentle_ramp(),
        )


def test_ill_conditioned_step_reports_iteration(monkeypatch: pytest.MonkeyPatch):
    calls = {"n": 0}
    real = solver.data_step

    def flaky(y, otf, x_down, rho):
        calls["n"] += 1
        if calls["n"] == 2:
            raise IllConditionedError("singular spectrum")
        return real(y, otf, x_down, rho)

    monkeypatch.setattr(solver, "data_step", flaky)
    with pytest.raises(IllConditionedError) as info:
        dpsr.run_dpsr(_gentle_ramp(), kernels.delta_kernel(), 2, 0.0, SolverParams(iterations=3), builtin_bicubic_shrinkage_prior())
    assert info.value.iteration == 2
    assert str(info.value).startswith("iteration 2:")


def test_run_dpsr_logs_events(tmp_path: Path):
    logger = RunLogger(base_dir=tmp_path, run_id="sr", stream=False)
    dpsr.run_dpsr(
        _gentle_ramp(),
        kernels.delta_kernel(),
        2,
        0.0,
        SolverParams(iterations=2),
        builtin_bicubic_shrinkage_prior(),
        logger=logger,
    )
    kinds = [json.loads(line)["kind"] for line in (tmp_path / "sr" / "events.ndjson").read_text().splitlines()]
    assert kinds == ["dpsr.start", "dpsr.iteration", "dpsr.iteration", "dpsr.finish"]


def test_edge_taper_option_runs():
    x, trace = dpsr.run_dpsr(
        _gentle_ramp(),
        kernels.gaussian_kernel(5, 1.0),
        2,
        2.55,
        SolverParams(iterations=2, edge_taper=True),
        builtin_bicubic_shrinkage_prior(),
    )
    assert (x.width, x.height) == (32, 32)
    assert len(trace) == 2


def test_deblur_then_sr_output_size():
    out = dpsr.deblur_then_sr(_gentle_ramp(), kernels.gaussian_kernel(5, 1.0), 3, 2.55, SolverParams(), builtin_bicubic_shrinkage_prior())
    assert (out.width, out.height) == (48, 48)


def test_objective_value_vanishes_for_consistent_estimate():
    hr = _textured_hr(32)
    y = degrade.degrade(hr, DegradationSpec(kernels.delta_kernel(), 2, 0.0))
    report = dpsr.objective_value(hr, y, kernels.delta_kernel(), 2, 0.0, 1.0 / 3.0)
    assert report.value == pytest.approx(0.0, abs=1e-18)
    assert report.sigma_floored
    assert report.sigma_used == 1e-2


def test_objective_value_scales_with_noise_and_lambda():
    hr = _textured_hr(32)
    y = image_core.resize_bicubic(hr, 16, 16) + 0.01
    report = dpsr.objective_value(hr, y, kernels.delta_kernel(), 2, 2.55, 0.5)
    assert report.residual_norm == pytest.approx(0.01 * 16)
    assert report.value == pytest.approx((0.16**2) / (2 * (2.55 / 255.0) ** 2))
    assert report.absorbed_value == pytest.approx(report.value / 0.5)
    assert not report.sigma_floored



def _synthetic_hr(seed: int, size: int = 128) -> Image:
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    px, py = rng.uniform(10.0, 20.0, size=2)
    phase = rng.uniform(0.0, 2 * math.pi)
    pattern = 0.45 + 0.15 * np.sin(2 * math.pi * xx / px + phase) * np.cos(2 * math.pi * yy / py)
    for _ in range(4):
        top, left = rng.integers(0, size - 32, size=2)
        h, w = rng.integers(16, 32, size=2)
        pattern[top : top + h, left : left + w] += rng.uniform(-0.25, 0.25)
    return Image(pattern)


SUITE_KERNELS = {
    "gaussian": kernels.gaussian_kernel(15, 1.6),
    "disk": kernels.disk_kernel(3.0),
    "motion": kernels.motion_kernel(7, 15),
}


@pytest.fixture(scope="module")
def restoration_suite():
    """Seeded 128x128 cases over x2/x4, one kernel per family and sigma in {0, 2.55}."""

    cases = []
    prior = builtin_bicubic_shrinkage_prior()
    for scale in (2, 4):
        for family, kernel in SUITE_KERNELS.items():
            for sigma in (0.0, 2.55):
                seed = len(cases)
                hr = _synthetic_hr(seed)
                y = degrade.degrade(hr, DegradationSpec(kernel, scale, sigma, seed))
                x, trace = dpsr.run_dpsr(y, kernel, scale, sigma, SolverParams(), prior, hr)
                baseline = image_core.resize_bicubic(y, hr.width, hr.height)
                cases.append(
                    {
                        "family": family,
                        "scale": scale,
                        "sigma": sigma,
                        "lr_pixels": y.width * y.height * y.channels,
                        "gain": metrics.psnr(x, hr, border_crop=scale) - metrics.psnr(baseline, hr, border_crop=scale),
                        "trace": trace,
                    }
                )
    return cases


def _residual_settles(trace, sigma: float, lr_pixels: int) -> bool:
    # rises below a tenth of the noise norm are not counted against convergence
    slack = 0.1 * (sigma / 255.0) * math.sqrt(lr_pixels)
    residuals = [r.data_residual for r in trace.records[2:]]
    return all(b <= a * (1 + 1e-9) + slack for a, b in zip(residuals, residuals[1:]))


@pytest.mark.slow
def test_restoration_beats_bicubic_upsampling(restoration_suite):
    gains = [case["gain"] for case in restoration_suite]
    motion = [case["gain"] for case in restoration_suite if case["family"] == "motion"]
    assert sum(gains) / len(gains) >= 1.0
    assert sum(motion) / len(motion) >= 2.0


@pytest.mark.slow
def test_final_iterate_improves_on_the_first(restoration_suite):
    for case in restoration_suite:
        records = case["trace"].records
        assert len(records) == 15
        assert records[-1].psnr >= records[0].psnr, (case["family"], case["scale"], case["sigma"])


@pytest.mark.slow
def test_data_residual_settles_from_the_third_iteration(restoration_suite):
    noiseless = [c for c in restoration_suite if c["sigma"] == 0.0]
    assert all(_residual_settles(c["trace"], 0.0, c["lr_pixels"]) for c in noiseless)
    settled = sum(_residual_settles(c["trace"], c["sigma"], c["lr_pixels"]) for c in restoration_suite)
    assert settled >= 0.9 * len(restoration_suite)
