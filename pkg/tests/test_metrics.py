import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pnp_sr import metrics
from pnp_sr.image_core import Image
from pnp_sr.validate import InvalidArgumentError


def _noise(seed: int, shape=(1, 24, 24)) -> Image:
    return Image(np.random.default_rng(seed).random(shape))


def test_identical_images_give_sentinel():
    a = _noise(0)
    assert metrics.psnr(a, a) == metrics.IDENTICAL
    assert math.isinf(metrics.psnr(a, a))


def test_constant_offset_gives_twenty_db():
    a = _noise(1)
    assert metrics.psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)


def test_border_crop_removes_border_differences():
    a = _noise(2)
    data = np.array(a.data)
    data[:, :2, :] += 0.3
    data[:, :, -2:] -= 0.3
    b = Image(data)
    assert metrics.psnr(a, b) < 30
    assert metrics.psnr(a, b, border_crop=4) == metrics.IDENTICAL


def test_psnr_rejects_shape_mismatch():
    with pytest.raises(InvalidArgumentError):
        metrics.psnr(_noise(3), _noise(3, shape=(1, 24, 23)))


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-2.0, max_value=2.0, allow_nan=False), st.integers(min_value=0, max_value=10_000))
def test_psnr_is_symmetric_and_translation_consistent(offset, seed):
    a = _noise(seed)
    b = _noise(seed + 1)
    base = metrics.psnr(a, b)
    assert metrics.psnr(b, a) == base
    assert metrics.psnr(a + offset, b + offset) == pytest.approx(base, abs=1e-9)


def test_psnr_per_channel_lists_every_channel():
    a = _noise(4, shape=(3, 16, 16))
    data = np.array(a.data)
    data[1] += 0.1
    values = metrics.psnr_per_channel(a, Image(data))
    assert values[0] == metrics.IDENTICAL
    assert values[1] == pytest.approx(20.0, abs=1e-9)
    assert values[2] == metrics.IDENTICAL


def test_ssim_of_identical_images_is_one():
    a = _noise(5, shape=(3, 20, 20))
    assert metrics.ssim(a, a) == 1.0


def test_ssim_is_below_one_for_different_images():
    a = _noise(6)
    b = a + Image(0.05 * np.random.default_rng(7).standard_normal(a.data.shape))
    value = metrics.ssim(a, b)
    assert 0.0 < value < 1.0
    assert metrics.ssim(b, a) == pytest.approx(value, abs=1e-15)


def test_ssim_needs_a_full_window():
    with pytest.raises(InvalidArgumentError):
        metrics.ssim(_noise(8, shape=(1, 10, 30)), _noise(9, shape=(1, 10, 30)))


def test_ssim_averages_channels():
    a = _noise(10, shape=(3, 16, 16))
    b = _noise(11, shape=(3, 16, 16))
    per = metrics.ssim_per_channel(a, b)
    assert metrics.ssim(a, b) == pytest.approx(sum(per) / 3)


def test_evaluate_bundles_metrics():
    a = _noise(12, shape=(3, 20, 20))
    b = a + 0.1
    report = metrics.evaluate(a, b, border_crop=2)
    assert report.psnr == pytest.approx(20.0, abs=1e-9)
    assert len(report.per_channel) == 3
    assert not report.identical
    assert metrics.evaluate(a, a).identical


@pytest.mark.parametrize("a_value,b_value", [(0.2, 0.7), (0.5, 0.5), (0.0, 1.0)])
def test_ssim_of_two_constants_has_closed_form(a_value, b_value):
    a = Image.constant(16, 16, a_value)
    b = Image.constant(16, 16, b_value)
    c1 = (metrics.SSIM_K1 * metrics.DYNAMIC_RANGE) ** 2
    expected = (2 * a_value * b_value + c1) / (a_value**2 + b_value**2 + c1)
    assert metrics.ssim(a, b) == pytest.approx(expected, rel=1e-9)


def test_ssim_is_symmetric_on_random_pairs():
    for seed in range(20):
        a = _noise(100 + seed, shape=(1, 16, 16))
        b = _noise(200 + seed, shape=(1, 16, 16))
        assert abs(metrics.ssim(a, b) - metrics.ssim(b, a)) <= 1e-12
