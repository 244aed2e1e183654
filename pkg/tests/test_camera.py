import numpy as np
import pytest

from nvxy8.camera import (CALIBRATED_PHOTONS, CameraSpec, bin_mean, bin_sum, calibrate_photon_budget,
                          camera_readout, population_sigma, region_readout)

SMALL = dict(pixels_x=64, pixels_y=32, binning=8)


def test_spec_defaults():
    cam = CameraSpec()
    assert cam.binned_shape == (16, 31)
    assert cam.binned_pitch == pytest.approx(1.04e-6)
    assert cam.photon_rate == pytest.approx(CALIBRATED_PHOTONS / 54e-3)
    assert cam.pixels_in_square(2e-6) == 31 * 31
    x, y = cam.raw_coordinates()
    assert x.mean() == pytest.approx(0.0, abs=1e-18) and len(y) == 256
    xb, _ = cam.binned_coordinates()
    assert np.diff(xb) == pytest.approx(np.full(30, 1.04e-6))


@pytest.mark.parametrize("kw", [dict(binning=7), dict(photons_per_frame=0.0), dict(frames=0)])
def test_spec_validation(kw):
    with pytest.raises(ValueError):
        CameraSpec(**kw)


def test_binning_helpers():
    a = np.arange(16.0).reshape(4, 4)
    assert bin_sum(a, 2).tolist() == [[10.0, 18.0], [42.0, 50.0]]
    assert bin_mean(a, 2).tolist() == [[2.5, 4.5], [10.5, 12.5]]


def test_infinite_budget_is_noiseless(rng):
    cam = CameraSpec(photons_per_frame=np.inf, **SMALL)
    p = rng.uniform(0.4, 1.0, (32, 64))
    assert np.array_equal(camera_readout(p, cam, 0.03, rng), bin_mean(p, 8))
    assert np.array_equal(region_readout(p[0], 100, cam, 0.03, rng), p[0])


def test_shape_checked(rng):
    with pytest.raises(ValueError):
        camera_readout(np.ones((4, 4)), CameraSpec(**SMALL), 0.03, rng)


def _spread(cam, p=0.9, n=60, seed=0):
    rng = np.random.default_rng(seed)
    pop = np.full((cam.pixels_y, cam.pixels_x), p)
    draws = np.array([camera_readout(pop, cam, 0.03, rng) for _ in range(n)])
    return draws.mean(), draws.std(ddof=1)


def test_noise_matches_shot_model():
    cam = CameraSpec(photons_per_frame=500.0, frames=10, **SMALL)
    mean, sd = _spread(cam)
    expect = population_sigma(0.9, 500.0 * 10 * 64, 0.03)
    assert mean == pytest.approx(0.9, abs=3 * expect / np.sqrt(60 * 32))
    assert sd == pytest.approx(expect, rel=0.05)


def test_variance_scales_with_frames_and_binning():
    base = _spread(CameraSpec(photons_per_frame=500.0, frames=10, **SMALL))[1]
    quad = _spread(CameraSpec(photons_per_frame=500.0, frames=40, **SMALL), seed=1)[1]
    assert quad == pytest.approx(base / 2, rel=0.06)
    coarse = _spread(CameraSpec(photons_per_frame=500.0, frames=10, pixels_x=64, pixels_y=32, binning=16),
                     n=200, seed=2)[1]
    assert coarse == pytest.approx(base / 2, rel=0.08)


def test_region_readout_statistics(rng):
    cam = CameraSpec(frames=100)
    draws = region_readout(np.full(4000, 0.95), 961, cam, 0.03, rng)
    sigma = population_sigma(0.95, cam.photons_per_frame * 100 * 961, 0.03)
    assert draws.std(ddof=1) == pytest.approx(sigma, rel=0.05)
    assert draws.mean() == pytest.approx(0.95, abs=4 * sigma / np.sqrt(4000))


def test_calibration_inverts_sigma():
    slope, p_off, p_on = 2.8e4, 0.965, 0.959
    n0 = calibrate_photon_budget(50e-9, slope, p_off, p_on, 961, 100, 0.03)
    n_tot = n0 * 961 * 100
    var = population_sigma(p_off, n_tot, 0.03) ** 2 + population_sigma(p_on, n_tot, 0.03) ** 2
    assert np.sqrt(var) / slope == pytest.approx(50e-9, rel=1e-12)
