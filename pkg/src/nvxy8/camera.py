"""
Shot-noise model of the wide-field sCMOS readout.

A raw pixel showing bright-state population p collects Poisson counts with
mean N0 * (1 - C * (1 - p)) per frame, N0 being the photon budget per raw
pixel per frame and C the readout contrast.  Frames are summed before the
draw (a sum of independent Poisson variables is Poisson with the summed mean),
then pixels are binned by summation and the counts are mapped back to a
population estimate.
"""

from dataclasses import dataclass

import numpy as np

# Photons per raw pixel per 54 ms frame.  Calibrated with calibrate_photon_budget
# so that ten XY8-16 sweeps (0.44 uT, 19.23 MHz, 100 frames, 2 um x 2 um probe,
# contrast 0.03) scatter by 50 nT at the tau = 26.0 ns peak.
CALIBRATED_PHOTONS = 11476.0


@dataclass(frozen=True)
class CameraSpec:
    pixels_x: int = 496
    pixels_y: int = 256
    pixel_pitch: float = 65e-9
    binning: int = 16
    exposure: float = 54e-3
    frames: int = 100
    photons_per_frame: float = CALIBRATED_PHOTONS

    def __post_init__(self):
        if self.binning < 1 or self.pixels_x % self.binning or self.pixels_y % self.binning:
            raise ValueError("binning factor must divide the sensor dimensions")
        if not self.photons_per_frame > 0:
            raise ValueError("photon budget must be positive")
        if self.frames < 1 or not self.exposure > 0 or not self.pixel_pitch > 0:
            raise ValueError("frames, exposure and pixel pitch must be positive")

    @property
    def photon_rate(self):
        """Photons per raw pixel per second."""
        return self.photons_per_frame / self.exposure

    @property
    def binned_pitch(self):
        return self.pixel_pitch * self.binning

    @property
    def binned_shape(self):
        return self.pixels_y // self.binning, self.pixels_x // self.binning

    def raw_coordinates(self):
        """Raw pixel-center coordinates (x, y), centered on the sensor middle."""
        x = (np.arange(self.pixels_x) - (self.pixels_x - 1) / 2) * self.pixel_pitch
        y = (np.arange(self.pixels_y) - (self.pixels_y - 1) / 2) * self.pixel_pitch
        return x, y

    def binned_coordinates(self):
        x, y = self.raw_coordinates()
        b = self.binning
        return x.reshape(-1, b).mean(axis=1), y.reshape(-1, b).mean(axis=1)

    def pixels_in_square(self, side):
        n = int(round(side / self.pixel_pitch))
        return n * n


def bin_sum(a, b):
    ny, nx = a.shape
    return a.reshape(ny // b, b, nx // b, b).sum(axis=(1, 3))


def bin_mean(a, b):
    return bin_sum(a, b) / (b * b)


def camera_readout(population, camera, contrast, rng):
    """Noisy binned estimate of a raw-pixel population map.

    ``population`` has shape (pixels_y, pixels_x).  An infinite photon budget
    returns the noiseless binned mean.
    """
    p = np.asarray(population, dtype=float)
    if p.shape != (camera.pixels_y, camera.pixels_x):
        raise ValueError("population map does not match the sensor shape")
    b = camera.binning
    if np.isinf(camera.photons_per_frame):
        return bin_mean(p, b)
    n0 = camera.photons_per_frame * camera.frames
    counts = rng.poisson(n0 * (1.0 - contrast * (1.0 - p)))
    total = bin_sum(counts.astype(float), b) / (n0 * b * b)
    return 1.0 - (1.0 - total) / contrast


def region_readout(population, n_pixels, camera, contrast, rng):
    """Population estimate for ``n_pixels`` raw pixels sharing one population.

    ``population`` may be an array (one draw per element).
    """
    p = np.asarray(population, dtype=float)
    if np.isinf(camera.photons_per_frame):
        return p.copy()
    n0 = camera.photons_per_frame * camera.frames * n_pixels
    counts = rng.poisson(n0 * (1.0 - contrast * (1.0 - p)))
    return 1.0 - (1.0 - counts / n0) / contrast


def population_sigma(population, n_photons, contrast):
    """Shot-noise standard deviation of a population estimate from ``n_photons`` budget."""
    p = np.asarray(population, dtype=float)
    return np.sqrt(1.0 - contrast * (1.0 - p)) / (contrast * np.sqrt(n_photons))


def calibrate_photon_budget(target_sigma, signal_slope, p_off, p_on, n_pixels, frames, contrast):
    """Photons per raw pixel per frame giving field noise ``target_sigma``.

    ``signal_slope`` is d(delta)/dB at the operating point; the signal
    difference combines two independent population estimates.
    """
    var_unit = (1.0 - contrast * (1.0 - p_off) + 1.0 - contrast * (1.0 - p_on)) / contrast ** 2
    n_total = var_unit / (target_sigma * signal_slope) ** 2
    return n_total / (n_pixels * frames)
