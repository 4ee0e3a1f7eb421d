import numpy as np
import pytest

from src.optics.fields import BeamSpec, BiprismSpec, Grid, SpectralDensity
from src.optics.patterns import IntensityPattern
from src.simulation.emitter import EmitterModel
from src.simulation.iccd import CameraSpec


@pytest.fixture
def small_grid():
    # 10.24 mm window: wide enough for the default beam and z up to ~120 mm
    return Grid(pitch_um=2.5, n_points=4096)


@pytest.fixture
def beam():
    return BeamSpec()


@pytest.fixture
def prism():
    return BiprismSpec()


@pytest.fixture
def short_spectrum():
    return SpectralDensity.gaussian(670.0, 80.0, n_samples=9, span_sigma=2.0)


@pytest.fixture
def emitter():
    return EmitterModel(mean_detected_per_pulse=0.1, rng_seed=11)


@pytest.fixture
def fringe_pattern():
    """Cosine fringes under a broad envelope, 4 mm wide at 2 um pitch"""
    x = np.arange(-2000, 2001, 2.0)
    intensity = np.exp(-((x / 1500.0) ** 2)) * (1.0 + 0.6 * np.cos(2 * np.pi * x / 200.0))
    return IntensityPattern(pitch_um=2.0, intensity=intensity, x0_um=float(x[0]))


@pytest.fixture
def small_camera():
    return CameraSpec(pixel_pitch_um=25.0, n_cols=64, n_rows=16, photons_per_snapshot_mean=13.6,
                      rng_seed=5, vertical_fwhm_um=300.0)
