import math

import numpy as np
import pytest

from src.optics.fields import BiprismSpec, SpectralDensity, gaussian_input
from src.optics.patterns import (
    IntensityPattern,
    PatternModel,
    extruded_image,
    fringe_metrics,
    monochromatic_pattern,
    polychromatic_pattern,
    spectral_width_for_visibility,
)
from src.optics.propagation import propagate
from src.utils.errors import NoFringeError

Z_MM = 50.0


def test_metrics_of_synthetic_cosine_fringes(fringe_pattern):
    metrics = fringe_metrics(fringe_pattern)
    assert metrics.fringe_spacing_um == pytest.approx(200.0, abs=2.0)
    assert metrics.central_visibility == pytest.approx(0.6, abs=0.01)
    assert metrics.axis_um == pytest.approx(0.0, abs=1e-6)
    assert len(metrics.per_fringe_visibility) == len(metrics.pair_midpoints_um)


def test_constant_or_single_peak_pattern_has_no_fringes(beam, small_grid):
    with pytest.raises(NoFringeError):
        fringe_metrics(IntensityPattern(pitch_um=1.0, intensity=np.ones(100)))
    flat_prism = BiprismSpec(deviation_mrad=0.0)
    with pytest.raises(NoFringeError):
        fringe_metrics(monochromatic_pattern(beam, flat_prism, Z_MM, grid=small_grid))


def test_two_equal_tilted_beams_give_unit_visibility(beam, small_grid):
    source = gaussian_input(beam, small_grid)
    k = 2 * math.pi / 0.67
    # two full Gaussians tilted by +/- 5 mrad
    field = source.with_amplitudes(source.amplitudes * np.cos(k * 5e-3 * source.x_um))
    out = propagate(field, Z_MM, 670.0)
    pattern = IntensityPattern(pitch_um=out.pitch_um, intensity=out.intensity, x0_um=out.x0_um)
    metrics = fringe_metrics(pattern, axis_um=0.0)
    assert metrics.central_visibility == pytest.approx(1.0, abs=1e-3)
    assert metrics.fringe_spacing_um == pytest.approx(67.0, rel=0.01)


def test_biprism_fringe_spacing(beam, prism, small_grid):
    pattern = monochromatic_pattern(beam, prism, Z_MM, grid=small_grid)
    metrics = fringe_metrics(pattern)
    # the two half-beams overlap only within |x| < deviation * z = 250 um
    central = np.array([x for x in metrics.maxima_um if abs(x - metrics.axis_um) < 200.0])
    assert np.median(np.diff(central)) == pytest.approx(prism.fringe_spacing_um(670.0), rel=0.02)
    assert metrics.central_visibility > 0.9


def test_broad_spectrum_lowers_visibility_more_off_axis(beam, prism, small_grid, short_spectrum):
    mono = fringe_metrics(monochromatic_pattern(beam, prism, Z_MM, grid=small_grid))
    poly = fringe_metrics(polychromatic_pattern(beam, prism, short_spectrum, Z_MM, grid=small_grid))
    assert poly.central_visibility <= mono.central_visibility
    # ratios, not raw visibilities: the apex edge wave makes the monochromatic values uneven
    near = poly.off_axis_visibilities()[0] / mono.off_axis_visibilities()[0]
    far = poly.off_axis_visibilities()[3] / mono.off_axis_visibilities()[3]
    assert far < near


def test_magnification_scales_coordinates_and_intensity(beam, prism, small_grid, short_spectrum):
    plain = polychromatic_pattern(beam, prism, short_spectrum, Z_MM, grid=small_grid)
    magnified = polychromatic_pattern(beam, prism, short_spectrum, Z_MM, magnification=10.0, grid=small_grid)
    np.testing.assert_allclose(magnified.x_um, plain.x_um * 10.0)
    assert magnified.integral == pytest.approx(plain.integral)
    assert fringe_metrics(magnified).fringe_spacing_um == pytest.approx(
        10 * fringe_metrics(plain).fringe_spacing_um, rel=1e-6)


def test_parallel_sum_matches_serial(beam, prism, small_grid, short_spectrum):
    serial = PatternModel(beam, prism, short_spectrum, grid=small_grid, n_jobs=1).pattern(Z_MM)
    threaded = PatternModel(beam, prism, short_spectrum, grid=small_grid, n_jobs=2).pattern(Z_MM)
    np.testing.assert_array_equal(serial.intensity, threaded.intensity)


def test_grid_refinement_converges(beam, prism, small_grid):
    coarse = monochromatic_pattern(beam, prism, Z_MM, grid=small_grid)
    fine = monochromatic_pattern(beam, prism, Z_MM, grid=small_grid.refined(2))
    # the coarse samples are every other fine sample
    resampled = fine.sample(coarse.x_um)
    difference = resampled - coarse.intensity
    assert np.sqrt(np.mean(difference**2)) / coarse.intensity.max() < 1e-4
    assert np.max(np.abs(difference)) / coarse.intensity.max() < 1e-3
    assert fringe_metrics(fine).central_visibility == pytest.approx(
        fringe_metrics(coarse).central_visibility, abs=2e-3)


def test_spectral_sample_count_converges(beam, prism, small_grid):
    v = [
        fringe_metrics(polychromatic_pattern(
            beam, prism, SpectralDensity.gaussian(670.0, 80.0, n, 2.0), Z_MM, grid=small_grid,
        )).central_visibility
        for n in (9, 17)
    ]
    assert abs(v[0] - v[1]) < 1e-3


def test_extruded_image_repeats_the_profile(fringe_pattern):
    image = extruded_image(fringe_pattern, n_cols=64, n_rows=8, pixel_um=25.0)
    assert image.shape == (8, 64)
    assert image.max() == 65535
    assert np.all(image == image[0])


@pytest.mark.slow
def test_spectral_width_reaching_target_visibility(beam, prism, small_grid):
    fwhm = spectral_width_for_visibility(0.94, beam, prism, Z_MM, n_samples=9, grid=small_grid)
    spectrum = SpectralDensity.gaussian(670.0, fwhm, 9, 2.0)
    achieved = fringe_metrics(polychromatic_pattern(beam, prism, spectrum, Z_MM, grid=small_grid))
    assert achieved.central_visibility == pytest.approx(0.94, abs=0.01)
