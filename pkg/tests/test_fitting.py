import numpy as np
import pytest

from src.optics.fields import BeamSpec, BiprismSpec, Grid, SpectralDensity
from src.optics.fitting import fit_observation_distance, overlay_frame
from src.optics.patterns import IntensityPattern, polychromatic_pattern
from src.utils.errors import ParameterDomainError, UnidentifiableZError

TRUE_Z_MM = 50.0


@pytest.fixture
def measured(beam, prism, short_spectrum, small_grid):
    return polychromatic_pattern(beam, prism, short_spectrum, TRUE_Z_MM, grid=small_grid)


def test_recovers_distance_of_noiseless_pattern(measured, beam, prism, short_spectrum, small_grid):
    # the coarse scan has a node at the true distance
    result = fit_observation_distance(measured, beam, prism, short_spectrum, 1.0,
                                      z_range=(20.0, 90.0), grid=small_grid, n_coarse=15)
    assert result.z_best_mm == pytest.approx(TRUE_Z_MM, abs=0.05)
    assert result.sse == pytest.approx(0.0, abs=1e-12 * np.sum(measured.intensity ** 2))
    assert len(result.profile) > 15
    assert result.to_dict()["n_evaluations"] == len(result.profile)


def test_recovers_distance_of_noisy_counts(measured, beam, prism, short_spectrum, small_grid):
    counts = np.random.default_rng(7).poisson(measured.intensity / measured.intensity.max() * 10_000)
    noisy = IntensityPattern(pitch_um=measured.pitch_um, intensity=counts.astype(float), x0_um=measured.x0_um)
    result = fit_observation_distance(noisy, beam, prism, short_spectrum, 1.0,
                                      z_range=(20.0, 90.0), grid=small_grid, n_coarse=15)
    assert result.z_best_mm == pytest.approx(TRUE_Z_MM, abs=3.0)


def test_flat_objective_is_unidentifiable():
    wide = BeamSpec(fwhm_mm=20.0)
    grid = Grid(pitch_um=20.0, n_points=16384)
    constant = IntensityPattern(pitch_um=20.0, intensity=np.ones(101), x0_um=-1000.0)
    with pytest.raises(UnidentifiableZError):
        fit_observation_distance(constant, wide, BiprismSpec(deviation_mrad=0.0), SpectralDensity.line(670.0),
                                 1.0, z_range=(5.0, 120.0), grid=grid, n_coarse=9)


def test_degenerate_range_evaluates_once(measured, beam, prism, short_spectrum, small_grid):
    result = fit_observation_distance(measured, beam, prism, short_spectrum, 1.0,
                                      z_range=(30.0, 30.0), grid=small_grid)
    assert result.z_best_mm == 30.0
    assert len(result.profile) == 1


def test_range_validation(measured, beam, prism, short_spectrum, small_grid):
    with pytest.raises(ParameterDomainError):
        fit_observation_distance(measured, beam, prism, short_spectrum, 1.0, z_range=(60.0, 40.0), grid=small_grid)
    with pytest.raises(ParameterDomainError):
        fit_observation_distance(measured, beam, prism, short_spectrum, 1.0, z_range=(10.0, 40.0),
                                 grid=small_grid, n_coarse=2)


def test_overlay_model_shares_the_measured_integral(measured, beam, prism, short_spectrum, small_grid):
    scaled = IntensityPattern(pitch_um=measured.pitch_um, intensity=measured.intensity * 3.0,
                              x0_um=measured.x0_um)
    result = fit_observation_distance(scaled, beam, prism, short_spectrum, 1.0,
                                      z_range=(TRUE_Z_MM, TRUE_Z_MM), grid=small_grid)
    overlay = overlay_frame(scaled, result)
    assert list(overlay.columns) == ["x_um", "measured", "model"]
    np.testing.assert_allclose(overlay["model"], overlay["measured"], rtol=1e-9, atol=1e-12)


# coarse nodes every 2 mm, none on the true distance
FIG5_CASES = [(11.0, (4.0, 26.0), 12), (98.0, (85.0, 111.0), 14)]


@pytest.mark.parametrize("z_true, z_range, n_coarse", FIG5_CASES)
def test_noiseless_round_trip_at_short_and_long_distance(z_true, z_range, n_coarse, beam, prism,
                                                         short_spectrum, small_grid):
    measured = polychromatic_pattern(beam, prism, short_spectrum, z_true, grid=small_grid)
    result = fit_observation_distance(measured, beam, prism, short_spectrum, 1.0,
                                      z_range=z_range, grid=small_grid, n_coarse=n_coarse)
    assert result.z_best_mm == pytest.approx(z_true, abs=0.1)


@pytest.mark.slow
@pytest.mark.parametrize("z_true, z_range, n_coarse", FIG5_CASES)
def test_noisy_round_trip_within_two_mm(z_true, z_range, n_coarse, beam, prism, short_spectrum, small_grid):
    clean = polychromatic_pattern(beam, prism, short_spectrum, z_true, grid=small_grid)
    expected = clean.intensity / clean.intensity.sum() * 20_000
    rng = np.random.default_rng(2024)
    errors = []
    for _ in range(100):
        noisy = IntensityPattern(pitch_um=clean.pitch_um, intensity=rng.poisson(expected).astype(float),
                                 x0_um=clean.x0_um)
        result = fit_observation_distance(noisy, beam, prism, short_spectrum, 1.0,
                                          z_range=z_range, grid=small_grid, n_coarse=n_coarse)
        errors.append(abs(result.z_best_mm - z_true))
    assert np.mean(np.array(errors) <= 2.0) >= 0.95
