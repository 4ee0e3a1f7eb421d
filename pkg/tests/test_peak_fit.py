import math

import numpy as np
import pytest

from src.analysis.coincidence import alpha_from_stream, gate_retention
from src.analysis.histogram import DelayHistogram, delay_histogram, empty_histogram
from src.analysis.peak_fit import (
    PeakFit,
    bin_profile,
    fit_peaks,
    gated_zero_delay_area,
    lifetime_summary,
    resolvable_peaks,
    zero_delay_fit,
)
from src.simulation.emitter import EmitterModel, generate_detections, generate_pulse_train
from src.simulation.whichpath import split_and_detect
from src.utils.errors import FitFailureError, InsufficientDataError, ParameterDomainError

PERIOD = 436.0
TAU = 44.6
GATE = 100.0


def synthetic_histogram(side_amplitude=200.0, zero_fraction=0.1, floor=0.0, seed=0) -> DelayHistogram:
    """Poisson counts drawn from the bin-integrated two-sided exponential model over a flat floor"""
    template = empty_histogram(2.0, 5 * PERIOD, PERIOD)
    expected = np.full(len(template), floor)
    for k in range(-5, 6):
        amp = side_amplitude * (zero_fraction if k == 0 else 1.0)
        expected += amp * bin_profile(template.centers_ns, template.bin_width_ns, k * PERIOD, TAU)
    counts = np.random.default_rng(seed).poisson(expected)
    return DelayHistogram(template.bin_width_ns, template.centers_ns, counts.astype(np.int64), PERIOD)


def _fit(k, area, floor_area=0.0, area_stderr=1.0, floor_stderr=1.0):
    return PeakFit(k, k * PERIOD, TAU, 0.5, area / (2 * TAU), area, area_stderr, 0.0, True,
                   floor_area, floor_stderr)


def test_bin_profile_integrates_to_two_tau():
    centers = np.arange(-2000.0, 2000.0 + 1e-9, 2.0)
    assert bin_profile(centers, 2.0, 0.0, TAU).sum() == pytest.approx(2 * TAU, rel=1e-6)


def test_resolvable_peaks_on_synthetic_histogram():
    peaks = resolvable_peaks(synthetic_histogram(zero_fraction=0.0))
    assert 0 not in peaks
    assert set(peaks) == {-5, -4, -3, -2, -1, 1, 2, 3, 4, 5}


def test_fit_recovers_lifetime_and_zero_delay_area():
    fits = fit_peaks(synthetic_histogram(seed=1))
    assert [f.peak_index for f in fits] == list(range(-5, 6))
    summary = lifetime_summary(fits)
    assert summary.lifetime_ns == pytest.approx(TAU, abs=1.5)
    assert summary.n_peaks == 10
    zero = zero_delay_fit(fits)
    assert zero.normalized_area == pytest.approx(0.1, abs=0.02)
    side = [f for f in fits if f.peak_index != 0]
    assert np.mean([f.normalized_area for f in side]) == pytest.approx(1.0)
    assert all(f.refined for f in side)


def test_area_is_in_counts():
    fits = fit_peaks(synthetic_histogram(seed=2))
    side = [f for f in fits if f.peak_index != 0]
    assert np.mean([f.area for f in side]) == pytest.approx(2 * 200.0 * TAU, rel=0.03)


def test_flat_floor_stays_out_of_lifetime_and_areas():
    fits = fit_peaks(synthetic_histogram(floor=5.0, seed=4))
    assert lifetime_summary(fits).lifetime_ns == pytest.approx(TAU, abs=1.5)
    assert zero_delay_fit(fits).normalized_area == pytest.approx(0.1, abs=0.03)
    side = [f for f in fits if f.peak_index != 0]
    assert np.mean([f.area for f in side]) == pytest.approx(2 * 200.0 * TAU, rel=0.03)
    # 218 bins of 2 ns per period
    assert np.mean([f.floor_area for f in side]) == pytest.approx(5.0 * 218, rel=0.05)


def test_flat_histogram_has_no_peaks():
    template = empty_histogram(2.0, 5 * PERIOD, PERIOD)
    counts = np.random.default_rng(3).poisson(20.0, len(template))
    hist = DelayHistogram(template.bin_width_ns, template.centers_ns, counts.astype(np.int64), PERIOD)
    with pytest.raises(FitFailureError):
        fit_peaks(hist)


def test_lifetime_summary_needs_side_peaks():
    only_zero = [PeakFit(0, 0.0, 40.0, 1.0, 1.0, 80.0, 5.0, 1.0, True)]
    with pytest.raises(InsufficientDataError):
        lifetime_summary(only_zero)
    with pytest.raises(InsufficientDataError):
        zero_delay_fit([])


def test_gated_area_without_floor_is_the_normalized_area():
    fits = [_fit(k, 10.0 if k == 0 else 100.0) for k in range(-3, 4)]
    gated = gated_zero_delay_area(fits, GATE, PERIOD)
    assert gated.value == pytest.approx(0.1)
    assert gated.floor_ratio == 0.0
    assert gated.stderr > 0


def test_gated_area_folds_the_floor_back_in():
    # floor / side = 2r + r^2 with r = 0.1
    fits = [_fit(k, 0.0 if k == 0 else 100.0, floor_area=21.0) for k in range(-3, 4)]
    gated = gated_zero_delay_area(fits, GATE, PERIOD)
    assert gated.floor_ratio == pytest.approx(0.1)
    signal, other = gate_retention(GATE, TAU), 0.1 * GATE / PERIOD
    assert gated.value == pytest.approx((2 * signal * other + other**2) / (signal + other) ** 2)
    wider = gated_zero_delay_area(fits, PERIOD, PERIOD)
    assert wider.value > gated.value
    with pytest.raises(ParameterDomainError):
        gated_zero_delay_area(fits, 500.0, PERIOD)


@pytest.mark.slow
def test_simulated_laser_and_emitter_zero_delay_peaks():
    laser = EmitterModel(kind="laser", mean_detected_per_pulse=0.1, rng_seed=51)
    emitter = EmitterModel(mean_detected_per_pulse=0.1, rng_seed=52)

    laser_hist = delay_histogram(split_and_detect(generate_pulse_train(laser, 1_000_000), 0.5, 53))
    emitter_hist = delay_histogram(split_and_detect(generate_pulse_train(emitter, 1_000_000), 0.5, 54))

    laser_zero = zero_delay_fit(fit_peaks(laser_hist)).normalized_area
    emitter_fits = fit_peaks(emitter_hist)
    assert 0.8 < laser_zero < 1.4
    assert zero_delay_fit(emitter_fits).normalized_area < 0.1
    assert lifetime_summary(emitter_fits).lifetime_ns == pytest.approx(TAU, abs=2.0)


@pytest.mark.slow
@pytest.mark.parametrize("background", [0.01, 0.03])
def test_zero_delay_area_matches_gated_alpha_with_background(background):
    model = EmitterModel(mean_detected_per_pulse=0.1, background_per_gate=background, rng_seed=61)
    stream = split_and_detect(generate_pulse_train(model, 1_000_000), 0.5, 62)
    alpha = alpha_from_stream(stream, GATE)
    fits = fit_peaks(delay_histogram(stream))
    gated = gated_zero_delay_area(fits, GATE, PERIOD)

    assert abs(gated.value - alpha.alpha) <= 3 * math.hypot(gated.stderr, alpha.stderr_alpha)
    # background pairs land in the floor, not in the exponentials
    assert zero_delay_fit(fits).normalized_area < 0.1
    assert lifetime_summary(fits).lifetime_ns == pytest.approx(TAU, rel=0.05)


@pytest.mark.slow
def test_faint_laser_lifetime_within_five_percent():
    laser = EmitterModel(kind="laser", mean_detected_per_pulse=0.01, rng_seed=71)
    stream = split_and_detect(generate_detections(laser, 1_000_000), 0.5, 72)
    fits = fit_peaks(delay_histogram(stream))
    assert lifetime_summary(fits).lifetime_ns == pytest.approx(TAU, rel=0.05)
    per_peak = [f.fitted_lifetime for f in fits if f.peak_index != 0 and f.refined]
    assert np.median(per_peak) == pytest.approx(TAU, rel=0.05)
