import math
from fractions import Fraction

import numpy as np
import pytest

from src.analysis.coincidence import (
    alpha_from_stream,
    background_for_target_alpha,
    batch_alpha,
    compute_alpha,
    count_gated,
    expected_alpha,
    gate_retention,
    summarize_alphas,
    triggers_from_counting_time,
)
from src.simulation.emitter import EmitterModel, generate_detections, generate_pulse_train
from src.simulation.whichpath import TimestampStream, split_and_detect
from src.utils.errors import InsufficientDataError, ParameterDomainError, UndefinedAlphaError


def _stream(channels, times, n_triggers=10, period=100.0):
    times = np.asarray(times, dtype=float)
    return TimestampStream(
        channel=np.asarray(channels, dtype=np.int8),
        time_ns=times,
        pulse_index=np.floor(times / period).astype(np.int64),
        n_triggers=n_triggers,
        rep_period_ns=period,
    )


def test_compute_alpha_is_exact():
    result = compute_alpha(n_triggers=1000, n1=10, n2=20, n_coinc=1)
    assert result.alpha_exact == Fraction(5)
    assert result.alpha == 5.0
    assert result.stderr_alpha == pytest.approx(5.0)
    assert not result.stderr_is_upper_bound


def test_compute_alpha_reports_upper_bound_without_coincidences():
    result = compute_alpha(n_triggers=3000, n1=30, n2=50, n_coinc=0)
    assert result.alpha == 0.0
    assert result.stderr_alpha == pytest.approx(2.0)
    assert result.stderr_is_upper_bound


@pytest.mark.parametrize("n1, n2", [(0, 5), (5, 0)])
def test_compute_alpha_undefined_without_counts(n1, n2):
    with pytest.raises(UndefinedAlphaError):
        compute_alpha(100, n1, n2, 0)


def test_alpha_dict_has_three_decimals():
    d = compute_alpha(7, 3, 3, 1).to_dict()
    assert d["alpha"] == 0.778
    assert d["alpha_exact"] == "7/9"


def test_triggers_from_counting_time_uses_exact_decimals():
    assert triggers_from_counting_time("1", "436") == 2293577
    # 0.000000436 / 436e-9 is 1 exactly, but not in binary floating point
    assert triggers_from_counting_time("0.000000436", "436") == 1
    assert triggers_from_counting_time("0.0000004359", "436") == 0


def test_count_gated_on_hand_built_stream():
    # gate 50 ns: detections at offset >= 50 are outside
    stream = _stream(
        channels=[1, 2, 1, 1, 2, 2],
        times=[5, 20, 110, 170, 230, 260],
    )
    counts = count_gated(stream, 50.0)
    assert (counts.n1, counts.n2) == (2, 2)
    assert counts.n_coinc == 1
    assert counts.n_outside == 2


@pytest.mark.parametrize("gate", [0.0, -5.0, 101.0])
def test_gate_outside_domain(gate):
    with pytest.raises(ParameterDomainError):
        count_gated(_stream([1, 2], [1, 2]), gate)


def test_gate_retention_matches_closed_form():
    assert gate_retention(100.0, 44.6) == pytest.approx(1 - math.exp(-100 / 44.6))
    assert gate_retention(100.0, 44.6) == pytest.approx(0.894, abs=0.001)


def test_empirical_gate_retention():
    model = EmitterModel(mean_detected_per_pulse=0.2, rng_seed=8)
    stream = split_and_detect(generate_pulse_train(model, 300_000), 0.5, 8)
    counts = count_gated(stream, 100.0)
    retained = (counts.n1 + counts.n2) / len(stream)
    kept = -math.expm1(-436.0 / 44.6)
    assert retained == pytest.approx(gate_retention(100.0, 44.6) / kept, abs=0.005)


def test_summarize_alphas_halfwidth():
    batch = summarize_alphas([1.0, 1.2, 0.8, 1.0])
    assert batch.mean_alpha == pytest.approx(1.0)
    s = np.std([1.0, 1.2, 0.8, 1.0], ddof=1)
    assert batch.confidence_halfwidth_95 == pytest.approx(1.96 * s / 2)


def test_batch_needs_two_runs():
    with pytest.raises(InsufficientDataError):
        summarize_alphas([0.5])
    with pytest.raises(InsufficientDataError):
        batch_alpha([_stream([1, 2], [1, 2])], 50.0)


def test_expected_alpha_without_background_is_zero():
    model = EmitterModel(mean_detected_per_pulse=0.05)
    assert expected_alpha(model, 100.0) == 0.0


def test_background_for_target_alpha_round_trip():
    model = EmitterModel(mean_detected_per_pulse=0.01)
    background = background_for_target_alpha(0.13, model, 100.0)
    tuned = EmitterModel(mean_detected_per_pulse=0.01, background_per_gate=background)
    assert expected_alpha(tuned, 100.0) == pytest.approx(0.13, abs=1e-9)


def test_laser_alpha_matches_poisson_prediction():
    model = EmitterModel(kind="laser", mean_detected_per_pulse=0.1, rng_seed=31)
    stream = split_and_detect(generate_pulse_train(model, 400_000), 0.5, 32)
    result = alpha_from_stream(stream, 100.0)
    kept = -math.expm1(-436.0 / 44.6)
    m = 0.1 * 0.5 * gate_retention(100.0, 44.6) / kept
    predicted = (-math.expm1(-m)) ** 2 / m**2
    assert abs(result.alpha - predicted) < 4 * result.stderr_alpha


def test_single_emitter_alpha_matches_enumeration():
    model = EmitterModel(mean_detected_per_pulse=0.1, background_per_gate=0.02, rng_seed=41)
    stream = split_and_detect(generate_pulse_train(model, 400_000), 0.5, 42)
    result = alpha_from_stream(stream, 100.0)
    assert result.alpha < 0.5
    assert abs(result.alpha - expected_alpha(model, 100.0)) < 4 * result.stderr_alpha


@pytest.mark.parametrize(
    "counting_time_s, n1, n2, n_coinc, printed",
    [("4.780", 49448, 50552, 269, 1.180), ("5.138", 49135, 50865, 28, 0.132)],
)
def test_first_table_rows_are_reproduced(counting_time_s, n1, n2, n_coinc, printed):
    n_triggers = triggers_from_counting_time(counting_time_s, "436")
    assert n_triggers == math.floor(Fraction(counting_time_s) / Fraction(436, 10**9))
    result = compute_alpha(n_triggers, n1, n2, n_coinc)
    assert result.to_dict()["alpha"] == printed
    assert result.alpha_exact == Fraction(n_coinc * n_triggers, n1 * n2)


def test_ideal_emitter_never_coincides():
    for run in range(10):
        events = generate_detections(EmitterModel(mean_detected_per_pulse=0.1, rng_seed=run), 100_000)
        counts = count_gated(split_and_detect(events, 0.5, 100 + run), 100.0)
        assert counts.n_coinc == 0
        assert counts.n1 + counts.n2 > 0


def test_expected_alpha_grows_with_background():
    values = [
        expected_alpha(EmitterModel(mean_detected_per_pulse=0.01, background_per_gate=b), 100.0)
        for b in (0.0, 1e-4, 1e-3, 1e-2)
    ]
    assert values[0] == 0.0
    assert all(later > earlier for earlier, later in zip(values, values[1:]))


@pytest.mark.slow
def test_measured_alpha_is_nondecreasing_in_background():
    alphas = []
    for i, background in enumerate((0.0, 1e-4, 1e-3, 1e-2)):
        model = EmitterModel(mean_detected_per_pulse=0.01, background_per_gate=background, rng_seed=200 + i)
        alphas.append(alpha_from_stream(split_and_detect(generate_pulse_train(model, 10_000_000), 0.5, 300 + i),
                                        100.0).alpha)
    assert alphas[0] == 0.0
    assert alphas == sorted(alphas)


@pytest.mark.slow
def test_tuned_background_reproduces_table_alpha():
    base = EmitterModel(mean_detected_per_pulse=0.01)
    background = background_for_target_alpha(0.13, base, 100.0)
    streams = [
        split_and_detect(
            generate_detections(EmitterModel(mean_detected_per_pulse=0.01, background_per_gate=background,
                                             rng_seed=400 + run), 100_000),
            0.5, 500 + run,
        )
        for run in range(10)
    ]
    batch = batch_alpha(streams, 100.0)
    assert batch.mean_alpha == pytest.approx(0.13, abs=0.03)
    assert len(batch.alphas) == 10
