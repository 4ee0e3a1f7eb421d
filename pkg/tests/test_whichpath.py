import numpy as np
import pytest
from scipy.stats import binomtest, chi2_contingency

from src.simulation.emitter import EmitterModel, generate_pulse_train
from src.simulation.whichpath import Channel, TimestampStream, origin_contingency, split_and_detect
from src.utils.errors import ParameterDomainError


@pytest.fixture
def events():
    model = EmitterModel(mean_detected_per_pulse=0.2, background_per_gate=0.1, rng_seed=21)
    return generate_pulse_train(model, 100_000)


def test_one_record_per_event(events):
    stream = split_and_detect(events, 0.5, rng_seed=1)
    assert len(stream) == len(events)
    assert stream.n1 + stream.n2 == len(events)
    assert stream.n_triggers == events.n_pulses


def test_split_ratio_is_respected(events):
    stream = split_and_detect(events, 0.3, rng_seed=2)
    assert binomtest(stream.n1, len(stream), 0.3).pvalue > 1e-3


def test_split_ignores_origin(events):
    stream = split_and_detect(events, 0.5, rng_seed=3)
    table = origin_contingency(stream)
    assert table.sum() == len(events)
    assert chi2_contingency(table).pvalue > 1e-3


@pytest.mark.parametrize("ratio", [-0.1, 1.1])
def test_split_ratio_outside_unit_interval(events, ratio):
    with pytest.raises(ParameterDomainError):
        split_and_detect(events, ratio)


def test_extreme_ratios_send_everything_one_way(events):
    assert split_and_detect(events, 1.0).n2 == 0
    assert split_and_detect(events, 0.0).n1 == 0


def test_stream_rejects_unsorted_times():
    with pytest.raises(ParameterDomainError):
        TimestampStream(
            channel=np.array([1, 2], dtype=np.int8),
            time_ns=np.array([5.0, 1.0]),
            pulse_index=np.array([0, 0]),
            n_triggers=1,
            rep_period_ns=436.0,
        )


def test_stream_records_and_metadata(events):
    stream = split_and_detect(events, 0.5, rng_seed=9)
    record = next(iter(stream))
    assert record.channel in (Channel.PATH1, Channel.PATH2)
    meta = stream.metadata()
    assert meta["n_triggers"] == events.n_pulses
    assert meta["seed"] == 9
    assert stream.total_time_s == pytest.approx(100_000 * 436e-9)
    assert list(stream.to_frame().columns) == ["channel", "time_ns", "pulse_index"]
