import numpy as np
import pytest

from src.analysis.histogram import delay_histogram
from src.artifacts.csv_io import (
    read_events,
    read_histogram,
    read_pattern,
    read_sidecar,
    read_timestamps,
    write_events,
    write_histogram,
    write_pattern,
    write_timestamps,
)
from src.artifacts.pgm import read_pgm, write_pgm
from src.artifacts.reports import read_report, to_json, write_report
from src.simulation.emitter import generate_pulse_train
from src.simulation.whichpath import split_and_detect
from src.utils.errors import ArtifactError


@pytest.fixture
def stream(emitter):
    return split_and_detect(generate_pulse_train(emitter, 5_000), 0.5, 3)


def test_pgm_8_and_16_bit(tmp_path):
    small = np.array([[0, 1, 2], [3, 4, 255]])
    large = np.array([[0, 300], [65535, 7]])
    np.testing.assert_array_equal(read_pgm(write_pgm(tmp_path / "a.pgm", small)), small)
    np.testing.assert_array_equal(read_pgm(write_pgm(tmp_path / "b.pgm", large)), large)
    assert (tmp_path / "a.pgm").read_bytes().startswith(b"P5\n3 2\n255\n")
    assert (tmp_path / "b.pgm").stat().st_size == len(b"P5\n2 2\n65535\n") + 8


def test_pgm_header_comments_are_skipped(tmp_path):
    path = tmp_path / "c.pgm"
    path.write_bytes(b"P5\n# made by hand\n2 1\n# depth\n9\n" + bytes([4, 9]))
    np.testing.assert_array_equal(read_pgm(path), [[4, 9]])


def test_pgm_rejects_bad_input(tmp_path):
    with pytest.raises(ArtifactError):
        write_pgm(tmp_path / "d.pgm", np.array([[-1, 2]]))
    with pytest.raises(ArtifactError):
        write_pgm(tmp_path / "e.pgm", np.array([[70000]]))
    truncated = tmp_path / "f.pgm"
    truncated.write_bytes(b"P5\n4 4\n255\n" + bytes(3))
    with pytest.raises(ArtifactError):
        read_pgm(truncated)


def test_timestamps_with_sidecar(stream, tmp_path):
    path = write_timestamps(stream, tmp_path / "timestamps.csv")
    meta = read_sidecar(path)
    assert int(meta["n_triggers"]) == 5_000
    assert float(meta["rep_period_ns"]) == 436.0
    back = read_timestamps(path)
    np.testing.assert_array_equal(back.channel, stream.channel)
    np.testing.assert_allclose(back.time_ns, stream.time_ns, atol=5e-4)
    assert back.n_triggers == stream.n_triggers
    assert back.seed == 3
    assert back.origin is None


def test_timestamps_without_sidecar_need_metadata(stream, tmp_path):
    path = tmp_path / "bare.csv"
    stream.to_frame().to_csv(path, index=False)
    with pytest.raises(ArtifactError):
        read_timestamps(path)
    assert read_timestamps(path, rep_period_ns=436.0, n_triggers=5_000).n_triggers == 5_000


def test_missing_columns_and_files(tmp_path):
    path = tmp_path / "wrong.csv"
    path.write_text("channel,time\n1,2.0\n")
    with pytest.raises(ArtifactError, match="lacks columns"):
        read_timestamps(path, rep_period_ns=436.0, n_triggers=1)
    with pytest.raises(ArtifactError, match="not found"):
        read_pattern(tmp_path / "absent.csv")


def test_events_keep_origin_labels(emitter, tmp_path):
    events = generate_pulse_train(emitter, 2_000)
    back = read_events(write_events(events, tmp_path / "events.csv"), 436.0, 2_000)
    np.testing.assert_array_equal(back.origin, events.origin)
    assert back.n_pulses == 2_000


def test_histogram_keeps_binning(stream, tmp_path):
    hist = delay_histogram(stream, 2.0)
    back = read_histogram(write_histogram(hist, tmp_path / "delays.csv"))
    assert back.bin_width_ns == hist.bin_width_ns
    assert back.rep_period_ns == 436.0
    np.testing.assert_array_equal(back.counts, hist.counts)


def test_pattern_needs_equal_spacing(fringe_pattern, tmp_path):
    back = read_pattern(write_pattern(fringe_pattern, tmp_path / "pattern.csv"))
    assert back.pitch_um == pytest.approx(2.0)
    np.testing.assert_allclose(back.intensity, fringe_pattern.intensity, rtol=1e-9)
    uneven = tmp_path / "uneven.csv"
    uneven.write_text("x_um,intensity\n0,1\n1,1\n3,1\n")
    with pytest.raises(ArtifactError, match="equally spaced"):
        read_pattern(uneven)


def test_reports_have_sorted_keys(tmp_path):
    payload = {"zeta": np.float64(1.5), "alpha": np.arange(3), "path": tmp_path}
    text = to_json(payload)
    assert text.index('"alpha"') < text.index('"path"') < text.index('"zeta"')
    assert read_report(write_report(payload, tmp_path / "r.json")) == {
        "alpha": [0, 1, 2], "path": str(tmp_path), "zeta": 1.5,
    }
    broken = tmp_path / "broken.json"
    broken.write_text("{")
    with pytest.raises(ArtifactError):
        read_report(broken)
