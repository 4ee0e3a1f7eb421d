from pathlib import Path

import pytest

from src.optics.patterns import fringe_metrics, polychromatic_pattern
from src.utils.config import CONFIG_ENV, RunConfig, read_config_file
from src.utils.errors import ConfigError
from src.utils.parameter_catalog import ParameterCatalog

CONFIGS = Path(__file__).parent.parent / "configs"


@pytest.fixture(autouse=True)
def no_config_env(monkeypatch):
    monkeypatch.delenv(CONFIG_ENV, raising=False)


def _write(tmp_path, text, name="run.env"):
    path = tmp_path / name
    path.write_text(text)
    return path


def test_defaults_build_every_component():
    config = RunConfig.load()
    assert config.emitter_model().lifetime_tau_ns == 44.6
    assert config.window_ns == pytest.approx(5 * 436.0)
    assert len(config.spectrum) == 31
    assert config.camera().vertical_fwhm_um == pytest.approx(12500.0)
    assert set(config.sources.values()) == {"default"}


def test_file_then_flags(tmp_path):
    path = _write(tmp_path, "# comment\nanalysis.gate_ns=50\nbeam.fwhm_mm=1.0\n")
    config = RunConfig.load(path, {"analysis.gate_ns": "80", "seed.root": None})
    assert config.gate_ns == 80.0
    assert config.sources["analysis.gate_ns"] == "flag"
    assert config["beam.fwhm_mm"] == 1.0
    assert config.sources["beam.fwhm_mm"] == f"file:{path}"
    assert config.sources["seed.root"] == "default"


def test_config_path_from_environment(tmp_path, monkeypatch):
    path = _write(tmp_path, "source.kind=laser\n")
    monkeypatch.setenv(CONFIG_ENV, str(path))
    assert RunConfig.load()["source.kind"] == "laser"


def test_shipped_configs_load():
    assert RunConfig.load(CONFIGS / "default.env")["source.kind"] == "emitter"
    assert RunConfig.load(CONFIGS / "laser.env").emitter_model().kind == "laser"
    assert RunConfig.load(CONFIGS / "visibility94.env")["spectrum.fwhm_nm"] == 140.0


def test_unknown_key_names_the_key():
    with pytest.raises(ConfigError) as excinfo:
        RunConfig.load(overrides={"bogus.key": "1"})
    assert excinfo.value.key == "bogus.key"


@pytest.mark.parametrize(
    "key, raw",
    [("grid.n_points", "1.5"), ("beam.fwhm_mm", "-1"), ("source.kind", "lamp"), ("whichpath.split_ratio", "nan")],
)
def test_bad_values(key, raw):
    with pytest.raises(ConfigError) as excinfo:
        RunConfig.load(overrides={key: raw})
    assert excinfo.value.key == key


def test_cross_key_invariants():
    with pytest.raises(ConfigError) as excinfo:
        RunConfig.load(overrides={"analysis.gate_ns": "500"})
    assert excinfo.value.key == "analysis.gate_ns"
    with pytest.raises(ConfigError) as excinfo:
        RunConfig.load(overrides={"source.lifetime_ns": "436"})
    assert excinfo.value.key == "source.lifetime_ns"
    with pytest.raises(ConfigError):
        RunConfig.load(overrides={"fit.z_min_mm": "90", "fit.z_max_mm": "80"})


def test_missing_file_and_empty_value(tmp_path):
    with pytest.raises(ConfigError):
        read_config_file(tmp_path / "absent.env")
    with pytest.raises(ConfigError) as excinfo:
        read_config_file(_write(tmp_path, "beam.fwhm_mm\n"))
    assert excinfo.value.key == "beam.fwhm_mm"


def test_derived_values_and_round_trip(tmp_path):
    tuned = RunConfig.load().with_values(spectrum__kind="line", eyepiece__magnification=1.0)
    assert tuned.spectrum.is_line
    assert tuned.sources["spectrum.kind"] == "derived"
    path = _write(tmp_path, tuned.to_file_text(["spectrum.kind", "eyepiece.magnification"]))
    reloaded = RunConfig.load(path)
    assert reloaded.spectrum.is_line
    assert reloaded.magnification == 1.0


def test_describe_lists_every_key():
    rows = RunConfig.load().describe()
    keys = [row["key"] for row in rows]
    assert keys == sorted(keys) == ParameterCatalog().get_all_keys()
    assert {"key", "value", "units", "source", "provenance"} <= set(rows[0])


def test_seeds_are_per_stream():
    config = RunConfig.load()
    assert config.seed_for("split", 0) != config.seed_for("split", 1)
    assert config.seed_for("split", 0) != config.seed_for("source", 0)
    assert config.emitter_model(3).rng_seed == config.seed_for("source", 3)


@pytest.mark.slow
def test_shipped_visibility_config_reaches_094():
    config = RunConfig.load(CONFIGS / "visibility94.env")
    pattern = polychromatic_pattern(config.beam, config.prism, config.spectrum, 50.0, config.magnification,
                                    config.grid, config.kernel)
    assert fringe_metrics(pattern).central_visibility == pytest.approx(0.94, abs=0.01)
