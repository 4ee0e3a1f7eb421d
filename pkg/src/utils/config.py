"""
Run configuration
Catalog defaults < key=value config file < command-line overrides
"""
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple

from dotenv import dotenv_values, load_dotenv

from src.analysis.coincidence import _check_gate
from src.optics.fields import BeamSpec, BiprismSpec, Grid, SpectralDensity
from src.simulation.emitter import EmitterModel
from src.simulation.iccd import CameraSpec
from src.utils.errors import ConfigError, ParameterDomainError
from src.utils.parameter_catalog import ParameterCatalog
from src.utils.rng import derive_seed

load_dotenv()

CONFIG_ENV = "BIPRISM_CONFIG"


def read_config_file(path: Path) -> Dict[str, str]:
    """Parse a key=value file; blank lines and # comments are ignored"""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    values = dotenv_values(path)
    missing = [key for key, value in values.items() if value is None]
    if missing:
        raise ConfigError(f"config key '{missing[0]}' has no value in {path}", key=missing[0])
    return dict(values)


@dataclass(frozen=True)
class RunConfig:
    values: Dict[str, Any]
    sources: Dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, config_path: Optional[Path] = None, overrides: Optional[Mapping[str, Any]] = None,
             catalog: Optional[ParameterCatalog] = None) -> "RunConfig":
        catalog = catalog or ParameterCatalog()
        values = catalog.defaults()
        sources = {key: "default" for key in values}

        if config_path is None and os.getenv(CONFIG_ENV):
            config_path = Path(os.environ[CONFIG_ENV])

        layers = []
        if config_path is not None:
            layers.append((f"file:{config_path}", read_config_file(config_path)))
        if overrides:
            layers.append(("flag", {k: v for k, v in overrides.items() if v is not None}))

        for origin, layer in layers:
            for key, raw in layer.items():
                if not catalog.is_known(key):
                    raise ConfigError(f"unknown config key '{key}' ({origin})", key=key)
                try:
                    values[key] = catalog.coerce(key, raw)
                except ValueError as e:
                    raise ConfigError(f"invalid value for '{key}' ({origin}): {e}", key=key) from e
                sources[key] = origin

        config = cls(values=values, sources=sources)
        config.validate()
        return config

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    def with_values(self, **updates: Any) -> "RunConfig":
        """Copy with keys replaced; keys use '__' for '.' (spectrum__fwhm_nm=120)"""
        values = dict(self.values)
        sources = dict(self.sources)
        for name, value in updates.items():
            key = name.replace("__", ".")
            if key not in values:
                raise ConfigError(f"unknown config key '{key}'", key=key)
            values[key] = value
            sources[key] = "derived"
        config = RunConfig(values=values, sources=sources)
        config.validate()
        return config

    def validate(self):
        """Cross-key invariants; every component must build"""
        builders = [
            ("source.lifetime_ns", lambda: self.emitter_model()),
            ("analysis.gate_ns", lambda: _check_gate(self["analysis.gate_ns"], self["source.rep_period_ns"])),
            ("beam.fwhm_mm", lambda: self.beam),
            ("prism.deviation_mrad", lambda: self.prism),
            ("spectrum.fwhm_nm", lambda: self.spectrum),
            ("grid.n_points", lambda: self.grid),
            ("camera.n_cols", lambda: self.camera()),
        ]
        for key, build in builders:
            try:
                build()
            except ParameterDomainError as e:
                raise ConfigError(f"invalid configuration at '{key}': {e}", key=key) from e
        if self["fit.z_min_mm"] > self["fit.z_max_mm"]:
            raise ConfigError("fit.z_min_mm must not exceed fit.z_max_mm", key="fit.z_min_mm")
        if self["runtime.n_jobs"] == 0:
            raise ConfigError("runtime.n_jobs must be non-zero", key="runtime.n_jobs")

    @property
    def root_seed(self) -> int:
        return int(self["seed.root"])

    def seed_for(self, stream: str, index: int = 0) -> int:
        return derive_seed(self.root_seed, stream, index)

    def emitter_model(self, run_index: int = 0) -> EmitterModel:
        return EmitterModel(
            kind=self["source.kind"],
            lifetime_tau_ns=self["source.lifetime_ns"],
            rep_period_ns=self["source.rep_period_ns"],
            mean_detected_per_pulse=self["source.mean_detected_per_pulse"],
            background_per_gate=self["source.background_per_gate"],
            excitation_probability=self["source.excitation_probability"],
            rng_seed=self.seed_for("source", run_index),
        )

    @property
    def split_ratio(self) -> float:
        return self["whichpath.split_ratio"]

    @property
    def gate_ns(self) -> float:
        return self["analysis.gate_ns"]

    @property
    def bin_ns(self) -> float:
        return self["analysis.bin_ns"]

    @property
    def window_ns(self) -> float:
        return self["analysis.window_periods"] * self["source.rep_period_ns"]

    @property
    def beam(self) -> BeamSpec:
        return BeamSpec(fwhm_mm=self["beam.fwhm_mm"], wavelength_ref_nm=self["beam.wavelength_nm"])

    @property
    def prism(self) -> BiprismSpec:
        return BiprismSpec(deviation_mrad=self["prism.deviation_mrad"], apex_mm=self["prism.apex_mm"])

    @property
    def spectrum(self) -> SpectralDensity:
        if self["spectrum.kind"] == "line":
            return SpectralDensity.line(self["spectrum.center_nm"])
        return SpectralDensity.gaussian(
            center_nm=self["spectrum.center_nm"],
            fwhm_nm=self["spectrum.fwhm_nm"],
            n_samples=self["spectrum.n_samples"],
            span_sigma=self["spectrum.span_sigma"],
        )

    @property
    def magnification(self) -> float:
        return self["eyepiece.magnification"]

    @property
    def grid(self) -> Grid:
        return Grid(pitch_um=self["grid.pitch_um"], n_points=self["grid.n_points"])

    @property
    def kernel(self) -> str:
        return self["propagation.kernel"]

    @property
    def z_range(self) -> Tuple[float, float]:
        return self["fit.z_min_mm"], self["fit.z_max_mm"]

    def camera(self, rng_seed: Optional[int] = None) -> CameraSpec:
        return CameraSpec(
            pixel_pitch_um=self["camera.pixel_um"],
            n_cols=self["camera.n_cols"],
            n_rows=self["camera.n_rows"],
            photons_per_snapshot_mean=self["camera.photons_per_snapshot"],
            rng_seed=self.seed_for("camera") if rng_seed is None else rng_seed,
            vertical_fwhm_um=self["beam.fwhm_mm"] * 1000.0 * self.magnification,
        )

    @property
    def output_dir(self) -> Path:
        return Path(self["output.directory"])

    @property
    def n_jobs(self) -> int:
        return int(self["runtime.n_jobs"])

    def describe(self, catalog: Optional[ParameterCatalog] = None) -> list:
        """Rows of (key, value, units, source, provenance) for every key, sorted"""
        catalog = catalog or ParameterCatalog()
        rows = []
        for key in catalog.get_all_keys():
            info = catalog.get_key_info(key)
            rows.append({
                "key": key,
                "value": self.values[key],
                "units": info.get("units", ""),
                "source": self.sources.get(key, "default"),
                "provenance": info.get("provenance", ""),
            })
        return rows

    def to_file_text(self, keys: Optional[list] = None) -> str:
        """key=value text loadable by RunConfig.load"""
        selected = sorted(self.values) if keys is None else keys
        return "".join(f"{key}={self.values[key]}\n" for key in selected)
