"""
Optical field types and the input plane: Gaussian TEM00 beam and thin biprism
Units: transverse coordinates in um, distances in mm, wavelengths in nm
"""
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import pandas as pd
from scipy import signal
from scipy.special import erfc

from src.utils.errors import ClippingError, ParameterDomainError
from src.utils.logging_config import get_logger

logger = get_logger("optics")

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
CLIP_TOLERANCE = 1e-6


@dataclass(frozen=True)
class BeamSpec:
    fwhm_mm: float = 1.25
    wavelength_ref_nm: float = 670.0

    def __post_init__(self):
        if not self.fwhm_mm > 0:
            raise ParameterDomainError(f"beam FWHM must be positive, got {self.fwhm_mm} mm")
        if not self.wavelength_ref_nm > 0:
            raise ParameterDomainError(f"reference wavelength must be positive, got {self.wavelength_ref_nm} nm")

    @property
    def fwhm_um(self) -> float:
        return self.fwhm_mm * 1000.0

    @property
    def sigma_um(self) -> float:
        """RMS width of the intensity profile"""
        return self.fwhm_um * FWHM_TO_SIGMA


@dataclass(frozen=True)
class BiprismSpec:
    """Thin biprism described by the deviation angle each half receives"""
    deviation_mrad: float = 5.0
    apex_mm: float = 0.0

    def __post_init__(self):
        # zero deviation is accepted as the identity element
        if self.deviation_mrad < 0:
            raise ParameterDomainError(f"deviation angle must be >= 0, got {self.deviation_mrad} mrad")

    def fringe_spacing_um(self, wavelength_nm: float) -> float:
        """Two-plane-wave spacing lambda / (2 delta)"""
        if self.deviation_mrad == 0:
            return math.inf
        return (wavelength_nm / 1000.0) / (2.0 * self.deviation_mrad * 1e-3)


@dataclass(frozen=True)
class SpectralDensity:
    wavelengths_nm: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        wavelengths = np.asarray(self.wavelengths_nm, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if wavelengths.ndim != 1 or wavelengths.size == 0 or wavelengths.shape != weights.shape:
            raise ParameterDomainError("spectrum needs matching, non-empty wavelength and weight arrays")
        if np.any(wavelengths <= 0):
            raise ParameterDomainError("wavelengths must be positive")
        if np.any(np.diff(wavelengths) <= 0):
            raise ParameterDomainError("wavelengths must be strictly increasing")
        if np.any(weights < 0):
            raise ParameterDomainError("spectral weights must be >= 0")
        if not math.isclose(float(weights.sum()), 1.0, rel_tol=1e-9):
            raise ParameterDomainError(f"spectral weights must sum to 1, got {weights.sum()}")
        object.__setattr__(self, "wavelengths_nm", wavelengths)
        object.__setattr__(self, "weights", weights)

    def __len__(self) -> int:
        return int(self.wavelengths_nm.size)

    @classmethod
    def from_samples(cls, wavelengths_nm, weights) -> "SpectralDensity":
        """Normalises the weights"""
        weights = np.asarray(weights, dtype=float)
        total = weights.sum()
        if not total > 0:
            raise ParameterDomainError("spectral weights must have a positive sum")
        return cls(np.asarray(wavelengths_nm, dtype=float), weights / total)

    @classmethod
    def line(cls, wavelength_nm: float) -> "SpectralDensity":
        return cls(np.array([float(wavelength_nm)]), np.array([1.0]))

    @classmethod
    def gaussian(cls, center_nm: float = 670.0, fwhm_nm: float = 80.0, n_samples: int = 31,
                 span_sigma: float = 2.0) -> "SpectralDensity":
        """Equally spaced samples of a Gaussian band across +/- span_sigma"""
        if n_samples < 1:
            raise ParameterDomainError(f"n_samples must be >= 1, got {n_samples}")
        if fwhm_nm < 0 or span_sigma <= 0:
            raise ParameterDomainError("spectral FWHM must be >= 0 and span_sigma > 0")
        if n_samples == 1 or fwhm_nm == 0:
            return cls.line(center_nm)
        sigma = fwhm_nm * FWHM_TO_SIGMA
        if span_sigma * sigma >= center_nm:
            raise ParameterDomainError(
                f"spectrum of FWHM {fwhm_nm} nm around {center_nm} nm reaches non-positive wavelengths"
            )
        wavelengths = np.linspace(center_nm - span_sigma * sigma, center_nm + span_sigma * sigma, n_samples)
        return cls.from_samples(wavelengths, np.exp(-0.5 * ((wavelengths - center_nm) / sigma) ** 2))

    @property
    def is_line(self) -> bool:
        return len(self) == 1

    @property
    def mean_nm(self) -> float:
        return float(np.sum(self.weights * self.wavelengths_nm))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"wavelength_nm": self.wavelengths_nm, "weight": self.weights})


@dataclass(frozen=True)
class Grid:
    pitch_um: float = 2.5
    n_points: int = 16384

    def __post_init__(self):
        if not self.pitch_um > 0:
            raise ParameterDomainError(f"grid pitch must be positive, got {self.pitch_um} um")
        if self.n_points < 2:
            raise ParameterDomainError(f"grid needs at least 2 points, got {self.n_points}")

    @property
    def x0_um(self) -> float:
        """Coordinate of the first sample; sample n_points // 2 sits at x = 0"""
        return -(self.n_points // 2) * self.pitch_um

    @property
    def width_um(self) -> float:
        return self.n_points * self.pitch_um

    def x_um(self) -> np.ndarray:
        return self.x0_um + np.arange(self.n_points) * self.pitch_um

    def refined(self, factor: int = 2) -> "Grid":
        """Same window with the pitch divided by factor"""
        return Grid(pitch_um=self.pitch_um / factor, n_points=self.n_points * factor)


@dataclass(frozen=True)
class ComplexField1D:
    pitch_um: float
    amplitudes: np.ndarray
    plane_z_mm: float = 0.0
    x0_um: Optional[float] = None

    def __post_init__(self):
        if self.amplitudes.ndim != 1 or self.amplitudes.size < 2:
            raise ParameterDomainError("a field needs at least 2 samples")
        if self.x0_um is None:
            object.__setattr__(self, "x0_um", -(self.amplitudes.size // 2) * self.pitch_um)

    def __len__(self) -> int:
        return int(self.amplitudes.size)

    @property
    def x_um(self) -> np.ndarray:
        return self.x0_um + np.arange(self.amplitudes.size) * self.pitch_um

    @property
    def intensity(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def power(self) -> float:
        return float(np.sum(self.intensity) * self.pitch_um)

    def with_amplitudes(self, amplitudes: np.ndarray, plane_z_mm: Optional[float] = None) -> "ComplexField1D":
        return replace(
            self,
            amplitudes=amplitudes,
            plane_z_mm=self.plane_z_mm if plane_z_mm is None else plane_z_mm,
        )


def gaussian_power_um(beam: BeamSpec) -> float:
    """Closed-form integral of the unit-peak Gaussian intensity"""
    return beam.fwhm_um * math.sqrt(math.pi / (4.0 * math.log(2.0)))


def gaussian_input(beam: BeamSpec, grid: Grid) -> ComplexField1D:
    """Real, positive Gaussian amplitude with intensity FWHM beam.fwhm, flat phase, plane z = 0"""
    if grid.width_um < 4.0 * beam.fwhm_um:
        raise ClippingError(
            f"grid width {grid.width_um / 1000:.3f} mm is narrower than 4 x FWHM ({4 * beam.fwhm_mm:.3f} mm)"
        )
    x = grid.x_um()
    half_width = min(-x[0], x[-1]) + grid.pitch_um / 2
    outside = float(erfc(half_width / (beam.sigma_um * math.sqrt(2.0))))
    if outside > CLIP_TOLERANCE:
        raise ClippingError(f"grid clips {outside:.2e} of the beam power (limit {CLIP_TOLERANCE:.0e})")

    amplitude = np.exp(-2.0 * math.log(2.0) * (x / beam.fwhm_um) ** 2).astype(np.complex128)
    return ComplexField1D(pitch_um=grid.pitch_um, amplitudes=amplitude, plane_z_mm=0.0, x0_um=grid.x0_um)


def biprism_phase(x_um: np.ndarray, prism: BiprismSpec, wavelength_nm: float) -> np.ndarray:
    k = 2.0 * math.pi / (wavelength_nm / 1000.0)
    return -k * (prism.deviation_mrad * 1e-3) * np.abs(x_um - prism.apex_mm * 1000.0)


def apply_biprism(field: ComplexField1D, prism: BiprismSpec, wavelength_nm: float,
                  oversample: int = 1) -> ComplexField1D:
    """Thin-element phase mask deflecting each half of the wavefront toward the apex

    With oversample > 1 the mask is applied on a finer grid and the result is
    Fourier-resampled back, so the apex kink is band-limited to the grid's
    Nyquist frequency instead of aliasing into the passband. The power above
    Nyquist is dropped.
    """
    if prism.deviation_mrad == 0:
        return field
    if oversample < 1:
        raise ParameterDomainError(f"oversample must be >= 1, got {oversample}")
    if oversample == 1:
        phase = biprism_phase(field.x_um, prism, wavelength_nm)
        return field.with_amplitudes(field.amplitudes * np.exp(1j * phase))

    n = len(field)
    fine_x = field.x0_um + np.arange(n * oversample) * (field.pitch_um / oversample)
    fine = signal.resample(field.amplitudes, n * oversample)
    masked = fine * np.exp(1j * biprism_phase(fine_x, prism, wavelength_nm))
    return field.with_amplitudes(signal.resample(masked, n))
