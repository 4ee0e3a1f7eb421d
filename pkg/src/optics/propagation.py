"""
Free-space propagation of 1D scalar fields
Band-limited angular spectrum on a 2x zero-padded grid; the carrier phase
exp(ikz) is omitted throughout
"""
import math
from enum import Enum
from typing import Tuple

import numpy as np
from scipy import fft

from src.optics.fields import BeamSpec, ComplexField1D
from src.utils.errors import ParameterDomainError, SamplingError
from src.utils.logging_config import get_logger

logger = get_logger("optics")

# fraction of field power allowed outside the support estimate
SUPPORT_TAIL = 1e-6
# fraction of spectral power allowed above the walk-off frequency
SPECTRAL_TAIL = 1e-4


class Kernel(str, Enum):
    ANGULAR = "angular"
    FRESNEL = "fresnel"


def band_limit(wavelength_um: float, distance_um: float, padded_width_um: float) -> float:
    """Highest spatial frequency the sampled transfer function represents without aliasing"""
    return 1.0 / (wavelength_um * math.sqrt((2.0 * abs(distance_um) / padded_width_um) ** 2 + 1.0))


def transfer_function(freqs: np.ndarray, wavelength_um: float, distance_um: float, kernel: Kernel,
                      padded_width_um: float) -> np.ndarray:
    s = (wavelength_um * freqs) ** 2
    if kernel is Kernel.ANGULAR:
        propagating = s < 1.0
        # sqrt(1 - s) - 1 written to keep precision for small s
        phase = np.zeros_like(freqs)
        phase[propagating] = -s[propagating] / (1.0 + np.sqrt(1.0 - s[propagating]))
        phase *= 2.0 * math.pi / wavelength_um * distance_um
    else:
        propagating = np.ones_like(freqs, dtype=bool)
        phase = -math.pi * wavelength_um * distance_um * freqs**2

    passband = propagating & (np.abs(freqs) <= band_limit(wavelength_um, distance_um, padded_width_um))
    return np.where(passband, np.exp(1j * phase), 0.0)


def energy_support(field: ComplexField1D, tail: float = SUPPORT_TAIL) -> Tuple[float, float]:
    """Interval holding all but `tail` of the field power"""
    cumulative = np.cumsum(field.intensity)
    if cumulative[-1] <= 0:
        x = field.x_um
        return float(x[0]), float(x[-1])
    cumulative /= cumulative[-1]
    lo = int(np.searchsorted(cumulative, tail / 2))
    hi = int(np.searchsorted(cumulative, 1.0 - tail / 2))
    x = field.x_um
    return float(x[lo]), float(x[min(hi, x.size - 1)])


def quantile_frequency(field: ComplexField1D, tail: float = SPECTRAL_TAIL) -> float:
    """Spatial frequency magnitude enclosing 1 - tail of the spectral power"""
    power = np.abs(fft.fft(field.amplitudes)) ** 2
    freqs = np.abs(fft.fftfreq(field.amplitudes.size, d=field.pitch_um))
    order = np.argsort(freqs, kind="stable")
    cumulative = np.cumsum(power[order])
    if cumulative[-1] <= 0:
        return 0.0
    idx = int(np.searchsorted(cumulative / cumulative[-1], 1.0 - tail))
    return float(freqs[order][min(idx, order.size - 1)])


class Propagator:
    """Propagates one input field at one wavelength to any distance

    The padded input spectrum is computed once, so scanning z costs one
    inverse FFT per distance.
    """

    def __init__(self, field: ComplexField1D, wavelength_nm: float, kernel: str = "angular"):
        if not wavelength_nm > 0:
            raise ParameterDomainError(f"wavelength must be positive, got {wavelength_nm} nm")
        self.field = field
        self.wavelength_um = wavelength_nm / 1000.0
        self.kernel = Kernel(kernel)
        n = len(field)
        self.n_padded = 2 * n
        self.padded_width_um = self.n_padded * field.pitch_um

        padded = np.zeros(self.n_padded, dtype=np.complex128)
        padded[:n] = field.amplitudes
        self.spectrum = fft.fft(padded)
        self.freqs = fft.fftfreq(self.n_padded, d=field.pitch_um)

        self.support_um = energy_support(field)
        self.walkoff_frequency = quantile_frequency(field)

    def check_sampling(self, distance_mm: float):
        """Support plus twice the walk-off must fit inside the grid"""
        walk = self.wavelength_um * abs(distance_mm) * 1000.0 * self.walkoff_frequency
        x = self.field.x_um
        lo, hi = self.support_um
        if lo - walk < x[0] or hi + walk > x[-1]:
            center = x[len(x) // 2]
            half_needed = max(hi + walk - center, center - (lo - walk))
            required = int(math.ceil(2.0 * half_needed / self.field.pitch_um)) + 1
            raise SamplingError(
                f"field support [{lo / 1000:.3f}, {hi / 1000:.3f}] mm plus walk-off {walk / 1000:.3f} mm at "
                f"z = {distance_mm} mm does not fit the grid; use at least {required} points at "
                f"{self.field.pitch_um} um pitch",
                required_points=required,
            )

    def amplitudes_at(self, distance_mm: float) -> np.ndarray:
        if distance_mm == 0:
            return self.field.amplitudes.copy()
        self.check_sampling(distance_mm)
        h = transfer_function(self.freqs, self.wavelength_um, distance_mm * 1000.0, self.kernel,
                              self.padded_width_um)
        return fft.ifft(self.spectrum * h)[: len(self.field)]

    def at(self, distance_mm: float) -> ComplexField1D:
        return self.field.with_amplitudes(self.amplitudes_at(distance_mm), self.field.plane_z_mm + distance_mm)

    def intensity_at(self, distance_mm: float) -> np.ndarray:
        return np.abs(self.amplitudes_at(distance_mm)) ** 2


def propagate(field: ComplexField1D, distance_mm: float, wavelength_nm: float,
              kernel: str = "angular") -> ComplexField1D:
    """Propagate a field by distance_mm (negative distances back-propagate)"""
    if distance_mm == 0:
        return field.with_amplitudes(field.amplitudes.copy())
    return Propagator(field, wavelength_nm, kernel).at(distance_mm)


def rms_width_um(x_um: np.ndarray, intensity: np.ndarray) -> float:
    """Second-moment width of an intensity profile"""
    total = intensity.sum()
    mean = np.sum(x_um * intensity) / total
    return float(math.sqrt(np.sum((x_um - mean) ** 2 * intensity) / total))


def gaussian_rms_width(beam: BeamSpec, distance_mm: float, wavelength_nm: float) -> float:
    """RMS width of the intensity of a Gaussian beam after distance_mm (waist at z = 0)

    sigma(z)^2 = sigma0^2 + (lambda z / (4 pi sigma0))^2
    """
    sigma0 = beam.sigma_um
    spread = (wavelength_nm / 1000.0) * distance_mm * 1000.0 / (4.0 * math.pi * sigma0)
    return math.sqrt(sigma0**2 + spread**2)
