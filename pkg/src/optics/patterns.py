"""
Fringe patterns behind the biprism: incoherent polychromatic sum, eyepiece
magnification and fringe metrics
"""
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.optimize import brentq
from scipy.signal import find_peaks

from src.optics.fields import (
    BeamSpec,
    BiprismSpec,
    Grid,
    SpectralDensity,
    apply_biprism,
    gaussian_input,
)
from src.optics.propagation import Propagator
from src.utils.errors import NoFringeError, ParameterDomainError
from src.utils.logging_config import get_logger

logger = get_logger("optics")

# extrema must stand out by this fraction of the pattern's dynamic range
DEFAULT_PROMINENCE = 0.01
# finer grid on which the biprism mask is applied before resampling
MASK_OVERSAMPLE = 8


@dataclass(frozen=True)
class IntensityPattern:
    pitch_um: float
    intensity: np.ndarray
    plane_z_mm: float = 0.0
    magnification: float = 1.0
    x0_um: Optional[float] = None

    def __post_init__(self):
        intensity = np.asarray(self.intensity, dtype=float)
        if intensity.ndim != 1 or intensity.size < 2:
            raise ParameterDomainError("a pattern needs at least 2 samples")
        if not self.pitch_um > 0:
            raise ParameterDomainError(f"pattern pitch must be positive, got {self.pitch_um}")
        if np.any(intensity < 0):
            raise ParameterDomainError("intensity must be >= 0 everywhere")
        object.__setattr__(self, "intensity", intensity)
        if self.x0_um is None:
            object.__setattr__(self, "x0_um", -(intensity.size // 2) * self.pitch_um)

    def __len__(self) -> int:
        return int(self.intensity.size)

    @property
    def x_um(self) -> np.ndarray:
        return self.x0_um + np.arange(self.intensity.size) * self.pitch_um

    @property
    def integral(self) -> float:
        return float(np.sum(self.intensity) * self.pitch_um)

    @property
    def centroid_um(self) -> float:
        return float(np.sum(self.x_um * self.intensity) / np.sum(self.intensity))

    def magnified(self, magnification: float) -> "IntensityPattern":
        """Ideal transverse magnifier: x -> M x, I -> I / M"""
        if not magnification > 0:
            raise ParameterDomainError(f"magnification must be positive, got {magnification}")
        return IntensityPattern(
            pitch_um=self.pitch_um * magnification,
            intensity=self.intensity / magnification,
            plane_z_mm=self.plane_z_mm,
            magnification=self.magnification * magnification,
            x0_um=self.x0_um * magnification,
        )

    def sample(self, x_um: np.ndarray) -> np.ndarray:
        """Linear interpolation, zero outside the pattern"""
        return np.interp(x_um, self.x_um, self.intensity, left=0.0, right=0.0)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"x_um": self.x_um, "intensity": self.intensity})


class PatternModel:
    """Polychromatic fringe pattern as a function of the observation distance

    One Propagator per wavelength holds the biprism output spectrum, so a z
    scan never repeats the forward transform.
    """

    def __init__(self, beam: BeamSpec, prism: BiprismSpec, spectrum: SpectralDensity,
                 magnification: float = 1.0, grid: Grid = Grid(), kernel: str = "angular", n_jobs: int = 1):
        if not magnification > 0:
            raise ParameterDomainError(f"magnification must be positive, got {magnification}")
        self.beam = beam
        self.prism = prism
        self.spectrum = spectrum
        self.magnification = magnification
        self.grid = grid
        self.n_jobs = n_jobs

        source = gaussian_input(beam, grid)
        self.propagators = [
            Propagator(apply_biprism(source, prism, wavelength, MASK_OVERSAMPLE), wavelength, kernel)
            for wavelength in spectrum.wavelengths_nm
        ]

    def _intensities(self, z_mm: float) -> List[np.ndarray]:
        if self.n_jobs == 1 or len(self.propagators) == 1:
            return [p.intensity_at(z_mm) for p in self.propagators]
        # numpy FFTs release the GIL; threads avoid copying the spectra to workers
        return Parallel(n_jobs=self.n_jobs, prefer="threads")(
            delayed(p.intensity_at)(z_mm) for p in self.propagators
        )

    def pattern(self, z_mm: float) -> IntensityPattern:
        intensity = np.zeros(self.grid.n_points)
        # fixed reduction order keeps the sum independent of n_jobs
        for weight, single in zip(self.spectrum.weights, self._intensities(z_mm)):
            intensity += weight * single
        pattern = IntensityPattern(
            pitch_um=self.grid.pitch_um,
            intensity=intensity,
            plane_z_mm=z_mm,
            magnification=1.0,
            x0_um=self.grid.x0_um,
        )
        return pattern.magnified(self.magnification) if self.magnification != 1.0 else pattern


def polychromatic_pattern(beam: BeamSpec, prism: BiprismSpec, spectrum: SpectralDensity, z_mm: float,
                          magnification: float = 1.0, grid: Grid = Grid(), kernel: str = "angular",
                          n_jobs: int = 1) -> IntensityPattern:
    """Incoherent sum over the spectrum of the biprism pattern at distance z_mm"""
    pattern = PatternModel(beam, prism, spectrum, magnification, grid, kernel, n_jobs).pattern(z_mm)
    logger.debug(
        f"Pattern at z = {z_mm} mm over {len(spectrum)} wavelengths, magnification {magnification}"
    )
    return pattern


def monochromatic_pattern(beam: BeamSpec, prism: BiprismSpec, z_mm: float, wavelength_nm: Optional[float] = None,
                          magnification: float = 1.0, grid: Grid = Grid(), kernel: str = "angular") -> IntensityPattern:
    wavelength = beam.wavelength_ref_nm if wavelength_nm is None else wavelength_nm
    return polychromatic_pattern(beam, prism, SpectralDensity.line(wavelength), z_mm, magnification, grid, kernel)


@dataclass(frozen=True)
class FringeMetrics:
    fringe_spacing_um: float
    central_visibility: float
    per_fringe_visibility: List[float]
    pair_midpoints_um: List[float]
    maxima_um: List[float]
    minima_um: List[float]
    axis_um: float
    central_index: int = field(default=0)

    def to_dict(self) -> dict:
        return {
            "fringe_spacing_um": round(self.fringe_spacing_um, 4),
            "central_visibility": round(self.central_visibility, 4),
            "per_fringe_visibility": [round(v, 4) for v in self.per_fringe_visibility],
            "pair_midpoints_um": [round(x, 3) for x in self.pair_midpoints_um],
            "n_maxima": len(self.maxima_um),
            "n_minima": len(self.minima_um),
            "axis_um": round(self.axis_um, 3),
        }

    def off_axis_visibilities(self) -> List[float]:
        """Visibilities of the pairs on the positive side of the axis, nearest first"""
        side = [
            (mid - self.axis_um, v)
            for mid, v in zip(self.pair_midpoints_um, self.per_fringe_visibility)
            if mid > self.axis_um
        ]
        return [v for _, v in sorted(side)]


def _refine_extremum(x: np.ndarray, y: np.ndarray, i: int) -> Tuple[float, float]:
    """Vertex of the parabola through samples i-1, i, i+1"""
    if i <= 0 or i >= y.size - 1:
        return float(x[i]), float(y[i])
    y0, y1, y2 = y[i - 1], y[i], y[i + 1]
    denom = y0 - 2.0 * y1 + y2
    if denom == 0:
        return float(x[i]), float(y1)
    shift = 0.5 * (y0 - y2) / denom
    pitch = x[i + 1] - x[i]
    return float(x[i] + shift * pitch), float(y1 - 0.25 * (y0 - y2) * shift)


def fringe_metrics(pattern: IntensityPattern, axis_um: Optional[float] = None,
                   prominence: float = DEFAULT_PROMINENCE) -> FringeMetrics:
    """Fringe spacing and visibilities from the extrema of a pattern

    The symmetry axis defaults to the intensity centroid; the central
    visibility belongs to the adjacent extremum pair whose midpoint lies
    closest to it.
    """
    x = pattern.x_um
    y = pattern.intensity
    span = float(y.max() - y.min())
    if span <= 0:
        raise NoFringeError("pattern is constant")

    max_idx, _ = find_peaks(y, prominence=prominence * span)
    min_idx, _ = find_peaks(-y, prominence=prominence * span)
    if max_idx.size + min_idx.size < 3:
        raise NoFringeError(f"pattern has {max_idx.size + min_idx.size} extrema, at least 3 are needed")

    extrema = sorted(
        [(*_refine_extremum(x, y, i), True) for i in max_idx]
        + [(*_refine_extremum(x, y, i), False) for i in min_idx]
    )
    positions = np.array([e[0] for e in extrema])
    values = np.maximum([e[1] for e in extrema], 0.0)
    is_max = [e[2] for e in extrema]

    visibilities = []
    midpoints = []
    for a in range(len(extrema) - 1):
        if is_max[a] == is_max[a + 1]:
            continue
        i_max, i_min = (values[a], values[a + 1]) if is_max[a] else (values[a + 1], values[a])
        total = i_max + i_min
        visibilities.append(float((i_max - i_min) / total) if total > 0 else 0.0)
        midpoints.append(float(0.5 * (positions[a] + positions[a + 1])))
    if not visibilities:
        raise NoFringeError("no adjacent maximum/minimum pair found")

    axis = pattern.centroid_um if axis_um is None else axis_um
    central = int(np.argmin(np.abs(np.array(midpoints) - axis)))

    maxima = positions[np.array(is_max)]
    spacing = float(np.median(np.diff(maxima))) if maxima.size >= 2 else 2.0 * float(
        np.median(np.abs(np.diff(positions)))
    )

    return FringeMetrics(
        fringe_spacing_um=spacing,
        central_visibility=visibilities[central],
        per_fringe_visibility=visibilities,
        pair_midpoints_um=midpoints,
        maxima_um=maxima.tolist(),
        minima_um=positions[~np.array(is_max)].tolist(),
        axis_um=axis,
        central_index=central,
    )


def spectral_width_for_visibility(target: float, beam: BeamSpec, prism: BiprismSpec, z_mm: float,
                                  center_nm: float = 670.0, n_samples: int = 31, span_sigma: float = 2.0,
                                  magnification: float = 1.0, grid: Grid = Grid(), kernel: str = "angular",
                                  fwhm_bracket_nm: Tuple[float, float] = (1.0, 600.0),
                                  n_jobs: int = 1) -> float:
    """Gaussian spectral FWHM whose pattern has the requested central visibility"""
    if not 0.0 < target < 1.0:
        raise ParameterDomainError(f"target visibility must lie in (0, 1), got {target}")

    def mismatch(fwhm_nm: float) -> float:
        spectrum = SpectralDensity.gaussian(center_nm, fwhm_nm, n_samples, span_sigma)
        pattern = polychromatic_pattern(beam, prism, spectrum, z_mm, magnification, grid, kernel, n_jobs)
        return fringe_metrics(pattern).central_visibility - target

    low, high = fwhm_bracket_nm
    f_low, f_high = mismatch(low), mismatch(high)
    if f_low * f_high > 0:
        raise ParameterDomainError(
            f"visibility {target} is not reached for spectral FWHM in [{low}, {high}] nm "
            f"(visibility spans {f_high + target:.4f} to {f_low + target:.4f})"
        )
    fwhm = brentq(mismatch, low, high, xtol=1e-3)
    logger.info(f"Spectral FWHM {fwhm:.2f} nm gives central visibility {target} at z = {z_mm} mm")
    return float(fwhm)


def extruded_image(pattern: IntensityPattern, n_cols: int, n_rows: int, pixel_um: float,
                   maxval: int = 65535) -> np.ndarray:
    """Pattern resampled at the camera column centres and repeated over every row"""
    if n_cols < 1 or n_rows < 1:
        raise ParameterDomainError("image needs at least one row and one column")
    centers = (np.arange(n_cols) - (n_cols - 1) / 2.0) * pixel_um
    row = pattern.sample(centers)
    peak = row.max()
    scaled = np.zeros(n_cols) if peak <= 0 else row / peak * maxval
    return np.tile(np.rint(scaled).astype(np.int64), (n_rows, 1))
