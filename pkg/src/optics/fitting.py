"""
One-parameter fit of the observation distance z
"""
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar

from src.optics.fields import BeamSpec, BiprismSpec, Grid, SpectralDensity
from src.optics.patterns import IntensityPattern, PatternModel
from src.utils.errors import ParameterDomainError, UnidentifiableZError
from src.utils.logging_config import get_logger

logger = get_logger("optics")

FLATNESS_TOLERANCE = 1e-6
Z_TOLERANCE_MM = 1e-3


@dataclass(frozen=True)
class ZFitResult:
    z_best_mm: float
    sse: float
    profile: List[Tuple[float, float]]
    model: IntensityPattern

    def to_dict(self) -> dict:
        return {
            "z_best_mm": round(self.z_best_mm, 4),
            "sse": self.sse,
            "n_evaluations": len(self.profile),
            "profile": [{"z_mm": round(z, 4), "sse": s} for z, s in self.profile],
        }

    def profile_frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.profile, columns=["z_mm", "sse"]).sort_values("z_mm", kind="stable")


def _trapezoid(y: np.ndarray, x: np.ndarray) -> float:
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x))) if x.size > 1 else 0.0


class DistanceObjective:
    """SSE between the measured pattern and the model rescaled to the same integral"""

    def __init__(self, measured: IntensityPattern, model: PatternModel):
        self.measured = measured
        self.model = model
        self.profile: List[Tuple[float, float]] = []

        model_x = model.grid.x_um() * model.magnification
        x = measured.x_um
        self.support = (x >= model_x[0]) & (x <= model_x[-1])
        if np.count_nonzero(self.support) < 2:
            raise ParameterDomainError("measured and model patterns do not overlap")
        self.x = x[self.support]
        self.y = measured.intensity[self.support]
        self.measured_integral = _trapezoid(self.y, self.x)
        if not self.measured_integral > 0:
            raise ParameterDomainError("measured pattern integral must be positive")

    def scaled_model(self, z_mm: float) -> np.ndarray:
        model = self.model.pattern(z_mm).sample(self.x)
        integral = _trapezoid(model, self.x)
        return model * (self.measured_integral / integral) if integral > 0 else model

    def __call__(self, z_mm: float) -> float:
        sse = float(np.sum((self.y - self.scaled_model(z_mm)) ** 2))
        self.profile.append((float(z_mm), sse))
        return sse


def fit_observation_distance(measured: IntensityPattern, beam: BeamSpec, prism: BiprismSpec,
                             spectrum: SpectralDensity, magnification: float,
                             z_range: Tuple[float, float] = (5.0, 120.0), grid: Grid = Grid(),
                             n_coarse: int = 47, kernel: str = "angular", n_jobs: int = 1) -> ZFitResult:
    """Coarse scan over z_range then golden-section refinement around the best point"""
    z_min, z_max = z_range
    if z_min > z_max:
        raise ParameterDomainError(f"empty z range [{z_min}, {z_max}]")
    if z_min < 0:
        raise ParameterDomainError("observation distance must be >= 0")

    model = PatternModel(beam, prism, spectrum, magnification, grid, kernel, n_jobs)
    objective = DistanceObjective(measured, model)

    if z_min == z_max:
        sse = objective(z_min)
        return ZFitResult(z_best_mm=z_min, sse=sse, profile=list(objective.profile), model=model.pattern(z_min))

    if n_coarse < 3:
        raise ParameterDomainError(f"coarse scan needs at least 3 points, got {n_coarse}")
    grid_z = np.linspace(z_min, z_max, n_coarse)
    sse = np.array([objective(z) for z in grid_z])

    top = float(sse.max())
    if top - float(sse.min()) <= FLATNESS_TOLERANCE * max(top, np.finfo(float).tiny):
        raise UnidentifiableZError(
            f"SSE varies by less than {FLATNESS_TOLERANCE:.0e} relative over z in [{z_min}, {z_max}] mm"
        )

    best = int(np.argmin(sse))
    bracketed = 0 < best < n_coarse - 1 and sse[best - 1] > sse[best] < sse[best + 1]
    if bracketed:
        result = minimize_scalar(
            objective,
            bracket=(grid_z[best - 1], grid_z[best], grid_z[best + 1]),
            method="golden",
            options={"xtol": Z_TOLERANCE_MM / max(grid_z[best], 1.0)},
        )
    else:
        # edge or plateau minimum: bounded search over the neighbouring intervals
        low = grid_z[max(best - 1, 0)]
        high = grid_z[min(best + 1, n_coarse - 1)]
        result = minimize_scalar(objective, bounds=(low, high), method="bounded",
                                 options={"xatol": Z_TOLERANCE_MM})

    z_best, sse_best = float(result.x), float(result.fun)
    if sse[best] < sse_best:
        z_best, sse_best = float(grid_z[best]), float(sse[best])

    logger.info(f"Fitted z = {z_best:.3f} mm (SSE {sse_best:.4g}) after {len(objective.profile)} evaluations")
    return ZFitResult(z_best_mm=z_best, sse=sse_best, profile=list(objective.profile), model=model.pattern(z_best))


def overlay_frame(measured: IntensityPattern, result: ZFitResult) -> pd.DataFrame:
    """Measured samples next to the best model rescaled to the same integral"""
    x = measured.x_um
    model = result.model.sample(x)
    inside = (x >= result.model.x_um[0]) & (x <= result.model.x_um[-1])
    model_integral = _trapezoid(model[inside], x[inside])
    measured_integral = _trapezoid(measured.intensity[inside], x[inside])
    scale = measured_integral / model_integral if model_integral > 0 else 1.0
    return pd.DataFrame({"x_um": x, "measured": measured.intensity, "model": model * scale})
