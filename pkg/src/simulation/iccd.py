"""
ICCD single-photon detection
Samples photon impacts from a fringe pattern snapshot by snapshot, bins them
to pixels and writes the cumulative build-up frames
"""
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.stats import truncnorm

from src.artifacts.csv_io import write_frame_totals
from src.artifacts.pgm import write_pgm
from src.optics.fields import FWHM_TO_SIGMA
from src.optics.patterns import IntensityPattern
from src.utils.errors import ArtifactError, ParameterDomainError, SupportError
from src.utils.logging_config import get_logger

logger = get_logger("iccd")


@dataclass(frozen=True)
class CameraSpec:
    pixel_pitch_um: float = 25.0
    n_cols: int = 512
    n_rows: int = 256
    photons_per_snapshot_mean: float = 13.6
    rng_seed: int = 0
    # vertical beam envelope on the sensor; beam FWHM times magnification
    vertical_fwhm_um: float = 12500.0

    def __post_init__(self):
        if not self.pixel_pitch_um > 0:
            raise ParameterDomainError(f"pixel pitch must be positive, got {self.pixel_pitch_um} um")
        if self.n_cols < 1 or self.n_rows < 1:
            raise ParameterDomainError(f"sensor needs at least 1 x 1 pixels, got {self.n_rows} x {self.n_cols}")
        if self.photons_per_snapshot_mean < 0:
            raise ParameterDomainError(f"photon rate must be >= 0, got {self.photons_per_snapshot_mean}")
        if not self.vertical_fwhm_um > 0:
            raise ParameterDomainError(f"vertical FWHM must be positive, got {self.vertical_fwhm_um} um")

    @property
    def width_um(self) -> float:
        return self.n_cols * self.pixel_pitch_um

    @property
    def height_um(self) -> float:
        return self.n_rows * self.pixel_pitch_um

    def column_edges_um(self) -> np.ndarray:
        return (np.arange(self.n_cols + 1) - self.n_cols / 2.0) * self.pixel_pitch_um


@dataclass(frozen=True)
class DetectionImage:
    counts: np.ndarray
    n_snapshots: int

    def __post_init__(self):
        if self.counts.ndim != 2:
            raise ParameterDomainError("detection image must be 2D (rows x cols)")
        if np.any(self.counts < 0):
            raise ParameterDomainError("pixel counts must be >= 0")

    @property
    def total_counts(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def empty(cls, n_rows: int, n_cols: int) -> "DetectionImage":
        return cls(counts=np.zeros((n_rows, n_cols), dtype=np.int64), n_snapshots=0)


@dataclass(frozen=True)
class SnapshotSeries:
    """Columnar impact list in snapshot order"""
    snapshot: np.ndarray
    x_um: np.ndarray
    y_um: np.ndarray
    col: np.ndarray
    row: np.ndarray
    n_snapshots: int
    n_rows: int
    n_cols: int

    def __len__(self) -> int:
        return int(self.snapshot.size)

    @property
    def counts_per_snapshot(self) -> np.ndarray:
        return np.bincount(self.snapshot, minlength=self.n_snapshots).astype(np.int64)[: self.n_snapshots]

    def cumulative_image(self, n_snapshots: Optional[int] = None) -> DetectionImage:
        """Image accumulated over the first n_snapshots snapshots"""
        n = self.n_snapshots if n_snapshots is None else int(n_snapshots)
        if not 0 <= n <= self.n_snapshots:
            raise ParameterDomainError(f"snapshot count must lie in [0, {self.n_snapshots}], got {n}")
        keep = int(np.searchsorted(self.snapshot, n, side="left"))
        flat = np.bincount(self.row[:keep] * self.n_cols + self.col[:keep], minlength=self.n_rows * self.n_cols)
        return DetectionImage(counts=flat.reshape(self.n_rows, self.n_cols).astype(np.int64), n_snapshots=n)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "snapshot": self.snapshot,
            "x_um": self.x_um,
            "y_um": self.y_um,
            "col": self.col,
            "row": self.row,
        })


def _sensor_cdf(pattern: IntensityPattern, camera: CameraSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Sample positions and normalised cumulative trapezoid of the pattern over the sensor width"""
    half = camera.width_um / 2.0
    x = pattern.x_um
    if x[0] > -half or x[-1] < half:
        raise SupportError(
            f"pattern spans [{x[0]:.1f}, {x[-1]:.1f}] um, narrower than the sensor [{-half:.1f}, {half:.1f}] um"
        )
    inside = (x > -half) & (x < half)
    xs = np.concatenate([[-half], x[inside], [half]])
    ys = pattern.sample(xs)
    cumulative = np.concatenate([[0.0], np.cumsum(0.5 * (ys[1:] + ys[:-1]) * np.diff(xs))])
    if not cumulative[-1] > 0:
        raise SupportError("pattern carries no intensity over the sensor")
    return xs, cumulative / cumulative[-1]


def column_probabilities(pattern: IntensityPattern, camera: CameraSpec) -> np.ndarray:
    """Probability that an impact lands in each column"""
    xs, cdf = _sensor_cdf(pattern, camera)
    return np.diff(np.interp(camera.column_edges_um(), xs, cdf))


def sample_impacts(pattern: IntensityPattern, camera: CameraSpec,
                   n_snapshots: int) -> Tuple[SnapshotSeries, DetectionImage]:
    """Poisson number of impacts per snapshot; x by inverse CDF of the pattern, y from the vertical envelope"""
    if n_snapshots < 0:
        raise ParameterDomainError(f"n_snapshots must be >= 0, got {n_snapshots}")
    xs, cdf = _sensor_cdf(pattern, camera)
    rng = np.random.default_rng(camera.rng_seed)

    per_snapshot = rng.poisson(camera.photons_per_snapshot_mean, n_snapshots)
    snapshot = np.repeat(np.arange(n_snapshots, dtype=np.int64), per_snapshot)
    total = int(snapshot.size)

    # cdf is non-decreasing; flat stretches (zero intensity) are never hit
    x = np.interp(rng.random(total), cdf, xs)
    sigma = camera.vertical_fwhm_um * FWHM_TO_SIGMA
    half_height = camera.height_um / 2.0
    y = truncnorm.rvs(-half_height / sigma, half_height / sigma, loc=0.0, scale=sigma, size=total,
                      random_state=rng)

    col = np.clip(np.floor((x + camera.width_um / 2.0) / camera.pixel_pitch_um), 0, camera.n_cols - 1).astype(np.int64)
    row = np.clip(np.floor((y + half_height) / camera.pixel_pitch_um), 0, camera.n_rows - 1).astype(np.int64)

    series = SnapshotSeries(
        snapshot=snapshot,
        x_um=x,
        y_um=np.asarray(y, dtype=float),
        col=col,
        row=row,
        n_snapshots=n_snapshots,
        n_rows=camera.n_rows,
        n_cols=camera.n_cols,
    )
    image = series.cumulative_image()
    logger.info(f"Sampled {total:,} impacts over {n_snapshots:,} snapshots")
    return series, image


def bin_columns(image: DetectionImage) -> np.ndarray:
    """Column sums of the image"""
    return image.counts.sum(axis=0)


def calibrated_rate(total_counts: int, n_snapshots: int) -> float:
    """Per-snapshot photon rate reproducing a recorded total"""
    if n_snapshots < 1:
        raise ParameterDomainError(f"n_snapshots must be >= 1, got {n_snapshots}")
    if total_counts < 0:
        raise ParameterDomainError(f"total counts must be >= 0, got {total_counts}")
    return total_counts / n_snapshots


def buildup_checkpoints(n_snapshots: int, stride: int) -> List[int]:
    """Snapshot counts after which a frame is written; always ends with n_snapshots"""
    if stride < 1:
        raise ParameterDomainError(f"stride must be >= 1, got {stride}")
    points = list(range(stride, n_snapshots + 1, stride))
    if not points or points[-1] != n_snapshots:
        points.append(n_snapshots)
    return points


def emit_buildup_frames(series: SnapshotSeries, stride: int, directory: Path) -> pd.DataFrame:
    """Write cumulative frames as numbered PGM files plus frame_totals.csv

    Returns the frame totals table.
    """
    checkpoints = buildup_checkpoints(series.n_snapshots, stride)
    directory = Path(directory)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise ArtifactError(f"cannot create frame directory {directory}: {e}") from e

    width = max(4, int(math.ceil(math.log10(len(checkpoints) + 1))))
    rows = []
    for frame_index, n in enumerate(checkpoints, start=1):
        image = series.cumulative_image(n)
        write_pgm(directory / f"frame_{frame_index:0{width}d}.pgm", image.counts)
        rows.append({"frame_index": frame_index, "snapshots": n, "cumulative_counts": image.total_counts})

    totals = pd.DataFrame(rows, columns=["frame_index", "snapshots", "cumulative_counts"])
    write_frame_totals(totals, directory / "frame_totals.csv")
    logger.info(f"Wrote {len(checkpoints)} build-up frames to {directory}")
    return totals
