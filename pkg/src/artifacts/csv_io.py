"""
CSV artifacts with key=value sidecar metadata
"""
from pathlib import Path
from typing import Dict, Iterable, Optional

import numpy as np
import pandas as pd
from dotenv import dotenv_values

from src.analysis.histogram import DelayHistogram
from src.optics.patterns import IntensityPattern
from src.simulation.emitter import EmissionEvents, Origin
from src.simulation.whichpath import Channel, TimestampStream
from src.utils.errors import ArtifactError
from src.utils.logging_config import get_logger

logger = get_logger("pipeline")

SIDECAR_SUFFIX = ".meta"
TIME_FORMAT = "%.3f"


def sidecar_path(path: Path) -> Path:
    path = Path(path)
    return path.with_name(path.name + SIDECAR_SUFFIX)


def write_sidecar(path: Path, metadata: Dict) -> Path:
    """Write key=value lines next to `path`; None values are written empty"""
    target = sidecar_path(path)
    lines = [f"{key}={'' if value is None else value}" for key, value in metadata.items()]
    try:
        target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as e:
        raise ArtifactError(f"cannot write {target}: {e}") from e
    return target


def read_sidecar(path: Path) -> Dict[str, str]:
    target = sidecar_path(path)
    if not target.exists():
        return {}
    return {key: value for key, value in dotenv_values(target).items() if value is not None}


def _write_frame(df: pd.DataFrame, path: Path, float_format: Optional[str] = None) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False, float_format=float_format, encoding="utf-8", lineterminator="\n")
    except OSError as e:
        raise ArtifactError(f"cannot write {path}: {e}") from e
    logger.debug(f"Wrote {len(df):,} rows to {path}")
    return path


def _read_frame(path: Path, columns: Iterable[str]) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"file not found: {path}")
    try:
        df = pd.read_csv(path, encoding="utf-8")
    except pd.errors.EmptyDataError as e:
        raise ArtifactError(f"{path} is empty") from e
    except (pd.errors.ParserError, UnicodeDecodeError) as e:
        raise ArtifactError(f"cannot parse {path}: {e}") from e

    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise ArtifactError(f"{path} lacks columns {missing}; found {list(df.columns)}")
    if df[list(columns)].isna().any().any():
        raise ArtifactError(f"{path} has empty or non-numeric cells")
    return df


def write_events(events: EmissionEvents, path: Path) -> Path:
    """pulse_index,time_ns,origin"""
    return _write_frame(events.to_frame(), path, TIME_FORMAT)


def read_events(path: Path, rep_period_ns: float, n_pulses: Optional[int] = None) -> EmissionEvents:
    df = _read_frame(path, ["pulse_index", "time_ns", "origin"])
    labels = df["origin"].astype(str)
    unknown = sorted(set(labels) - {Origin.SIGNAL.label, Origin.BACKGROUND.label})
    if unknown:
        raise ArtifactError(f"{path}: unknown origin labels {unknown}")
    pulses = df["pulse_index"].to_numpy(dtype=np.int64)
    if n_pulses is None:
        n_pulses = int(pulses.max()) + 1 if pulses.size else 0
    return EmissionEvents(
        pulse_index=pulses,
        time_ns=df["time_ns"].to_numpy(dtype=float),
        origin=np.where(labels == Origin.SIGNAL.label, Origin.SIGNAL, Origin.BACKGROUND).astype(np.int8),
        n_pulses=int(n_pulses),
        rep_period_ns=rep_period_ns,
    )


def write_timestamps(stream: TimestampStream, path: Path) -> Path:
    """channel,time_ns,pulse_index plus a sidecar with n_triggers, rep_period_ns, total_time_s, seed"""
    written = _write_frame(stream.to_frame(), path, TIME_FORMAT)
    write_sidecar(path, stream.metadata())
    return written


def read_timestamps(path: Path, rep_period_ns: Optional[float] = None,
                    n_triggers: Optional[int] = None) -> TimestampStream:
    """Read a timestamp CSV; the sidecar supplies n_triggers and the period unless given"""
    df = _read_frame(path, ["channel", "time_ns", "pulse_index"])
    meta = read_sidecar(path)
    try:
        period = float(meta["rep_period_ns"]) if rep_period_ns is None else float(rep_period_ns)
        triggers = int(meta["n_triggers"]) if n_triggers is None else int(n_triggers)
        seed = int(meta["seed"]) if meta.get("seed") else None
    except KeyError as e:
        raise ArtifactError(f"{path}: metadata {e.args[0]} missing from sidecar and not given") from e
    except ValueError as e:
        raise ArtifactError(f"{path}: bad sidecar value: {e}") from e

    channel = df["channel"].to_numpy(dtype=np.int64)
    if not np.isin(channel, [Channel.PATH1, Channel.PATH2]).all():
        raise ArtifactError(f"{path}: channel must be 1 or 2")
    order = np.argsort(df["time_ns"].to_numpy(dtype=float), kind="stable")
    return TimestampStream(
        channel=channel[order].astype(np.int8),
        time_ns=df["time_ns"].to_numpy(dtype=float)[order],
        pulse_index=df["pulse_index"].to_numpy(dtype=np.int64)[order],
        n_triggers=triggers,
        rep_period_ns=period,
        seed=seed,
    )


def write_histogram(hist: DelayHistogram, path: Path) -> Path:
    """delay_ns,count plus a sidecar with the binning"""
    written = _write_frame(hist.to_frame(), path, "%.6f")
    write_sidecar(path, {"bin_width_ns": repr(hist.bin_width_ns), "rep_period_ns": repr(hist.rep_period_ns)})
    return written


def read_histogram(path: Path, rep_period_ns: Optional[float] = None) -> DelayHistogram:
    df = _read_frame(path, ["delay_ns", "count"])
    if len(df) < 2:
        raise ArtifactError(f"{path}: a histogram needs at least 2 bins")
    meta = read_sidecar(path)
    centers = df["delay_ns"].to_numpy(dtype=float)
    width = float(meta["bin_width_ns"]) if "bin_width_ns" in meta else float(np.median(np.diff(centers)))
    if rep_period_ns is None:
        if "rep_period_ns" not in meta:
            raise ArtifactError(f"{path}: repetition period missing from sidecar and not given")
        rep_period_ns = float(meta["rep_period_ns"])
    return DelayHistogram(
        bin_width_ns=width,
        centers_ns=centers,
        counts=df["count"].to_numpy(dtype=np.int64),
        rep_period_ns=float(rep_period_ns),
    )


def write_pattern(pattern: IntensityPattern, path: Path) -> Path:
    """x_um,intensity plus a sidecar with plane and magnification"""
    written = _write_frame(pattern.to_frame(), path, "%.10g")
    write_sidecar(path, {"plane_z_mm": repr(pattern.plane_z_mm), "magnification": repr(pattern.magnification)})
    return written


def read_pattern(path: Path) -> IntensityPattern:
    """Read x_um,intensity; samples must be equally spaced and increasing"""
    df = _read_frame(path, ["x_um", "intensity"])
    if len(df) < 2:
        raise ArtifactError(f"{path}: a profile needs at least 2 samples")
    x = df["x_um"].to_numpy(dtype=float)
    steps = np.diff(x)
    pitch = float(np.mean(steps))
    if pitch <= 0 or not np.allclose(steps, pitch, rtol=1e-6, atol=1e-9):
        raise ArtifactError(f"{path}: x_um must be equally spaced and increasing")
    intensity = df["intensity"].to_numpy(dtype=float)
    if np.any(intensity < 0):
        raise ArtifactError(f"{path}: intensity must be >= 0")
    meta = read_sidecar(path)
    return IntensityPattern(
        pitch_um=pitch,
        intensity=intensity,
        plane_z_mm=float(meta.get("plane_z_mm", 0.0)),
        magnification=float(meta.get("magnification", 1.0)),
        x0_um=float(x[0]),
    )


def write_profile(profile: np.ndarray, pixel_um: float, path: Path) -> Path:
    """Column profile as x_um,intensity (column centres in camera coordinates)"""
    n_cols = profile.size
    centers = (np.arange(n_cols) - (n_cols - 1) / 2.0) * pixel_um
    df = pd.DataFrame({"x_um": centers, "intensity": profile.astype(np.int64)})
    return _write_frame(df, path, "%.3f")


def write_impacts(df: pd.DataFrame, path: Path) -> Path:
    """snapshot,x_um,y_um,col,row"""
    return _write_frame(df[["snapshot", "x_um", "y_um", "col", "row"]], path, "%.3f")


def write_frame_totals(totals: pd.DataFrame, path: Path) -> Path:
    return _write_frame(totals, path)


def write_table(df: pd.DataFrame, path: Path, float_format: Optional[str] = None) -> Path:
    return _write_frame(df, path, float_format)
