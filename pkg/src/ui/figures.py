"""
Interactive HTML figures for the --plot flag
"""
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import plotly.graph_objects as go

from src.analysis.histogram import DelayHistogram
from src.analysis.peak_fit import PeakFit, bin_profile
from src.optics.patterns import FringeMetrics, IntensityPattern
from src.utils.errors import ArtifactError

TEMPLATE = "plotly_white"


def save_figure(fig: go.Figure, path: Path) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        fig.write_html(str(path), include_plotlyjs="cdn", full_html=True)
    except OSError as e:
        raise ArtifactError(f"cannot write figure {path}: {e}") from e
    return path


def histogram_figure(hist: DelayHistogram, fits: Optional[Sequence[PeakFit]] = None) -> go.Figure:
    """Delay histogram with the fitted exponential peaks"""
    fig = go.Figure()
    fig.add_trace(go.Bar(x=hist.centers_ns, y=hist.counts, name="counts",
                         marker_color="#4C78A8", width=hist.bin_width_ns))
    if fits:
        model = np.zeros(hist.counts.size)
        per_bin = hist.bin_width_ns / hist.rep_period_ns
        for fit in fits:
            model += fit.amplitude * bin_profile(hist.centers_ns, hist.bin_width_ns, fit.peak_center,
                                                 fit.fitted_lifetime)
            in_region = np.abs(hist.centers_ns - fit.peak_center) < hist.rep_period_ns / 2
            model[in_region] += fit.floor_area * per_bin
        fig.add_trace(go.Scatter(x=hist.centers_ns, y=model, mode="lines", name="fit",
                                 line=dict(color="#E45756")))
    fig.update_layout(title="Start-stop delays", xaxis_title="delay (ns)", yaxis_title="counts per bin",
                      template=TEMPLATE, bargap=0)
    return fig


def pattern_figure(pattern: IntensityPattern, metrics: Optional[FringeMetrics] = None,
                   model: Optional[IntensityPattern] = None) -> go.Figure:
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=pattern.x_um, y=pattern.intensity, mode="lines", name="pattern"))
    if model is not None:
        fig.add_trace(go.Scatter(x=model.x_um, y=model.intensity, mode="lines", name="model",
                                 line=dict(dash="dash")))
    if metrics is not None:
        fig.add_trace(go.Scatter(x=metrics.maxima_um, y=pattern.sample(np.asarray(metrics.maxima_um)),
                                 mode="markers", name="maxima", marker=dict(symbol="triangle-up")))
        fig.add_vline(x=metrics.axis_um, line_dash="dot", line_color="gray")
        title = f"Fringes: spacing {metrics.fringe_spacing_um:.1f} um, V = {metrics.central_visibility:.3f}"
    else:
        title = "Fringe pattern"
    fig.update_layout(title=title, xaxis_title="x (um)", yaxis_title="intensity", template=TEMPLATE)
    return fig


def overlay_figure(overlay: pd.DataFrame, z_best_mm: float) -> go.Figure:
    """Measured profile against the best-fit model"""
    fig = go.Figure()
    fig.add_trace(go.Scatter(x=overlay["x_um"], y=overlay["measured"], mode="lines", name="measured"))
    fig.add_trace(go.Scatter(x=overlay["x_um"], y=overlay["model"], mode="lines", name="model"))
    fig.update_layout(title=f"Best fit at z = {z_best_mm:.2f} mm", xaxis_title="x (um)",
                      yaxis_title="counts", template=TEMPLATE)
    return fig


def sse_profile_figure(profile: pd.DataFrame, z_best_mm: float) -> go.Figure:
    fig = go.Figure(go.Scatter(x=profile["z_mm"], y=profile["sse"], mode="lines+markers", name="SSE"))
    fig.add_vline(x=z_best_mm, line_dash="dot", line_color="#E45756")
    fig.update_layout(title="SSE against observation distance", xaxis_title="z (mm)", yaxis_title="SSE",
                      yaxis_type="log", template=TEMPLATE)
    return fig


def buildup_figure(totals: pd.DataFrame) -> go.Figure:
    fig = go.Figure(go.Scatter(x=totals["snapshots"], y=totals["cumulative_counts"], mode="lines+markers"))
    fig.update_layout(title="Detected photons during build-up", xaxis_title="snapshots",
                      yaxis_title="cumulative counts", template=TEMPLATE)
    return fig
