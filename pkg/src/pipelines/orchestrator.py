"""
Experiment orchestrator: runs each command as a sequence of named stages
and writes its artifacts under the output directory
"""
from contextlib import contextmanager
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from joblib import Parallel, delayed

from src.analysis.coincidence import (
    alpha_from_stream,
    compute_alpha,
    count_gated,
    summarize_alphas,
    triggers_from_counting_time,
)
from src.analysis.histogram import DelayHistogram, delay_histogram
from src.analysis.peak_fit import fit_peaks, gated_zero_delay_area, lifetime_summary, zero_delay_fit
from src.artifacts.csv_io import (
    read_histogram,
    read_pattern,
    read_sidecar,
    read_timestamps,
    write_events,
    write_histogram,
    write_impacts,
    write_pattern,
    write_profile,
    write_table,
    write_timestamps,
)
from src.artifacts.pgm import write_pgm
from src.artifacts.reports import write_report
from src.optics.fitting import fit_observation_distance, overlay_frame
from src.optics.patterns import extruded_image, fringe_metrics, polychromatic_pattern, spectral_width_for_visibility
from src.simulation.emitter import EmissionEvents, generate_detections, generate_pulse_train
from src.simulation.iccd import bin_columns, calibrated_rate, emit_buildup_frames, sample_impacts
from src.simulation.whichpath import TimestampStream, split_and_detect
from src.ui import figures
from src.utils.config import RunConfig
from src.utils.errors import (
    ArtifactError,
    BiprismError,
    FitFailureError,
    InsufficientDataError,
    ParameterDomainError,
)
from src.utils.logging_config import RunLogger, get_logger

logger = get_logger("pipeline")

DEFAULT_DETECTIONS_PER_RUN = 100_000


def _simulate_run(config: RunConfig, run_index: int, n_detections: Optional[int],
                  n_pulses: Optional[int]) -> Tuple[EmissionEvents, TimestampStream]:
    model = config.emitter_model(run_index)
    if n_pulses is not None:
        events = generate_pulse_train(model, n_pulses)
    else:
        events = generate_detections(model, n_detections)
    return events, split_and_detect(events, config.split_ratio, config.seed_for("split", run_index))


class ExperimentOrchestrator:
    """Runs the pipelines behind each CLI command"""

    def __init__(self, config: RunConfig, plot: bool = False):
        self.config = config
        self.plot = plot
        self.output_dir = config.output_dir
        self.run_logger = RunLogger("pipeline")
        self.artifacts: List[Path] = []

    @contextmanager
    def stage(self, name: str):
        """Tag any toolkit error raised inside the block with the stage name"""
        try:
            yield
        except BiprismError as e:
            if e.stage is None:
                e.stage = name
            self.run_logger.log_stage(name, "failed", str(e))
            raise
        self.run_logger.log_stage(name, "done")

    def _record(self, path: Path, kind: str) -> Path:
        self.artifacts.append(Path(path))
        self.run_logger.log_artifact(path, kind)
        return path

    def _out(self, name: str) -> Path:
        return self.output_dir / name

    def _result(self, command: str, **payload) -> Dict:
        return {"success": True, "command": command, "artifacts": [str(p) for p in self.artifacts], **payload}

    # which-path statistics

    def run_whichpath(self, runs: int = 1, detections_per_run: Optional[int] = None,
                      n_pulses: Optional[int] = None) -> Dict:
        """Simulate `runs` independent runs, then alpha per run, batch alpha, delays and peak fits"""
        if runs < 1:
            raise ParameterDomainError(f"runs must be >= 1, got {runs}")
        if n_pulses is None and detections_per_run is None:
            detections_per_run = DEFAULT_DETECTIONS_PER_RUN
        self.run_logger.log_run("whichpath", {
            "runs": runs, "detections_per_run": detections_per_run, "n_pulses": n_pulses,
            "source": self.config.emitter_model().kind.value, "seed": self.config.root_seed,
        })

        with self.stage("simulate"):
            if self.config.n_jobs != 1 and runs > 1:
                simulated = Parallel(n_jobs=self.config.n_jobs)(
                    delayed(_simulate_run)(self.config, i, detections_per_run, n_pulses) for i in range(runs)
                )
            else:
                simulated = [_simulate_run(self.config, i, detections_per_run, n_pulses) for i in range(runs)]
            streams = [stream for _, stream in simulated]

        with self.stage("write_timestamps"):
            for i, (events, stream) in enumerate(simulated):
                suffix = "" if runs == 1 else f"_run{i + 1:03d}"
                self._record(write_events(events, self._out(f"events{suffix}.csv")), "events")
                self._record(write_timestamps(stream, self._out(f"timestamps{suffix}.csv")), "timestamps")

        with self.stage("alpha"):
            per_run = []
            for i, stream in enumerate(streams):
                result = alpha_from_stream(stream, self.config.gate_ns)
                self.run_logger.log_alpha(i, result.to_dict())
                per_run.append(result)
            report = {
                "gate_ns": self.config.gate_ns,
                "runs": [r.to_dict() for r in per_run],
            }
            if runs > 1:
                report["batch"] = summarize_alphas([r.alpha for r in per_run]).to_dict()
            self._record(write_report(report, self._out("alpha.json")), "alpha")

        with self.stage("histogram"):
            hist = None
            for stream in streams:
                single = delay_histogram(stream, self.config.bin_ns, self.config.window_ns)
                hist = single if hist is None else hist.merge(single)
            self._record(write_histogram(hist, self._out("delays.csv")), "histogram")

        with self.stage("fit_peaks"):
            peaks = self._fit_peaks_report(hist, tolerate_failure=True)
            fits = peaks.pop("_fits", None)
            self._record(write_report(peaks, self._out("peaks.json")), "peaks")

        if self.plot:
            with self.stage("plot"):
                fig = figures.histogram_figure(hist, fits)
                self._record(figures.save_figure(fig, self._out("delays.html")), "figure")

        return self._result("whichpath", alpha=report, peaks=peaks, histogram_total=hist.total)

    def _fit_peaks_report(self, hist: DelayHistogram, tolerate_failure: bool = False) -> Dict:
        try:
            fits = fit_peaks(hist)
        except FitFailureError as e:
            if not tolerate_failure:
                raise
            logger.warning(f"Peak fit skipped: {e}")
            return {"error": str(e), "last_residual": e.last_residual}

        report = {"peaks": [f.to_dict() for f in fits], "_fits": fits}
        report["zero_delay_normalized_area"] = round(zero_delay_fit(fits).normalized_area, 6)
        try:
            summary = lifetime_summary(fits)
            report["lifetime_ns"] = round(summary.lifetime_ns, 4)
            report["lifetime_stderr_ns"] = round(summary.stderr_ns, 4)
            gated = gated_zero_delay_area(fits, self.config.gate_ns, hist.rep_period_ns)
            report["zero_delay_gated_area"] = round(gated.value, 6)
            report["zero_delay_gated_area_stderr"] = round(gated.stderr, 6)
            report["gate_ns"] = gated.gate_ns
        except (InsufficientDataError, ParameterDomainError) as e:
            logger.warning(f"No lifetime summary: {e}")
        self.run_logger.log_fit("peaks", {k: v for k, v in report.items() if k != "_fits"})
        return report

    # analysis of recorded data

    def run_alpha(self, timestamps_path: Path, gate_ns: Optional[float] = None,
                  counting_time_s: Optional[str] = None) -> Dict:
        gate = self.config.gate_ns if gate_ns is None else gate_ns
        self.run_logger.log_run("alpha", {"timestamps": str(timestamps_path), "gate_ns": gate,
                                          "counting_time_s": counting_time_s})
        with self.stage("read_timestamps"):
            stream = read_timestamps(timestamps_path, rep_period_ns=self.config["source.rep_period_ns"])
        with self.stage("alpha"):
            counts = count_gated(stream, gate)
            n_triggers = counts.n_triggers
            if counting_time_s is not None:
                n_triggers = triggers_from_counting_time(counting_time_s, stream.rep_period_ns)
            result = compute_alpha(n_triggers, counts.n1, counts.n2, counts.n_coinc)
            report = {"gate_ns": gate, "n_outside": counts.n_outside, **result.to_dict()}
            self.run_logger.log_alpha(0, report)
            self._record(write_report(report, self._out("alpha.json")), "alpha")
        return self._result("alpha", alpha=report)

    def run_g2(self, timestamps_path: Path, bin_ns: Optional[float] = None,
               window_periods: Optional[float] = None) -> Dict:
        width = self.config.bin_ns if bin_ns is None else bin_ns
        periods = self.config["analysis.window_periods"] if window_periods is None else window_periods
        self.run_logger.log_run("g2", {"timestamps": str(timestamps_path), "bin_ns": width,
                                       "window_periods": periods})
        with self.stage("read_timestamps"):
            stream = read_timestamps(timestamps_path, rep_period_ns=self.config["source.rep_period_ns"])
        with self.stage("histogram"):
            hist = delay_histogram(stream, width, periods * stream.rep_period_ns)
            self._record(write_histogram(hist, self._out("delays.csv")), "histogram")
        if self.plot:
            with self.stage("plot"):
                self._record(figures.save_figure(figures.histogram_figure(hist), self._out("delays.html")),
                             "figure")
        return self._result("g2", bins=len(hist), total=hist.total, bin_width_ns=hist.bin_width_ns)

    def run_fit_peaks(self, histogram_path: Path) -> Dict:
        self.run_logger.log_run("fit-peaks", {"histogram": str(histogram_path)})
        with self.stage("read_histogram"):
            hist = read_histogram(histogram_path, rep_period_ns=None if self._has_period(histogram_path)
                                  else self.config["source.rep_period_ns"])
        with self.stage("fit_peaks"):
            peaks = self._fit_peaks_report(hist)
            fits = peaks.pop("_fits")
            self._record(write_report(peaks, self._out("peaks.json")), "peaks")
        if self.plot:
            with self.stage("plot"):
                fig = figures.histogram_figure(hist, fits)
                self._record(figures.save_figure(fig, self._out("peaks.html")), "figure")
        return self._result("fit-peaks", peaks=peaks)

    @staticmethod
    def _has_period(path: Path) -> bool:
        return "rep_period_ns" in read_sidecar(path)

    # wave optics and detection

    def _pattern(self, z_mm: float):
        config = self.config
        return polychromatic_pattern(config.beam, config.prism, config.spectrum, z_mm, config.magnification,
                                     config.grid, config.kernel, config.n_jobs)

    def run_fringes(self, z_mm: float) -> Dict:
        self.run_logger.log_run("fringes", {"z_mm": z_mm, "spectrum": self.config["spectrum.kind"],
                                            "fwhm_nm": self.config["spectrum.fwhm_nm"]})
        with self.stage("propagate"):
            pattern = self._pattern(z_mm)
        with self.stage("write_pattern"):
            self._record(write_pattern(pattern, self._out("pattern.csv")), "pattern")
            camera = self.config.camera()
            image = extruded_image(pattern, camera.n_cols, camera.n_rows, camera.pixel_pitch_um)
            self._record(write_pgm(self._out("pattern.pgm"), image, maxval=65535), "image")
        with self.stage("metrics"):
            metrics = fringe_metrics(pattern)
            report = {"z_mm": z_mm, "magnification": self.config.magnification, **metrics.to_dict()}
            self._record(write_report(report, self._out("metrics.json")), "metrics")
        if self.plot:
            with self.stage("plot"):
                fig = figures.pattern_figure(pattern, metrics)
                self._record(figures.save_figure(fig, self._out("pattern.html")), "figure")
        return self._result("fringes", metrics=report)

    def run_buildup(self, n_snapshots: int, stride: int, z_mm: Optional[float] = None,
                    pattern_path: Optional[Path] = None) -> Dict:
        """Sample impacts from a pattern file or from the pattern computed at z_mm"""
        self.run_logger.log_run("buildup", {"snapshots": n_snapshots, "stride": stride, "z_mm": z_mm,
                                            "pattern": None if pattern_path is None else str(pattern_path)})
        with self.stage("pattern"):
            if pattern_path is not None:
                pattern = read_pattern(pattern_path)
            elif z_mm is not None:
                pattern = self._pattern(z_mm)
            else:
                raise ParameterDomainError("buildup needs either a pattern file or a z distance")

        camera = self.config.camera()
        with self.stage("sample"):
            series, image = sample_impacts(pattern, camera, n_snapshots)
        with self.stage("write_frames"):
            totals = emit_buildup_frames(series, stride, self._out("frames"))
            self._record(self._out("frames") / "frame_totals.csv", "frame_totals")
            self._record(write_table(totals, self._out("frame_totals.csv")), "frame_totals")
            self._record(write_impacts(series.to_frame(), self._out("impacts.csv")), "impacts")
            profile = bin_columns(image)
            self._record(write_profile(profile, camera.pixel_pitch_um, self._out("profile.csv")), "profile")
        report = {
            "n_snapshots": n_snapshots,
            "stride": stride,
            "n_frames": len(totals),
            "total_counts": image.total_counts,
            "photons_per_snapshot": camera.photons_per_snapshot_mean,
            "calibrated_rate": round(calibrated_rate(image.total_counts, n_snapshots), 4) if n_snapshots else None,
        }
        self._record(write_report(report, self._out("buildup.json")), "buildup")
        if self.plot:
            with self.stage("plot"):
                self._record(figures.save_figure(figures.buildup_figure(totals), self._out("buildup.html")),
                             "figure")
        return self._result("buildup", buildup=report)

    def run_fitz(self, profile_path: Path, z_min_mm: Optional[float] = None,
                 z_max_mm: Optional[float] = None) -> Dict:
        z_range = (
            self.config.z_range[0] if z_min_mm is None else z_min_mm,
            self.config.z_range[1] if z_max_mm is None else z_max_mm,
        )
        self.run_logger.log_run("fitz", {"profile": str(profile_path), "z_range": list(z_range)})
        with self.stage("read_profile"):
            measured = read_pattern(profile_path)
        with self.stage("fit_z"):
            config = self.config
            result = fit_observation_distance(measured, config.beam, config.prism, config.spectrum,
                                              config.magnification, z_range, config.grid,
                                              config["fit.n_coarse"], config.kernel, config.n_jobs)
            report = result.to_dict()
            self.run_logger.log_fit("z", {"z_best_mm": report["z_best_mm"], "sse": report["sse"]})
            self._record(write_report(report, self._out("zfit.json")), "zfit")
            overlay = overlay_frame(measured, result)
            self._record(write_table(overlay, self._out("zfit_overlay.csv"), "%.6g"), "overlay")
        if self.plot:
            with self.stage("plot"):
                self._record(figures.save_figure(figures.overlay_figure(overlay, result.z_best_mm),
                                                 self._out("zfit_overlay.html")), "figure")
                self._record(figures.save_figure(figures.sse_profile_figure(result.profile_frame(),
                                                                            result.z_best_mm),
                                                 self._out("zfit_profile.html")), "figure")
        return self._result("fitz", zfit={k: v for k, v in report.items() if k != "profile"})

    def run_tune_visibility(self, target: float, z_mm: float, config_name: str = "tuned.env") -> Dict:
        """Gaussian spectral width reaching a target central visibility, written as a config file"""
        config = self.config
        self.run_logger.log_run("tune-visibility", {"target": target, "z_mm": z_mm})
        with self.stage("solve"):
            fwhm = spectral_width_for_visibility(
                target, config.beam, config.prism, z_mm,
                center_nm=config["spectrum.center_nm"],
                n_samples=config["spectrum.n_samples"],
                span_sigma=config["spectrum.span_sigma"],
                magnification=config.magnification,
                grid=config.grid,
                kernel=config.kernel,
                n_jobs=config.n_jobs,
            )
        with self.stage("write_config"):
            tuned = config.with_values(spectrum__kind="gaussian", spectrum__fwhm_nm=round(fwhm, 3))
            path = self._out(config_name)
            try:
                path.parent.mkdir(parents=True, exist_ok=True)
                path.write_text(tuned.to_file_text(), encoding="utf-8")
            except OSError as e:
                raise ArtifactError(f"cannot write {path}: {e}") from e
            self._record(path, "config")
            achieved = fringe_metrics(polychromatic_pattern(
                tuned.beam, tuned.prism, tuned.spectrum, z_mm, tuned.magnification, tuned.grid, tuned.kernel,
                tuned.n_jobs,
            )).central_visibility
        report = {"target": target, "z_mm": z_mm, "spectrum_fwhm_nm": round(fwhm, 3),
                  "achieved_visibility": round(achieved, 4), "config": str(path)}
        return self._result("tune-visibility", tuning=report)
