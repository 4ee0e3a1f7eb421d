"""
Plain-text summaries of pipeline results
"""
from typing import Any, Callable, Dict

from src.utils.logging_config import get_logger

logger = get_logger("pipeline")


class SummaryNarrator:
    """Turns an orchestrator result dict into a few lines for the terminal"""

    def __init__(self):
        self.handlers: Dict[str, Callable[[Dict[str, Any]], str]] = {
            "whichpath": self._whichpath,
            "alpha": self._alpha,
            "g2": self._g2,
            "fit-peaks": self._fit_peaks,
            "fringes": self._fringes,
            "buildup": self._buildup,
            "fitz": self._fitz,
            "tune-visibility": self._tune_visibility,
        }

    def narrate(self, result: Dict[str, Any]) -> str:
        if not result.get("success", False):
            stage = result.get("stage", "unknown")
            return f"Failed at stage {stage}: {result.get('error', 'no details')}"

        command = result.get("command", "")
        handler = self.handlers.get(command)
        if handler is None:
            return self._fallback(result)
        try:
            return handler(result)
        except (KeyError, TypeError, ValueError) as e:
            logger.warning(f"Summary for {command} incomplete: {e}")
            return self._fallback(result)

    @staticmethod
    def _fallback(result: Dict[str, Any]) -> str:
        artifacts = result.get("artifacts", [])
        return f"{result.get('command', 'command')} finished, {len(artifacts)} artifact(s) written."

    @staticmethod
    def _alpha_line(alpha: Dict[str, Any]) -> str:
        bound = " (upper bound)" if alpha["stderr_is_upper_bound"] else ""
        return (
            f"alpha = {alpha['alpha']:.3f} +/- {alpha['stderr_alpha']:.3f}{bound} "
            f"[N_T={alpha['n_triggers']:,}, N1={alpha['n1']:,}, N2={alpha['n2']:,}, N_C={alpha['n_coinc']:,}]"
        )

    @staticmethod
    def _peaks_lines(peaks: Dict[str, Any]) -> list:
        if "error" in peaks:
            return [f"Peak fit: {peaks['error']}"]
        lines = [f"Zero-delay peak area, normalized: {peaks['zero_delay_normalized_area']:.3f}"]
        if "zero_delay_gated_area" in peaks:
            lines.append(f"Zero-delay area with floor, {peaks['gate_ns']} ns gate: "
                         f"{peaks['zero_delay_gated_area']:.3f} +/- {peaks['zero_delay_gated_area_stderr']:.3f}")
        if "lifetime_ns" in peaks:
            lines.append(f"Lifetime: {peaks['lifetime_ns']:.2f} +/- {peaks['lifetime_stderr_ns']:.2f} ns "
                         f"over {len(peaks['peaks']) - 1} side peaks")
        return lines

    def _whichpath(self, result: Dict[str, Any]) -> str:
        alpha = result["alpha"]
        lines = []
        if "batch" in alpha:
            batch = alpha["batch"]
            lines.append(f"alpha = {batch['mean_alpha']:.3f} +/- {batch['confidence_halfwidth_95']:.3f} "
                         f"(95%, {batch['n_runs']} runs, gate {alpha['gate_ns']} ns)")
        else:
            lines.append(self._alpha_line(alpha["runs"][0]))
        lines.append(f"Delay histogram: {result['histogram_total']:,} start-stop pairs")
        lines.extend(self._peaks_lines(result["peaks"]))
        return "\n".join(lines)

    def _alpha(self, result: Dict[str, Any]) -> str:
        alpha = result["alpha"]
        return f"{self._alpha_line(alpha)}\nGate {alpha['gate_ns']} ns, {alpha['n_outside']:,} detections outside"

    @staticmethod
    def _g2(result: Dict[str, Any]) -> str:
        return (f"Delay histogram: {result['bins']} bins of {result['bin_width_ns']:.4g} ns, "
                f"{result['total']:,} start-stop pairs")

    def _fit_peaks(self, result: Dict[str, Any]) -> str:
        return "\n".join(self._peaks_lines(result["peaks"]))

    @staticmethod
    def _fringes(result: Dict[str, Any]) -> str:
        m = result["metrics"]
        side = ", ".join(f"{v:.3f}" for v in m["per_fringe_visibility"][:6])
        return (f"z = {m['z_mm']} mm: fringe spacing {m['fringe_spacing_um']:.1f} um, "
                f"central visibility {m['central_visibility']:.3f}\nVisibilities: {side}")

    @staticmethod
    def _buildup(result: Dict[str, Any]) -> str:
        b = result["buildup"]
        return (f"{b['total_counts']:,} photons over {b['n_snapshots']:,} snapshots "
                f"({b['calibrated_rate']} per snapshot), {b['n_frames']} frames")

    @staticmethod
    def _fitz(result: Dict[str, Any]) -> str:
        z = result["zfit"]
        return f"Fitted z = {z['z_best_mm']:.3f} mm (SSE {z['sse']:.4g}, {z['n_evaluations']} evaluations)"

    @staticmethod
    def _tune_visibility(result: Dict[str, Any]) -> str:
        t = result["tuning"]
        return (f"Spectral FWHM {t['spectrum_fwhm_nm']} nm gives central visibility "
                f"{t['achieved_visibility']} (target {t['target']}); config written to {t['config']}")
