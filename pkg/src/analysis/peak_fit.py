"""
Two-sided exponential fits of the delay histogram peaks
Each peak at k*T_rep is modelled as A_k * exp(-|delay - k*T_rep| / tau),
integrated over the bin, on top of a flat floor B_k per peak region.
The floor collects pairs with an uncorrelated photon (background spread over
the period). Weights start at max(count, 1) and are then taken from the
model itself, which converges to the Poisson maximum-likelihood solution.
"""
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Sequence, Tuple

import numpy as np
from scipy.optimize import curve_fit, least_squares

from src.analysis.coincidence import gate_retention
from src.analysis.histogram import DelayHistogram
from src.utils.errors import FitFailureError, InsufficientDataError, ParameterDomainError
from src.utils.logging_config import get_logger

logger = get_logger("coincidence")

MIN_PEAKS = 3
SIGNIFICANCE_SIGMA = 5.0
# Peaks with fewer counts keep the shared lifetime
MIN_REFINE_COUNTS = 100
MAX_EVALUATIONS = 2000
REWEIGHT_PASSES = 4
REWEIGHT_TOL = 1e-5
# lower bound on the expected count used as a variance
MIN_VARIANCE = 0.1


@dataclass(frozen=True)
class PeakFit:
    peak_index: int
    peak_center: float
    fitted_lifetime: float
    fitted_lifetime_stderr: float
    amplitude: float
    area: float
    area_stderr: float
    normalized_area: float
    refined: bool
    floor_area: float = 0.0
    floor_area_stderr: float = 0.0

    def to_dict(self) -> Dict:
        return {key: (round(value, 6) if isinstance(value, float) else value) for key, value in asdict(self).items()}


@dataclass(frozen=True)
class LifetimeSummary:
    lifetime_ns: float
    stderr_ns: float
    n_peaks: int


@dataclass(frozen=True)
class GatedArea:
    """Zero-delay area normalized like alpha for coincidences inside one gate"""
    value: float
    stderr: float
    gate_ns: float
    floor_ratio: float


def _exp_primitive(x: np.ndarray, tau: float) -> np.ndarray:
    """Antiderivative of exp(-|x|/tau) that vanishes at 0"""
    return np.sign(x) * tau * -np.expm1(-np.abs(x) / tau)


def bin_profile(centers: np.ndarray, width: float, peak_center: float, tau: float) -> np.ndarray:
    """Integral of exp(-|x - peak_center|/tau) over each bin, per ns of amplitude"""
    lower = centers - width / 2 - peak_center
    upper = centers + width / 2 - peak_center
    return _exp_primitive(upper, tau) - _exp_primitive(lower, tau)


def _peak_regions(hist: DelayHistogram, k_max: int) -> np.ndarray:
    """Peak index of every bin (nearest multiple of T_rep)"""
    return np.floor(hist.centers_ns / hist.rep_period_ns + 0.5).astype(np.int64).clip(-k_max - 1, k_max + 1)


def resolvable_peaks(hist: DelayHistogram) -> List[int]:
    """Peak indices whose core rises significantly above the edges of their region"""
    period = hist.rep_period_ns
    k_max = hist.periods_in_window
    found = []
    for k in range(-k_max, k_max + 1):
        offset = np.abs(hist.centers_ns - k * period)
        core = hist.counts[offset <= period / 8]
        edge = hist.counts[(offset >= 3 * period / 8) & (offset < period / 2)]
        if core.size == 0 or edge.size == 0:
            continue
        baseline = float(edge.mean()) * core.size
        excess = float(core.sum()) - baseline
        if excess > SIGNIFICANCE_SIGMA * math.sqrt(max(baseline, 1.0)):
            found.append(k)
    return found


def _initial_lifetime(hist: DelayHistogram, k: int, floor: float) -> float:
    """Mean absolute offset of the counts above the floor inside one peak region"""
    period = hist.rep_period_ns
    offset = np.abs(hist.centers_ns - k * period)
    mask = offset < period / 2
    weights = np.clip(hist.counts[mask].astype(float) - floor, 0.0, None)
    if weights.sum() <= 0:
        return period / 10
    return float(np.clip(np.average(offset[mask], weights=weights), hist.bin_width_ns, period / 4))


def _edge_floor(hist: DelayHistogram, k: int) -> float:
    """Mean count per bin in the outer quarter of a peak region"""
    offset = np.abs(hist.centers_ns - k * hist.rep_period_ns)
    edge = hist.counts[(offset >= 3 * hist.rep_period_ns / 8) & (offset < hist.rep_period_ns / 2)]
    return float(edge.mean()) if edge.size else 0.0


def _model_sigma(expected: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(expected, MIN_VARIANCE))


def fit_peaks(hist: DelayHistogram) -> List[PeakFit]:
    """Joint shared-lifetime fit of every peak in the window, then per-peak refinement

    Areas are in counts (2 * A_k * tau_k with A_k in counts per ns) and hold the
    exponential part only; floor_area is the flat floor summed over one period.
    normalized_area divides by the mean area of the non-zero-delay peaks.
    """
    resolved = resolvable_peaks(hist)
    if len(resolved) < MIN_PEAKS:
        raise FitFailureError(
            f"histogram has {len(resolved)} resolvable peaks, at least {MIN_PEAKS} are needed"
        )

    period = hist.rep_period_ns
    width = hist.bin_width_ns
    bins_per_period = period / width
    k_max = hist.periods_in_window
    peaks = list(range(-k_max, k_max + 1))
    n_peaks = len(peaks)
    counts = hist.counts.astype(float)
    region = _peak_regions(hist, k_max)
    # bins past the outermost peak share its floor
    floor_index = region.clip(-k_max, k_max) + k_max
    profiles_at = {}

    floor0 = [_edge_floor(hist, k) for k in peaks]
    strongest = max(resolved, key=lambda k: hist.counts[region == k].sum())
    tau0 = _initial_lifetime(hist, strongest, floor0[peaks.index(strongest)])
    amp0 = [
        max(float(counts[region == k].sum()) - floor0[i] * bins_per_period, 0.0) / (2 * tau0)
        for i, k in enumerate(peaks)
    ]
    tau_bounds = (width / 2, period)

    def profiles(tau: float) -> np.ndarray:
        if tau not in profiles_at:
            profiles_at.clear()
            profiles_at[tau] = np.stack([bin_profile(hist.centers_ns, width, k * period, tau) for k in peaks])
        return profiles_at[tau]

    def model(params: np.ndarray) -> np.ndarray:
        amps = params[1:1 + n_peaks]
        floors = params[1 + n_peaks:]
        return amps @ profiles(params[0]) + floors[floor_index]

    x0 = np.array([tau0] + amp0 + floor0)
    lower = np.array([tau_bounds[0]] + [0.0] * (2 * n_peaks))
    upper = np.array([tau_bounds[1]] + [np.inf] * (2 * n_peaks))

    sigma = np.sqrt(np.maximum(counts, 1.0))
    joint = None
    for n_pass in range(REWEIGHT_PASSES + 1):
        def residuals(params: np.ndarray, _sigma=sigma) -> np.ndarray:
            return (model(params) - counts) / _sigma

        try:
            joint_pass = least_squares(residuals, x0, bounds=(lower, upper), max_nfev=MAX_EVALUATIONS,
                                       x_scale="jac")
        except (ValueError, np.linalg.LinAlgError) as e:
            raise FitFailureError(f"joint peak fit failed: {e}") from e
        if not joint_pass.success:
            raise FitFailureError(f"joint peak fit did not converge: {joint_pass.message}",
                                  float(np.sum(joint_pass.fun ** 2)))
        converged = joint is not None and math.isclose(joint_pass.x[0], joint.x[0], rel_tol=REWEIGHT_TOL)
        joint = joint_pass
        x0 = joint.x
        if converged:
            break
        sigma = _model_sigma(model(joint.x))
    logger.debug(f"Joint peak fit settled after {n_pass + 1} weighting pass(es)")

    last_residual = float(np.sum(joint.fun ** 2))
    tau_joint = float(joint.x[0])
    if math.isclose(tau_joint, tau_bounds[0], rel_tol=1e-3) or math.isclose(tau_joint, tau_bounds[1], rel_tol=1e-3):
        raise FitFailureError(f"fitted lifetime {tau_joint:.3f} ns is pinned at its bound", last_residual)

    # covariance of the joint fit from the Jacobian
    try:
        jac_cov = np.linalg.pinv(joint.jac.T @ joint.jac)
    except np.linalg.LinAlgError:
        jac_cov = np.full((len(x0), len(x0)), np.nan)
    tau_joint_err = float(math.sqrt(max(jac_cov[0, 0], 0.0)))
    joint_model = model(joint.x)

    raw = []
    for i, k in enumerate(peaks):
        amp = float(joint.x[1 + i])
        floor = float(joint.x[1 + n_peaks + i])
        amp_err = float(math.sqrt(max(jac_cov[1 + i, 1 + i], 0.0)))
        floor_err = float(math.sqrt(max(jac_cov[1 + n_peaks + i, 1 + n_peaks + i], 0.0)))
        tau, tau_err, refined = tau_joint, tau_joint_err, False
        cov_amp_tau = float(jac_cov[0, 1 + i])

        mask = region == k
        if counts[mask].sum() >= MIN_REFINE_COUNTS:
            try:
                amp, tau, floor, amp_err, tau_err, floor_err, cov_amp_tau = _refine_peak(
                    hist, mask, k, joint_model[mask], amp, tau_joint, floor, tau_bounds,
                )
                refined = True
            except (RuntimeError, ValueError) as e:
                logger.warning(f"Refinement of peak {k} failed, keeping the shared lifetime: {e}")

        area = 2.0 * amp * tau
        # var(2 A tau) by first-order propagation
        area_var = 4.0 * (tau**2 * amp_err**2 + amp**2 * tau_err**2 + 2 * amp * tau * cov_amp_tau)
        raw.append((k, amp, tau, tau_err, area, math.sqrt(max(area_var, 0.0)), refined,
                    floor * bins_per_period, floor_err * bins_per_period))

    side_areas = [entry[4] for entry in raw if entry[0] != 0]
    reference = float(np.mean(side_areas))
    if reference <= 0:
        raise FitFailureError("side peaks have zero area; no Poissonian reference", last_residual)

    fits = [
        PeakFit(
            peak_index=k,
            peak_center=k * period,
            fitted_lifetime=tau,
            fitted_lifetime_stderr=tau_err,
            amplitude=amp,
            area=area,
            area_stderr=area_err,
            normalized_area=area / reference,
            refined=refined,
            floor_area=floor_area,
            floor_area_stderr=floor_err,
        )
        for k, amp, tau, tau_err, area, area_err, refined, floor_area, floor_err in raw
    ]
    logger.info(
        f"Fitted {len(fits)} peaks, shared lifetime {tau_joint:.2f} +/- {tau_joint_err:.2f} ns, "
        f"zero-delay normalized area {fits[len(fits) // 2].normalized_area:.3f}"
    )
    return fits


def _refine_peak(hist: DelayHistogram, mask: np.ndarray, k: int, joint_model: np.ndarray, amp: float,
                 tau: float, floor: float, tau_bounds: Tuple[float, float]) -> Tuple[float, ...]:
    """Amplitude, lifetime and floor of one peak, other peaks' tails held at the joint solution"""
    width = hist.bin_width_ns
    centers = hist.centers_ns[mask]
    observed = hist.counts[mask].astype(float)
    center = k * hist.rep_period_ns
    others = joint_model - amp * bin_profile(centers, width, center, tau) - floor

    def single(x, a, t, b):
        return others + a * bin_profile(x, width, center, t) + b

    params = np.array([max(amp, 1e-9), tau, max(floor, 0.0)])
    expected = joint_model
    for _ in range(REWEIGHT_PASSES):
        popt, pcov = curve_fit(
            single, centers, observed,
            p0=params,
            sigma=_model_sigma(expected), absolute_sigma=True,
            bounds=([0.0, tau_bounds[0], 0.0], [np.inf, tau_bounds[1], np.inf]),
            maxfev=MAX_EVALUATIONS,
        )
        converged = math.isclose(popt[1], params[1], rel_tol=REWEIGHT_TOL)
        params = popt
        expected = single(centers, *popt)
        if converged:
            break
    if not np.all(np.isfinite(pcov)):
        raise ValueError("singular covariance")
    return (float(params[0]), float(params[1]), float(params[2]),
            float(math.sqrt(pcov[0, 0])), float(math.sqrt(pcov[1, 1])), float(math.sqrt(pcov[2, 2])),
            float(pcov[0, 1]))


def zero_delay_fit(fits: Sequence[PeakFit]) -> PeakFit:
    for fit in fits:
        if fit.peak_index == 0:
            return fit
    raise InsufficientDataError("no zero-delay peak among the fits")


def lifetime_summary(fits: Sequence[PeakFit]) -> LifetimeSummary:
    """Inverse-variance weighted lifetime over the non-zero-delay peaks"""
    usable = [f for f in fits if f.peak_index != 0 and f.fitted_lifetime_stderr > 0]
    if not usable:
        raise InsufficientDataError("no non-zero-delay peak with a finite lifetime error")
    weights = np.array([1.0 / f.fitted_lifetime_stderr**2 for f in usable])
    values = np.array([f.fitted_lifetime for f in usable])
    lifetime = float(np.sum(weights * values) / np.sum(weights))
    return LifetimeSummary(lifetime_ns=lifetime, stderr_ns=float(1.0 / math.sqrt(np.sum(weights))), n_peaks=len(usable))


def _gated_ratio(zero_ratio: float, floor_ratio: float, signal_in_gate: float, floor_in_gate: float) -> float:
    """Pair rate inside one gate over the product of the single rates

    floor_ratio is the uncorrelated-photon rate over the correlated-signal rate,
    recovered from floor/side = 2 r + r^2.
    """
    signal = signal_in_gate
    other = floor_in_gate * floor_ratio
    return (zero_ratio * signal**2 + 2 * signal * other + other**2) / (signal + other) ** 2


def gated_zero_delay_area(fits: Sequence[PeakFit], gate_ns: float, rep_period_ns: float) -> GatedArea:
    """Zero-delay area with the fitted floor folded back in, restricted to one gate

    Without a floor this equals the zero-delay normalized_area. With a floor it
    counts the signal-floor and floor-floor pairs a gate of gate_ns keeps, which
    makes it comparable with alpha from gated coincidence counting.
    """
    if not 0 < gate_ns <= rep_period_ns:
        raise ParameterDomainError(f"gate must lie in (0, {rep_period_ns}] ns, got {gate_ns}")
    zero = zero_delay_fit(fits)
    side = [f for f in fits if f.peak_index != 0]
    if not side:
        raise InsufficientDataError("no non-zero-delay peaks to normalize against")

    side_area = float(np.mean([f.area for f in side]))
    side_area_err = math.sqrt(sum(f.area_stderr**2 for f in side)) / len(side)
    side_floor = float(np.mean([f.floor_area for f in side]))
    side_floor_err = math.sqrt(sum(f.floor_area_stderr**2 for f in side)) / len(side)
    if side_area <= 0:
        raise InsufficientDataError("side peaks have zero area")

    q = side_floor / side_area
    q_err = math.hypot(side_floor_err / side_area, q * side_area_err / side_area)
    a0 = zero.area / side_area
    a0_err = math.hypot(zero.area_stderr / side_area, a0 * side_area_err / side_area)

    def rate_ratio(q_value: float) -> float:
        return math.sqrt(1.0 + max(q_value, 0.0)) - 1.0

    f_signal = gate_retention(gate_ns, lifetime_summary(fits).lifetime_ns)
    f_floor = gate_ns / rep_period_ns
    r = rate_ratio(q)
    value = _gated_ratio(a0, r, f_signal, f_floor)

    d_a0 = f_signal**2 / (f_signal + f_floor * r) ** 2
    step = max(q_err, 1e-9)
    d_q = (_gated_ratio(a0, rate_ratio(q + step), f_signal, f_floor)
           - _gated_ratio(a0, rate_ratio(max(q - step, 0.0)), f_signal, f_floor)) / (q + step - max(q - step, 0.0))
    stderr = math.hypot(d_a0 * a0_err, d_q * q_err)
    return GatedArea(value=value, stderr=stderr, gate_ns=gate_ns, floor_ratio=r)
