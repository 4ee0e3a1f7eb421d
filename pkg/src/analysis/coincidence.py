"""
Gated coincidence counting and the anticorrelation parameter
alpha = N_C * N_T / (N1 * N2)
"""
import math
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from typing import Dict, List, Sequence, Union

import numpy as np
from scipy.optimize import brentq
from scipy.stats import poisson

from src.simulation.emitter import EmitterModel, SourceKind
from src.simulation.whichpath import Channel, TimestampStream
from src.utils.errors import InsufficientDataError, ParameterDomainError, UndefinedAlphaError
from src.utils.logging_config import get_logger

logger = get_logger("coincidence")

Z_95 = 1.96


@dataclass(frozen=True)
class GatedCounts:
    n1: int
    n2: int
    n_coinc: int
    n_triggers: int
    n_outside: int


@dataclass(frozen=True)
class AlphaResult:
    n_triggers: int
    n1: int
    n2: int
    n_coinc: int
    alpha: float
    stderr_alpha: float
    alpha_exact: Fraction
    stderr_is_upper_bound: bool

    def to_dict(self) -> Dict:
        return {
            "n_triggers": self.n_triggers,
            "n1": self.n1,
            "n2": self.n2,
            "n_coinc": self.n_coinc,
            "alpha": round(self.alpha, 3),
            "alpha_exact": f"{self.alpha_exact.numerator}/{self.alpha_exact.denominator}",
            "stderr_alpha": round(self.stderr_alpha, 6),
            "stderr_is_upper_bound": self.stderr_is_upper_bound,
        }


@dataclass(frozen=True)
class BatchAlpha:
    alphas: List[float]
    mean_alpha: float
    confidence_halfwidth_95: float

    def to_dict(self) -> Dict:
        return {
            "n_runs": len(self.alphas),
            "alphas": [round(a, 3) for a in self.alphas],
            "mean_alpha": round(self.mean_alpha, 3),
            "confidence_halfwidth_95": round(self.confidence_halfwidth_95, 3),
        }


def _check_gate(gate_ns: float, rep_period_ns: float):
    if not gate_ns > 0:
        raise ParameterDomainError(f"gate must be positive, got {gate_ns} ns")
    if gate_ns > rep_period_ns:
        raise ParameterDomainError(
            f"gate {gate_ns} ns exceeds the repetition period {rep_period_ns} ns; gates would overlap"
        )


def count_gated(stream: TimestampStream, gate_ns: float) -> GatedCounts:
    """Count detections inside the trigger gates [k*T_rep, k*T_rep + gate)

    A coincidence is a gate holding at least one detection on each path.
    Detections outside every gate are dropped from N1 and N2.
    """
    _check_gate(gate_ns, stream.rep_period_ns)

    gate_index = np.floor(stream.time_ns / stream.rep_period_ns).astype(np.int64)
    in_gate = (stream.time_ns - gate_index * stream.rep_period_ns) < gate_ns

    path1 = in_gate & (stream.channel == Channel.PATH1)
    path2 = in_gate & (stream.channel == Channel.PATH2)
    gates1 = np.unique(gate_index[path1])
    gates2 = np.unique(gate_index[path2])
    n_coinc = int(np.intersect1d(gates1, gates2, assume_unique=True).size)

    counts = GatedCounts(
        n1=int(np.count_nonzero(path1)),
        n2=int(np.count_nonzero(path2)),
        n_coinc=n_coinc,
        n_triggers=stream.n_triggers,
        n_outside=int(np.count_nonzero(~in_gate)),
    )
    logger.debug(f"Gated counts: {counts}")
    return counts


def gate_retention(gate_ns: float, lifetime_ns: float) -> float:
    """Fraction of Exp(tau) emission offsets that fall inside the gate"""
    return -math.expm1(-gate_ns / lifetime_ns)


def triggers_from_counting_time(counting_time_s: Union[str, float], rep_period_ns: Union[str, float]) -> int:
    """N_T = floor(counting time / T_rep), evaluated exactly on the decimal values"""
    time = Fraction(Decimal(str(counting_time_s)))
    period = Fraction(Decimal(str(rep_period_ns))) / 10**9
    return math.floor(time / period)


def compute_alpha(n_triggers: int, n1: int, n2: int, n_coinc: int) -> AlphaResult:
    """Evaluate alpha exactly as a rational number

    The standard error propagates the Poisson error of N_C; with no
    coincidence it is reported as the upper bound N_T / (N1 N2).
    """
    if n1 <= 0 or n2 <= 0:
        raise UndefinedAlphaError(f"alpha is undefined with N1={n1}, N2={n2}")
    if n_coinc < 0 or n_triggers < 0:
        raise ParameterDomainError("counts must be non-negative")

    exact = Fraction(n_coinc * n_triggers, n1 * n2)
    alpha = float(exact)
    if n_coinc >= 1:
        stderr = alpha / math.sqrt(n_coinc)
        upper_bound = False
    else:
        stderr = float(Fraction(n_triggers, n1 * n2))
        upper_bound = True

    return AlphaResult(
        n_triggers=n_triggers,
        n1=n1,
        n2=n2,
        n_coinc=n_coinc,
        alpha=alpha,
        stderr_alpha=stderr,
        alpha_exact=exact,
        stderr_is_upper_bound=upper_bound,
    )


def alpha_from_stream(stream: TimestampStream, gate_ns: float) -> AlphaResult:
    counts = count_gated(stream, gate_ns)
    return compute_alpha(counts.n_triggers, counts.n1, counts.n2, counts.n_coinc)


def summarize_alphas(alphas: Sequence[float]) -> BatchAlpha:
    """Mean alpha with the normal-approximation 95% half-width 1.96 s / sqrt(n)"""
    values = [float(a) for a in alphas]
    if len(values) < 2:
        raise InsufficientDataError(f"need at least 2 runs for a confidence interval, got {len(values)}")
    mean = float(np.mean(values))
    halfwidth = Z_95 * float(np.std(values, ddof=1)) / math.sqrt(len(values))
    return BatchAlpha(alphas=values, mean_alpha=mean, confidence_halfwidth_95=halfwidth)


def batch_alpha(streams: Sequence[TimestampStream], gate_ns: float) -> BatchAlpha:
    if len(streams) < 2:
        raise InsufficientDataError(f"need at least 2 runs for a confidence interval, got {len(streams)}")
    return summarize_alphas([alpha_from_stream(stream, gate_ns).alpha for stream in streams])


def _gate_signal_probability(model: EmitterModel, gate_ns: float) -> float:
    """Probability that the signal photon of one pulse lands inside the gate"""
    truncated = gate_retention(min(gate_ns, model.rep_period_ns), model.lifetime_tau_ns)
    kept = gate_retention(model.rep_period_ns, model.lifetime_tau_ns)
    return truncated / kept


def expected_alpha(model: EmitterModel, gate_ns: float, split_ratio: float = 0.5, max_background: int = 2) -> float:
    """Expected alpha of a single emitter with background, by outcome enumeration

    Each gate holds a signal photon (0 or 1) and k background photons
    (k = 0..max_background, Poisson weights); a gate with n photons is a
    coincidence with probability 1 - s^n - (1 - s)^n.
    """
    if model.kind is not SourceKind.SINGLE_EMITTER:
        raise ParameterDomainError("outcome enumeration is defined for the single emitter")
    _check_gate(gate_ns, model.rep_period_ns)

    q = model.signal_probability * _gate_signal_probability(model, gate_ns)
    b = model.background_per_gate * gate_ns / model.rep_period_ns
    s = split_ratio

    p_coinc = 0.0
    p1 = 0.0
    p2 = 0.0
    for signal, p_signal in ((0, 1.0 - q), (1, q)):
        for k in range(max_background + 1):
            weight = p_signal * poisson.pmf(k, b)
            n = signal + k
            if n > 0:
                p_coinc += weight * (1.0 - s**n - (1.0 - s) ** n)
            p1 += weight * n * s
            p2 += weight * n * (1.0 - s)

    if p1 == 0 or p2 == 0:
        raise UndefinedAlphaError("no detections expected inside the gate")
    return p_coinc / (p1 * p2)


def background_for_target_alpha(target_alpha: float, model: EmitterModel, gate_ns: float,
                                split_ratio: float = 0.5) -> float:
    """Background per period that gives the requested expected alpha"""
    if not 0.0 < target_alpha < 1.0:
        raise ParameterDomainError(f"target alpha must lie in (0, 1), got {target_alpha}")

    def mismatch(background: float) -> float:
        trial = EmitterModel(
            kind=model.kind,
            lifetime_tau_ns=model.lifetime_tau_ns,
            rep_period_ns=model.rep_period_ns,
            mean_detected_per_pulse=model.mean_detected_per_pulse,
            background_per_gate=background,
            excitation_probability=model.excitation_probability,
            rng_seed=model.rng_seed,
        )
        return expected_alpha(trial, gate_ns, split_ratio) - target_alpha

    upper = max(model.signal_probability, 1e-6)
    while mismatch(upper) < 0:
        upper *= 2.0
    return brentq(mismatch, 0.0, upper, xtol=1e-12)
