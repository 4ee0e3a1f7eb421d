"""
Photon source simulation
Generates per-pulse emission events for a triggered single emitter with
background and for an attenuated Poissonian laser
"""
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterator, List, NamedTuple

import numpy as np
import pandas as pd

from src.utils.errors import ParameterDomainError
from src.utils.logging_config import get_logger
from src.utils.rng import block_rng

logger = get_logger("source")

DEFAULT_BLOCK_SIZE = 1_000_000


class SourceKind(str, Enum):
    SINGLE_EMITTER = "emitter"
    POISSON_LASER = "laser"


class Origin(IntEnum):
    SIGNAL = 0
    BACKGROUND = 1

    @property
    def label(self) -> str:
        return "Signal" if self is Origin.SIGNAL else "Background"


@dataclass(frozen=True)
class EmitterModel:
    """Parameters of the photon source

    mean_detected_per_pulse is the laser mean photon number mu, or the
    single-emitter detection probability p_s; all losses are folded in.
    background_per_gate is the Poisson mean of background detections per
    repetition period, spread uniformly over the period.
    """
    kind: SourceKind = SourceKind.SINGLE_EMITTER
    lifetime_tau_ns: float = 44.6
    rep_period_ns: float = 436.0
    mean_detected_per_pulse: float = 0.01
    background_per_gate: float = 0.0
    excitation_probability: float = 1.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        if not self.lifetime_tau_ns > 0:
            raise ParameterDomainError(f"lifetime must be positive, got {self.lifetime_tau_ns} ns")
        if not self.rep_period_ns > 0:
            raise ParameterDomainError(f"repetition period must be positive, got {self.rep_period_ns} ns")
        if self.lifetime_tau_ns >= self.rep_period_ns:
            raise ParameterDomainError(
                f"lifetime {self.lifetime_tau_ns} ns must be shorter than the repetition period "
                f"{self.rep_period_ns} ns"
            )
        if self.mean_detected_per_pulse < 0:
            raise ParameterDomainError(f"mean detected per pulse must be >= 0, got {self.mean_detected_per_pulse}")
        if self.background_per_gate < 0:
            raise ParameterDomainError(f"background must be >= 0, got {self.background_per_gate}")
        if not 0.0 <= self.excitation_probability <= 1.0:
            raise ParameterDomainError(
                f"excitation probability must lie in [0, 1], got {self.excitation_probability}"
            )
        if self.kind is SourceKind.SINGLE_EMITTER and self.signal_probability > 1.0:
            raise ParameterDomainError(
                f"single-emitter detection probability must be <= 1, got {self.mean_detected_per_pulse}"
            )

    @property
    def signal_probability(self) -> float:
        """Per-pulse probability of a detected signal photon (single emitter)"""
        return self.excitation_probability * self.mean_detected_per_pulse

    @property
    def mean_events_per_pulse(self) -> float:
        if self.kind is SourceKind.SINGLE_EMITTER:
            signal = self.signal_probability
        else:
            signal = self.mean_detected_per_pulse
        return signal + self.background_per_gate


class EmissionEvent(NamedTuple):
    pulse_index: int
    time: float
    origin: Origin


@dataclass(frozen=True)
class EmissionEvents:
    """Columnar, time-ordered emission events of one run"""
    pulse_index: np.ndarray
    time_ns: np.ndarray
    origin: np.ndarray
    n_pulses: int
    rep_period_ns: float

    def __len__(self) -> int:
        return int(self.time_ns.size)

    def __iter__(self) -> Iterator[EmissionEvent]:
        for pulse, time, origin in zip(self.pulse_index, self.time_ns, self.origin):
            yield EmissionEvent(int(pulse), float(time), Origin(int(origin)))

    @property
    def n_signal(self) -> int:
        return int(np.count_nonzero(self.origin == Origin.SIGNAL))

    @property
    def n_background(self) -> int:
        return int(np.count_nonzero(self.origin == Origin.BACKGROUND))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "pulse_index": self.pulse_index,
            "time_ns": self.time_ns,
            "origin": np.where(self.origin == Origin.SIGNAL, "Signal", "Background"),
        })

    @classmethod
    def empty(cls, n_pulses: int, rep_period_ns: float) -> "EmissionEvents":
        return cls(
            pulse_index=np.zeros(0, dtype=np.int64),
            time_ns=np.zeros(0, dtype=np.float64),
            origin=np.zeros(0, dtype=np.int8),
            n_pulses=n_pulses,
            rep_period_ns=rep_period_ns,
        )

    @classmethod
    def concatenate(cls, parts: List["EmissionEvents"], n_pulses: int, rep_period_ns: float) -> "EmissionEvents":
        """Join blocks that are already in pulse order"""
        if not parts:
            return cls.empty(n_pulses, rep_period_ns)
        return cls(
            pulse_index=np.concatenate([p.pulse_index for p in parts]),
            time_ns=np.concatenate([p.time_ns for p in parts]),
            origin=np.concatenate([p.origin for p in parts]),
            n_pulses=n_pulses,
            rep_period_ns=rep_period_ns,
        )

    def head(self, n: int) -> "EmissionEvents":
        """First n events; the trigger count ends with the pulse of the last kept event"""
        if n > len(self):
            return self
        n_pulses = int(self.pulse_index[n - 1]) + 1 if n > 0 else 0
        return EmissionEvents(
            pulse_index=self.pulse_index[:n],
            time_ns=self.time_ns[:n],
            origin=self.origin[:n],
            n_pulses=n_pulses,
            rep_period_ns=self.rep_period_ns,
        )


def emission_offsets(rng: np.random.Generator, size: int, tau_ns: float, period_ns: float) -> np.ndarray:
    """Exp(tau) offsets truncated to [0, period) by inverse CDF"""
    kept_mass = -np.expm1(-period_ns / tau_ns)
    u = rng.random(size)
    offsets = -tau_ns * np.log1p(-u * kept_mass)
    # guards the u -> 1 rounding edge
    return np.minimum(offsets, np.nextafter(period_ns, 0.0))


def _generate_block(model: EmitterModel, first_pulse: int, n: int, rng: np.random.Generator) -> EmissionEvents:
    period = model.rep_period_ns
    local = np.arange(n, dtype=np.int64)

    if model.kind is SourceKind.SINGLE_EMITTER:
        fired = rng.random(n) < model.signal_probability
        signal_pulses = first_pulse + local[fired]
    else:
        photons = rng.poisson(model.mean_detected_per_pulse, n)
        signal_pulses = first_pulse + np.repeat(local, photons)

    signal_times = signal_pulses * period + emission_offsets(rng, signal_pulses.size, model.lifetime_tau_ns, period)

    if model.background_per_gate > 0:
        background_counts = rng.poisson(model.background_per_gate, n)
        background_pulses = first_pulse + np.repeat(local, background_counts)
        background_times = background_pulses * period + rng.uniform(0.0, period, background_pulses.size)
    else:
        background_pulses = np.zeros(0, dtype=np.int64)
        background_times = np.zeros(0, dtype=np.float64)

    pulses = np.concatenate([signal_pulses, background_pulses])
    times = np.concatenate([signal_times, background_times])
    origin = np.concatenate([
        np.full(signal_pulses.size, Origin.SIGNAL, dtype=np.int8),
        np.full(background_pulses.size, Origin.BACKGROUND, dtype=np.int8),
    ])
    order = np.argsort(times, kind="stable")

    return EmissionEvents(
        pulse_index=pulses[order],
        time_ns=times[order],
        origin=origin[order],
        n_pulses=n,
        rep_period_ns=period,
    )


def generate_pulse_train(model: EmitterModel, n_pulses: int, block_size: int = DEFAULT_BLOCK_SIZE) -> EmissionEvents:
    """Emission events for n_pulses consecutive trigger pulses

    Pulses are generated in blocks; block b draws from a generator seeded by
    (model.rng_seed, b), so the stream does not depend on how it is consumed.
    """
    if n_pulses < 0:
        raise ParameterDomainError(f"n_pulses must be >= 0, got {n_pulses}")
    if block_size < 1:
        raise ParameterDomainError(f"block_size must be >= 1, got {block_size}")

    parts = []
    for block_index, first_pulse in enumerate(range(0, n_pulses, block_size)):
        count = min(block_size, n_pulses - first_pulse)
        parts.append(_generate_block(model, first_pulse, count, block_rng(model.rng_seed, block_index)))

    events = EmissionEvents.concatenate(parts, n_pulses, model.rep_period_ns)
    logger.debug(
        f"Generated {len(events):,} events ({events.n_signal:,} signal) "
        f"over {n_pulses:,} pulses, source={model.kind.value}"
    )
    return events


def generate_detections(model: EmitterModel, n_detections: int, block_size: int = DEFAULT_BLOCK_SIZE,
                        max_pulses: int = 10**10) -> EmissionEvents:
    """Generate pulses until n_detections events exist and keep exactly the first n_detections"""
    if n_detections < 0:
        raise ParameterDomainError(f"n_detections must be >= 0, got {n_detections}")
    if n_detections == 0:
        return EmissionEvents.empty(0, model.rep_period_ns)
    if model.mean_events_per_pulse <= 0:
        raise ParameterDomainError("source emits no photons; cannot reach the requested detection count")

    parts = []
    total = 0
    n_pulses = 0
    block_index = 0
    while total < n_detections:
        if n_pulses >= max_pulses:
            raise ParameterDomainError(
                f"{n_detections:,} detections not reached within {max_pulses:,} pulses"
            )
        block = _generate_block(model, n_pulses, block_size, block_rng(model.rng_seed, block_index))
        parts.append(block)
        total += len(block)
        n_pulses += block_size
        block_index += 1

    events = EmissionEvents.concatenate(parts, n_pulses, model.rep_period_ns).head(n_detections)
    logger.info(
        f"Collected {len(events):,} detections over {events.n_pulses:,} pulses, source={model.kind.value}"
    )
    return events
